#include "cine/run_config.hpp"

#include <fstream>

#include "cine/errors.hpp"
#include "cine/http_backends.hpp"

namespace cine {

namespace {

json mock_settings_to_json(const MockSettings& m) {
    std::vector<std::string> kinds;
    for (DriftKind k : m.drift_kinds) kinds.push_back(to_string(k));
    return {{"fault_rate", m.fault_rate}, {"drift_kinds", kinds}};
}

MockSettings mock_settings_from_json(const json& j) {
    MockSettings m;
    m.fault_rate = j.value("fault_rate", 0.0);
    if (j.contains("drift_kinds")) {
        m.drift_kinds.clear();
        for (const auto& k : j["drift_kinds"]) m.drift_kinds.insert(drift_kind_from_string(k));
    }
    return m;
}

json backend_to_json(const BackendConfig& b) {
    json j = {{"endpoint", b.endpoint},
              {"auth_env_var", b.auth_env_var},
              {"model_name", b.model_name},
              {"timeout", b.timeout},
              {"max_concurrent", b.max_concurrent},
              {"retry_on_transport_error", b.retry_on_transport_error}};
    if (b.mock) j["mock"] = mock_settings_to_json(*b.mock);
    return j;
}

BackendConfig backend_from_json(BackendKind kind, const json& j) {
    BackendConfig b;
    b.kind = kind;
    b.endpoint = j.value("endpoint", "mock");
    b.auth_env_var = j.value("auth_env_var", "");
    b.model_name = j.value("model_name", "offline-mock");
    b.timeout = j.value("timeout", 30.0);
    b.max_concurrent = j.value("max_concurrent", 1);
    b.retry_on_transport_error = j.value("retry_on_transport_error", 0);
    if (j.contains("mock")) b.mock = mock_settings_from_json(j["mock"]);
    return b;
}

}  // namespace

json RunConfig::to_json() const {
    json jb = json::object();
    for (const auto& [kind, b] : backends) jb[to_string(kind)] = backend_to_json(b);
    return {{"backends", std::move(jb)},
            {"thresholds",
             {{"quality", thresholds.quality},
              {"identity", thresholds.identity},
              {"environment", thresholds.environment},
              {"plot", thresholds.plot},
              {"face_match_accept", thresholds.face_match_accept},
              {"fallback_switch", thresholds.fallback_switch}}},
            {"max_retries", thresholds.max_retries},
            {"parallelism", parallelism},
            {"clip_duration", clip_duration},
            {"stitch_cmd", stitch_cmd},
            {"strict_stitch", strict_stitch},
            {"seed", seed},
            {"style_prompt", style_prompt},
            {"stop_after", stop_after},
            {"global_context", global_context}};
}

RunConfig RunConfig::from_json(const json& j) {
    RunConfig c = offline_defaults();
    if (j.contains("backends")) {
        for (auto it = j["backends"].begin(); it != j["backends"].end(); ++it) {
            BackendKind kind = backend_kind_from_string(it.key());
            c.backends[kind] = backend_from_json(kind, it.value());
        }
    }
    if (j.contains("thresholds")) {
        const json& t = j["thresholds"];
        c.thresholds.quality = t.value("quality", 7.0);
        c.thresholds.identity = t.value("identity", 7.0);
        c.thresholds.environment = t.value("environment", 7.0);
        c.thresholds.plot = t.value("plot", 7.0);
        c.thresholds.face_match_accept = t.value("face_match_accept", 0.75);
        c.thresholds.fallback_switch = t.value("fallback_switch", 0.5);
    }
    c.thresholds.max_retries = j.value("max_retries", 3);
    c.parallelism = j.value("parallelism", 1);
    c.clip_duration = j.value("clip_duration", 6.0);
    c.stitch_cmd = j.value("stitch_cmd", "");
    c.strict_stitch = j.value("strict_stitch", false);
    c.seed = j.value("seed", std::uint64_t(0));
    c.style_prompt = j.value("style_prompt", c.style_prompt);
    c.stop_after = j.value("stop_after", "");
    c.global_context = j.value("global_context", false);
    return c;
}

RunConfig RunConfig::offline_defaults() {
    RunConfig c;
    for (BackendKind kind : {BackendKind::Understanding, BackendKind::ImageGen,
                             BackendKind::VideoGen, BackendKind::Judge, BackendKind::Embed}) {
        BackendConfig b;
        b.kind = kind;
        b.endpoint = "mock";
        b.mock = MockSettings{};
        c.backends[kind] = b;
    }
    return c;
}

void RunConfig::validate() const {
    for (const auto& [kind, b] : backends) {
        if (b.timeout <= 0)
            throw ConfigError(to_string(kind) + ": timeout must be positive");
        if (b.max_concurrent < 1)
            throw ConfigError(to_string(kind) + ": max_concurrent must be >= 1");
        if (b.retry_on_transport_error < 0)
            throw ConfigError(to_string(kind) + ": retry count must be >= 0");
        if (!b.is_mock() && b.endpoint.rfind("http", 0) != 0)
            throw ConfigError(to_string(kind) + ": endpoint must be \"mock\" or an http(s) URL");
        if (b.mock && (b.mock->fault_rate < 0 || b.mock->fault_rate > 1))
            throw ConfigError(to_string(kind) + ": fault_rate must be within [0, 1]");
    }
    auto in10 = [](double v) { return v >= 0 && v <= 10; };
    if (!in10(thresholds.quality) || !in10(thresholds.identity) || !in10(thresholds.environment) ||
        !in10(thresholds.plot))
        throw ConfigError("dimension thresholds must be within [0, 10]");
    if (thresholds.face_match_accept < 0 || thresholds.face_match_accept > 1 ||
        thresholds.fallback_switch < 0 || thresholds.fallback_switch > 1)
        throw ConfigError("face thresholds must be within [0, 1]");
    if (thresholds.max_retries < 0) throw ConfigError("max_retries must be >= 0");
    if (parallelism < 1) throw ConfigError("parallelism must be >= 1");
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    RunConfig c = RunConfig::from_json(j);
    c.validate();
    return c;
}

BackendSet make_backends(const RunConfig& config) {
    BackendSet set;
    for (const auto& [kind, b] : config.backends) {
        if (b.is_mock()) {
            MockWorld world;
            world.seed = config.seed;
            if (b.mock) {
                world.fault_rate = b.mock->fault_rate;
                world.drift_kinds = b.mock->drift_kinds;
            }
            switch (kind) {
                case BackendKind::Understanding:
                    set.understanding = std::make_shared<MockUnderstanding>(world);
                    break;
                case BackendKind::ImageGen:
                    set.image_gen = std::make_shared<MockImageGen>(world);
                    break;
                case BackendKind::VideoGen:
                    set.video_gen = std::make_shared<MockVideoGen>(world);
                    break;
                case BackendKind::Judge:
                    set.judge = std::make_shared<MockJudge>(world);
                    break;
                case BackendKind::Embed:
                    set.embed = std::make_shared<MockEmbed>(world);
                    break;
            }
        } else {
            switch (kind) {
                case BackendKind::Understanding:
                    set.understanding = std::make_shared<HttpUnderstanding>(b);
                    break;
                case BackendKind::ImageGen:
                    set.image_gen = std::make_shared<HttpImageGen>(b);
                    break;
                case BackendKind::VideoGen:
                    set.video_gen = std::make_shared<HttpVideoGen>(b);
                    break;
                case BackendKind::Judge:
                    set.judge = std::make_shared<HttpJudge>(b);
                    break;
                case BackendKind::Embed:
                    set.embed = std::make_shared<HttpEmbed>(b);
                    break;
            }
        }
    }
    return set;
}

}  // namespace cine
