#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "cine/backends.hpp"
#include "cine/mock_backends.hpp"
#include "cine/verifier.hpp"

namespace cine {

struct MockSettings {
    double fault_rate = 0.0;
    std::set<DriftKind> drift_kinds = {DriftKind::IdentitySwap, DriftKind::BackgroundMutation,
                                       DriftKind::CharacterCount, DriftKind::PlotMismatch};
};

struct BackendConfig {
    BackendKind kind = BackendKind::Understanding;
    std::string endpoint = "mock";  // "mock" or an http(s) URL
    std::string auth_env_var;       // credential env var name, never the credential
    std::string model_name = "offline-mock";
    double timeout = 30.0;  // seconds
    int max_concurrent = 1;
    int retry_on_transport_error = 0;
    std::optional<MockSettings> mock;

    bool is_mock() const { return endpoint == "mock" || endpoint.rfind("mock:", 0) == 0; }
};

struct RunConfig {
    std::map<BackendKind, BackendConfig> backends;  // one entry per kind
    AuditThresholds thresholds;
    int parallelism = 1;
    double clip_duration = 6.0;  // clamped into [4, 8] at dispatch
    std::string stitch_cmd;      // external template with {edl} and {out}
    bool strict_stitch = false;
    std::uint64_t seed = 0;
    std::string style_prompt = "STYLE: REALISTIC CINEMATIC. Faithful shot-for-shot remake.";
    std::string stop_after;  // stage name for controlled interruption; empty runs to completion
    // Ablation switch: condition every shot on the whole roster instead of
    // shot-scoped allocation.
    bool global_context = false;

    int max_retries() const { return thresholds.max_retries; }

    json to_json() const;
    static RunConfig from_json(const json& j);
    static RunConfig offline_defaults();  // all five backends mocked
    void validate() const;                // throws ConfigError
};

RunConfig load_run_config(const std::string& path);

// Instantiates the five backends per config (mock or HTTP adapter).
BackendSet make_backends(const RunConfig& config);

}  // namespace cine
