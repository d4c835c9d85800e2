#include "cine/http_backends.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <httplib.h>

#include "cine/errors.hpp"
#include "cine/run_config.hpp"

namespace cine {

namespace {

constexpr const char* kB64Chars =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoFailure("cannot read " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// File paths become base64 payloads; anything else is passed through as a URL.
json reference_payload(const std::string& ref) {
    if (std::filesystem::exists(ref)) {
        std::string bytes = read_file_bytes(ref);
        return {{"name", std::filesystem::path(ref).filename().string()},
                {"base64", base64_encode(std::vector<std::uint8_t>(bytes.begin(), bytes.end()))}};
    }
    return {{"url", ref}};
}

json region_payload(const Region& r) {
    json j = reference_payload(r.path);
    switch (r.kind) {
        case Region::Kind::Whole: j["kind"] = "whole"; break;
        case Region::Kind::Character:
            j["kind"] = "character";
            j["character_id"] = r.character_id;
            break;
        case Region::Kind::Background: j["kind"] = "background"; break;
    }
    if (r.rect) j["rect"] = {{"x", (*r.rect)[0]}, {"y", (*r.rect)[1]}, {"w", (*r.rect)[2]}, {"h", (*r.rect)[3]}};
    return j;
}

}  // namespace

std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    for (std::size_t i = 0; i < bytes.size(); i += 3) {
        std::uint32_t chunk = std::uint32_t(bytes[i]) << 16;
        if (i + 1 < bytes.size()) chunk |= std::uint32_t(bytes[i + 1]) << 8;
        if (i + 2 < bytes.size()) chunk |= bytes[i + 2];
        out += kB64Chars[(chunk >> 18) & 63];
        out += kB64Chars[(chunk >> 12) & 63];
        out += i + 1 < bytes.size() ? kB64Chars[(chunk >> 6) & 63] : '=';
        out += i + 2 < bytes.size() ? kB64Chars[chunk & 63] : '=';
    }
    return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
    auto value_of = [](char c) -> int {
        if (c >= 'A' && c <= 'Z') return c - 'A';
        if (c >= 'a' && c <= 'z') return c - 'a' + 26;
        if (c >= '0' && c <= '9') return c - '0' + 52;
        if (c == '+') return 62;
        if (c == '/') return 63;
        return -1;
    };
    std::vector<std::uint8_t> out;
    int buffer = 0, bits = 0;
    for (char c : text) {
        if (c == '=' || c == '\n' || c == '\r') continue;
        int v = value_of(c);
        if (v < 0) continue;
        buffer = (buffer << 6) | v;
        bits += 6;
        if (bits >= 8) {
            bits -= 8;
            out.push_back(std::uint8_t((buffer >> bits) & 0xff));
        }
    }
    return out;
}

struct HttpClientBase::Impl {
    std::string base;  // scheme://host:port
    std::string path;  // request path
    std::string auth_env_var;
    std::string model_name;
    double timeout = 30.0;

    std::string bearer() const {
        if (auth_env_var.empty()) return {};
        const char* value = std::getenv(auth_env_var.c_str());
        if (!value) throw ConfigError("credential environment variable " + auth_env_var + " is not set");
        return value;
    }
};

HttpClientBase::HttpClientBase(const BackendConfig& config) : impl_(std::make_unique<Impl>()) {
    const std::string& url = config.endpoint;
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw ConfigError("endpoint is not a URL: " + url);
    auto path_start = url.find('/', scheme_end + 3);
    impl_->base = path_start == std::string::npos ? url : url.substr(0, path_start);
    impl_->path = path_start == std::string::npos ? "/" : url.substr(path_start);
    impl_->auth_env_var = config.auth_env_var;
    impl_->model_name = config.model_name;
    impl_->timeout = config.timeout;
}

HttpClientBase::~HttpClientBase() = default;

std::string HttpClientBase::model_name() const { return impl_->model_name; }

HttpClientBase::Response HttpClientBase::post_json(const json& body) {
    httplib::Client client(impl_->base);
    client.set_connection_timeout(std::chrono::milliseconds(long(impl_->timeout * 1000)));
    client.set_read_timeout(std::chrono::milliseconds(long(impl_->timeout * 1000)));
    httplib::Headers headers;
    std::string token = impl_->bearer();
    if (!token.empty()) headers.emplace("Authorization", "Bearer " + token);

    auto res = client.Post(impl_->path, headers, body.dump(), "application/json");
    if (!res) throw TransportError(httplib::to_string(res.error()) + " talking to " + impl_->base);
    if (res->status >= 500)
        throw TransportError("HTTP " + std::to_string(res->status) + " from " + impl_->base);
    if (res->status >= 400)
        throw BackendRefusal("HTTP " + std::to_string(res->status) + ": " + res->body);
    return {res->status, res->body, res->get_header_value("Content-Type")};
}

json HttpClientBase::post_json_expect_json(const json& body) {
    Response res = post_json(body);
    try {
        return json::parse(res.body);
    } catch (const json::parse_error& e) {
        throw TransportError(std::string("malformed JSON response: ") + e.what());
    }
}

std::string HttpUnderstanding::understand(const std::string& source,
                                          const std::string& instructions) {
    json body = {{"source", source}, {"instructions", instructions}, {"model", model_name()}};
    return post_json(body).body;
}

GeneratedImage HttpImageGen::generate_image(const ImageGenRequest& req) {
    check_request(req);
    json refs = json::array();
    for (const auto& r : req.references) refs.push_back(reference_payload(r));
    json body = {{"prompt", req.prompt},
                 {"references", std::move(refs)},
                 {"width", req.width},
                 {"height", req.height},
                 {"model", model_name()}};
    if (req.seed) body["seed"] = *req.seed;
    Response res = post_json(body);

    GeneratedImage out;
    if (res.content_type.rfind("image/png", 0) == 0) {
        out.png.assign(res.body.begin(), res.body.end());
        return out;
    }
    json j;
    try {
        j = json::parse(res.body);
    } catch (const json::parse_error&) {
        throw TransportError("image response is neither image/png nor JSON");
    }
    out.png = base64_decode(j.at("image_base64").get<std::string>());
    return out;
}

GeneratedClip HttpVideoGen::generate_video(const VideoGenRequest& req) {
    check_request(req);
    json refs = json::array();
    for (const auto& r : req.references) refs.push_back(reference_payload(r));
    json body = {{"keyframe", reference_payload(req.keyframe)},
                 {"references", std::move(refs)},
                 {"i2v_prompt", req.i2v_prompt},
                 {"duration", req.duration},
                 {"model", model_name()}};
    if (req.seed) body["seed"] = *req.seed;
    json j = post_json_expect_json(body);

    GeneratedClip clip;
    clip.duration = j.value("duration", req.duration);
    clip.media = base64_decode(j.value("video_base64", ""));
    clip.media_extension = "mp4";
    return clip;
}

namespace {

JudgeVerdict verdict_from_response(const json& j, Dimension dim, double threshold) {
    JudgeVerdict v;
    v.dimension = dim;
    v.score = j.at("score").get<double>();
    v.pass = v.score >= threshold;
    v.rationale = j.value("rationale", "");
    return v;
}

}  // namespace

JudgeVerdict HttpJudge::judge(const std::string& content, const JudgeContext& ctx, Dimension dim,
                              double threshold) {
    json body = {{"mode", "content"},
                 {"content", reference_payload(content)},
                 {"dimension", to_string(dim)},
                 {"model", model_name()}};
    if (ctx.package) body["package"] = ctx.package->to_json();
    if (ctx.shot) {
        body["shot"] = {{"shot_id", ctx.shot->shot_id},
                        {"scene_id", ctx.shot->scene_id},
                        {"characters", ctx.shot->characters},
                        {"action", ctx.shot->subject_movement.action},
                        {"I2V_Prompt", ctx.shot->i2v_prompt},
                        {"Language_to_One_Shot_Prompt", ctx.shot->one_shot_prompt}};
    }
    return verdict_from_response(post_json_expect_json(body), dim, threshold);
}

JudgeVerdict HttpJudge::judge_region_match(const Region& region, const std::string& reference,
                                           double threshold) {
    json body = {{"mode", "region_match"},
                 {"region", region_payload(region)},
                 {"reference", reference_payload(reference)},
                 {"model", model_name()}};
    return verdict_from_response(post_json_expect_json(body), Dimension::Identity, threshold);
}

JudgeVerdict HttpJudge::judge_text(const std::string& reference, const std::string& candidate,
                                   double threshold) {
    json body = {{"mode", "text"},
                 {"reference", reference},
                 {"candidate", candidate},
                 {"model", model_name()}};
    return verdict_from_response(post_json_expect_json(body), Dimension::Plot, threshold);
}

JudgeVerdict HttpJudge::judge_group(const std::vector<std::string>& images,
                                    const json& expectations, Dimension dim, double threshold) {
    json imgs = json::array();
    for (const auto& p : images) imgs.push_back(reference_payload(p));
    json body = {{"mode", "group"},
                 {"images", std::move(imgs)},
                 {"expectations", expectations},
                 {"dimension", to_string(dim)},
                 {"model", model_name()}};
    return verdict_from_response(post_json_expect_json(body), dim, threshold);
}

double HttpEmbed::embed_similarity(const Region& a, const Region& b) {
    json body = {{"a", region_payload(a)}, {"b", region_payload(b)}, {"model", model_name()}};
    return post_json_expect_json(body).at("similarity").get<double>();
}

}  // namespace cine
