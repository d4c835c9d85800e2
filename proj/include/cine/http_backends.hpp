#pragma once

#include <string>

#include "cine/backends.hpp"

namespace cine {

struct BackendConfig;

// Generic JSON-over-HTTP adapters. One POST per call:
//   understanding: {source, instructions, model, seed?} -> screenplay JSON body
//   image_gen:     {prompt, references[], width, height, model, seed?} -> image/png body
//   video_gen:     {keyframe, references[], i2v_prompt, duration, model, seed?}
//                  -> {duration, video_base64}
//   judge:         {mode, model, ...} -> {score, rationale}
//   embed:         {a, b, model} -> {similarity}
// References and image payloads are sent base64-encoded when the path exists
// locally, or passed through verbatim (treated as URLs) otherwise.
// Credentials come exclusively from the environment variable the config
// names. Connection failures and 5xx map to TransportError (retryable by the
// caller); 4xx maps to BackendRefusal.

std::string base64_encode(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> base64_decode(const std::string& text);

class HttpClientBase {
public:
    explicit HttpClientBase(const BackendConfig& config);
    virtual ~HttpClientBase();

protected:
    struct Response {
        int status = 0;
        std::string body;
        std::string content_type;
    };
    Response post_json(const json& body);
    json post_json_expect_json(const json& body);
    std::string model_name() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

class HttpUnderstanding : public UnderstandingBackend, HttpClientBase {
public:
    explicit HttpUnderstanding(const BackendConfig& config) : HttpClientBase(config) {}
    std::string understand(const std::string& source, const std::string& instructions) override;
};

class HttpImageGen : public ImageGenBackend, HttpClientBase {
public:
    explicit HttpImageGen(const BackendConfig& config) : HttpClientBase(config) {}
    GeneratedImage generate_image(const ImageGenRequest& req) override;
};

class HttpVideoGen : public VideoGenBackend, HttpClientBase {
public:
    explicit HttpVideoGen(const BackendConfig& config) : HttpClientBase(config) {}
    GeneratedClip generate_video(const VideoGenRequest& req) override;
};

class HttpJudge : public JudgeBackend, HttpClientBase {
public:
    explicit HttpJudge(const BackendConfig& config) : HttpClientBase(config) {}
    JudgeVerdict judge(const std::string& content, const JudgeContext& ctx, Dimension dim,
                       double threshold) override;
    JudgeVerdict judge_region_match(const Region& region, const std::string& reference,
                                    double threshold) override;
    JudgeVerdict judge_text(const std::string& reference, const std::string& candidate,
                            double threshold) override;
    JudgeVerdict judge_group(const std::vector<std::string>& images, const json& expectations,
                             Dimension dim, double threshold) override;
};

class HttpEmbed : public EmbedBackend, HttpClientBase {
public:
    explicit HttpEmbed(const BackendConfig& config) : HttpClientBase(config) {}
    double embed_similarity(const Region& a, const Region& b) override;
};

}  // namespace cine
