#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cine/errors.hpp"
#include "cine/screenplay.hpp"
#include "cine/visual_memory.hpp"

namespace cine {

enum class BackendKind { Understanding, ImageGen, VideoGen, Judge, Embed };
std::string to_string(BackendKind k);
BackendKind backend_kind_from_string(const std::string& s);

enum class Dimension { Quality, Identity, Environment, Plot };
std::string to_string(Dimension d);
Dimension dimension_from_string(const std::string& s);
inline constexpr Dimension kAllDimensions[] = {Dimension::Quality, Dimension::Identity,
                                               Dimension::Environment, Dimension::Plot};

struct ImageGenRequest {
    std::string prompt;
    std::vector<std::string> references;  // priority order, environment first
    int width = 0;
    int height = 0;
    std::optional<std::uint64_t> seed;
};

inline constexpr std::size_t kMaxReferences = 16;

// Validates the request contract shared by every adapter; throws
// std::invalid_argument before anything is dispatched.
void check_request(const ImageGenRequest& req);

struct VideoGenRequest {
    std::string keyframe;  // primary visual guide
    std::vector<std::string> references;
    std::string i2v_prompt;
    double duration = 6.0;  // seconds, must be within [4, 8]
    std::optional<std::uint64_t> seed;
};

void check_request(const VideoGenRequest& req);

struct ClipHandle {
    std::string path;
    double duration = 0.0;
};

// Backend output before the pipeline persists it. `tags` is the sidecar the
// mock emits (null from real adapters); `descriptor` likewise for clips.
struct GeneratedImage {
    std::vector<std::uint8_t> png;
    json tags = nullptr;
};

struct GeneratedClip {
    double duration = 0.0;
    json descriptor = nullptr;            // mock stub content
    std::vector<std::uint8_t> media;      // real media bytes, empty from mocks
    std::string media_extension = "mp4";  // "json" for descriptor-only clips
};

struct JudgeVerdict {
    Dimension dimension = Dimension::Quality;
    double score = 0.0;  // [0, 10]
    bool pass = false;   // score >= configured threshold
    std::string rationale;

    json to_json() const;
    static JudgeVerdict from_json(const json& j);
};

// A rectangular view into an image file, optionally scoped to a character or
// the background. Whole-image regions leave `rect` unset.
struct Region {
    enum class Kind { Whole, Character, Background };
    std::string path;
    Kind kind = Kind::Whole;
    std::string character_id;  // set iff kind == Character
    std::optional<std::array<int, 4>> rect;  // x, y, w, h

    static Region whole(std::string p) { return {std::move(p), Kind::Whole, {}, std::nullopt}; }
    static Region character(std::string p, std::string id) {
        return {std::move(p), Kind::Character, std::move(id), std::nullopt};
    }
    static Region background(std::string p) {
        return {std::move(p), Kind::Background, {}, std::nullopt};
    }
};

struct JudgeContext {
    const MemoryPackage* package = nullptr;
    const Shot* shot = nullptr;
};

// ---- the five contracts ----

class UnderstandingBackend {
public:
    virtual ~UnderstandingBackend() = default;
    // Returns screenplay JSON text; callers validate via understand_validated.
    virtual std::string understand(const std::string& source, const std::string& instructions) = 0;
};

class ImageGenBackend {
public:
    virtual ~ImageGenBackend() = default;
    virtual GeneratedImage generate_image(const ImageGenRequest& req) = 0;
};

class VideoGenBackend {
public:
    virtual ~VideoGenBackend() = default;
    virtual GeneratedClip generate_video(const VideoGenRequest& req) = 0;
};

class JudgeBackend {
public:
    virtual ~JudgeBackend() = default;
    // content: a keyframe PNG path or a clip handle path (.json descriptor).
    virtual JudgeVerdict judge(const std::string& content, const JudgeContext& ctx, Dimension dim,
                               double threshold) = 0;
    // 0-10 match between a region and a single reference image.
    virtual JudgeVerdict judge_region_match(const Region& region, const std::string& reference,
                                            double threshold) = 0;
    // 0-10 semantic agreement between two texts.
    virtual JudgeVerdict judge_text(const std::string& reference, const std::string& candidate,
                                    double threshold) = 0;
    // 0-10 group-level consistency over keyframes of one scene; expectations
    // carry one {scene, characters[], plot} record per image.
    virtual JudgeVerdict judge_group(const std::vector<std::string>& images,
                                     const json& expectations, Dimension dim, double threshold) = 0;
};

class EmbedBackend {
public:
    virtual ~EmbedBackend() = default;
    // Symmetric similarity in [-1, 1] ([0, 1] for mocks).
    virtual double embed_similarity(const Region& a, const Region& b) = 0;
};

struct BackendSet {
    std::shared_ptr<UnderstandingBackend> understanding;
    std::shared_ptr<ImageGenBackend> image_gen;
    std::shared_ptr<VideoGenBackend> video_gen;
    std::shared_ptr<JudgeBackend> judge;
    std::shared_ptr<EmbedBackend> embed;
};

// Runs fn, retrying on TransportError up to `retries` extra attempts.
template <typename Fn>
auto with_transport_retries(int retries, Fn&& fn) -> decltype(fn()) {
    for (int attempt = 0;; ++attempt) {
        try {
            return fn();
        } catch (const TransportError&) {
            if (attempt >= retries) throw;
        }
    }
}

// Calls understand, parses and validates the result; throws
// NonconformingOutput (with the findings text) when the screenplay schema or
// an error-level invariant is violated.
Screenplay understand_validated(UnderstandingBackend& backend, const std::string& source,
                                const std::string& instructions);

// Bounded admission gate enforcing a backend's max_concurrent.
class AdmissionGate {
public:
    explicit AdmissionGate(int slots);
    void acquire();
    void release();

    class Ticket {
    public:
        explicit Ticket(AdmissionGate& g) : gate_(&g) { gate_->acquire(); }
        ~Ticket() { gate_->release(); }
        Ticket(const Ticket&) = delete;
        Ticket& operator=(const Ticket&) = delete;

    private:
        AdmissionGate* gate_;
    };

private:
    struct Impl;
    std::shared_ptr<Impl> impl_;
};

}  // namespace cine
