#include "cine/backends.hpp"

#include <condition_variable>
#include <mutex>

#include "cine/errors.hpp"

namespace cine {

std::string to_string(BackendKind k) {
    switch (k) {
        case BackendKind::Understanding: return "understanding";
        case BackendKind::ImageGen: return "image_gen";
        case BackendKind::VideoGen: return "video_gen";
        case BackendKind::Judge: return "judge";
        case BackendKind::Embed: return "embed";
    }
    return "unknown";
}

BackendKind backend_kind_from_string(const std::string& s) {
    if (s == "understanding") return BackendKind::Understanding;
    if (s == "image_gen") return BackendKind::ImageGen;
    if (s == "video_gen") return BackendKind::VideoGen;
    if (s == "judge") return BackendKind::Judge;
    if (s == "embed") return BackendKind::Embed;
    throw ConfigError("unknown backend kind \"" + s + "\"");
}

std::string to_string(Dimension d) {
    switch (d) {
        case Dimension::Quality: return "quality";
        case Dimension::Identity: return "identity";
        case Dimension::Environment: return "environment";
        case Dimension::Plot: return "plot";
    }
    return "unknown";
}

Dimension dimension_from_string(const std::string& s) {
    if (s == "quality") return Dimension::Quality;
    if (s == "identity") return Dimension::Identity;
    if (s == "environment") return Dimension::Environment;
    if (s == "plot") return Dimension::Plot;
    throw ConfigError("unknown dimension \"" + s + "\"");
}

void check_request(const ImageGenRequest& req) {
    if (req.width <= 0 || req.height <= 0)
        throw std::invalid_argument("image request needs positive dimensions");
    if (req.prompt.empty()) throw std::invalid_argument("image request needs a prompt");
    if (req.references.size() > kMaxReferences)
        throw std::invalid_argument("image request carries more than 16 references");
}

void check_request(const VideoGenRequest& req) {
    if (req.keyframe.empty()) throw std::invalid_argument("video request needs a keyframe");
    if (req.i2v_prompt.empty()) throw std::invalid_argument("video request needs an I2V prompt");
    if (req.duration < 4.0 || req.duration > 8.0)
        throw std::invalid_argument("clip duration must be within [4, 8] seconds, got " +
                                    std::to_string(req.duration));
}

json JudgeVerdict::to_json() const {
    return {{"dimension", cine::to_string(dimension)},
            {"score", score},
            {"pass", pass},
            {"rationale", rationale}};
}

JudgeVerdict JudgeVerdict::from_json(const json& j) {
    JudgeVerdict v;
    v.dimension = dimension_from_string(j.at("dimension"));
    v.score = j.at("score");
    v.pass = j.at("pass");
    v.rationale = j.value("rationale", "");
    return v;
}

Screenplay understand_validated(UnderstandingBackend& backend, const std::string& source,
                                const std::string& instructions) {
    const std::string text = backend.understand(source, instructions);
    Screenplay sp;
    try {
        sp = parse_screenplay(text);
    } catch (const CineError& e) {
        throw NonconformingOutput(e.what());
    }
    ValidationReport report = validate_screenplay(sp);
    if (report.has_errors()) throw NonconformingOutput(report.to_string());
    return sp;
}

struct AdmissionGate::Impl {
    std::mutex mutex;
    std::condition_variable cv;
    int available = 1;
};

AdmissionGate::AdmissionGate(int slots) : impl_(std::make_shared<Impl>()) {
    impl_->available = slots < 1 ? 1 : slots;
}

void AdmissionGate::acquire() {
    std::unique_lock<std::mutex> lock(impl_->mutex);
    impl_->cv.wait(lock, [&] { return impl_->available > 0; });
    --impl_->available;
}

void AdmissionGate::release() {
    {
        std::lock_guard<std::mutex> lock(impl_->mutex);
        ++impl_->available;
    }
    impl_->cv.notify_one();
}

}  // namespace cine
