#pragma once

#include <stdexcept>
#include <string>

namespace cine {

// Base for all engine errors. Subclasses exist so callers (and the CLI exit
// code mapping) can distinguish failure classes without string matching.
class CineError : public std::runtime_error {
public:
    explicit CineError(const std::string& what) : std::runtime_error(what) {}
};

// ---- screenplay ----

class MalformedJson : public CineError {
public:
    explicit MalformedJson(const std::string& what) : CineError("malformed JSON: " + what) {}
};

// Structural schema failure; `path` is the JSON pointer of the first
// offending field (e.g. "/video_metadata/aspect_ratio/width").
class SchemaViolation : public CineError {
public:
    SchemaViolation(std::string path, const std::string& what)
        : CineError("schema violation at " + path + ": " + what), path_(std::move(path)) {}
    const std::string& path() const { return path_; }

private:
    std::string path_;
};

class UnknownScene : public CineError {
public:
    explicit UnknownScene(const std::string& id) : CineError("unknown scene: " + id) {}
};

class UnknownShot : public CineError {
public:
    explicit UnknownShot(const std::string& id) : CineError("unknown shot: " + id) {}
};

class UnknownCharacter : public CineError {
public:
    explicit UnknownCharacter(const std::string& id) : CineError("unknown character: " + id) {}
};

// ---- visual memory ----

class AspectRatioMismatch : public CineError {
public:
    explicit AspectRatioMismatch(const std::string& what) : CineError("aspect ratio mismatch: " + what) {}
};

class UnreadableImage : public CineError {
public:
    explicit UnreadableImage(const std::string& path) : CineError("unreadable image: " + path) {}
};

class InvalidDNA : public CineError {
public:
    explicit InvalidDNA(const std::string& what) : CineError("invalid wardrobe DNA: " + what) {}
};

// A required anchor (environment or portrait) is absent from the registry.
class MissingAnchor : public CineError {
public:
    MissingAnchor(std::string kind, std::string id)
        : CineError("missing " + kind + " anchor for " + id),
          kind_(std::move(kind)),
          id_(std::move(id)) {}
    const std::string& kind() const { return kind_; }
    const std::string& id() const { return id_; }

private:
    std::string kind_;
    std::string id_;
};

class MissingPortrait : public CineError {
public:
    explicit MissingPortrait(const std::string& id) : CineError("no portrait for " + id) {}
};

// ---- gridsynth ----

class HeterogeneousBatch : public CineError {
public:
    explicit HeterogeneousBatch(const std::string& what) : CineError("heterogeneous batch: " + what) {}
};

class DimensionMismatch : public CineError {
public:
    explicit DimensionMismatch(const std::string& what) : CineError("dimension mismatch: " + what) {}
};

class WrongCount : public CineError {
public:
    explicit WrongCount(const std::string& what) : CineError("wrong count: " + what) {}
};

// ---- backends ----

class TransportError : public CineError {
public:
    explicit TransportError(const std::string& what) : CineError("transport error: " + what) {}
};

// Non-retryable refusal from a generation backend.
class BackendRefusal : public CineError {
public:
    explicit BackendRefusal(const std::string& what) : CineError("backend refusal: " + what) {}
};

// Understanding output failed the screenplay schema; carries the findings text.
class NonconformingOutput : public CineError {
public:
    explicit NonconformingOutput(const std::string& what) : CineError("nonconforming output: " + what) {}
};

class BothPathsUnavailable : public CineError {
public:
    explicit BothPathsUnavailable(const std::string& what)
        : CineError("both identity match paths unavailable: " + what) {}
};

// ---- pipeline / bench / cli ----

class ConfigError : public CineError {
public:
    explicit ConfigError(const std::string& what) : CineError("config error: " + what) {}
};

class UnderstandingFailed : public CineError {
public:
    explicit UnderstandingFailed(const std::string& what) : CineError("understanding failed: " + what) {}
};

class IncompleteRun : public CineError {
public:
    explicit IncompleteRun(const std::string& what) : CineError("incomplete run: " + what) {}
};

class CorruptManifest : public CineError {
public:
    explicit CorruptManifest(const std::string& what) : CineError("corrupt manifest: " + what) {}
};

class EmptyJoin : public CineError {
public:
    explicit EmptyJoin(const std::string& what) : CineError("empty join: " + what) {}
};

class InsufficientSamples : public CineError {
public:
    explicit InsufficientSamples(const std::string& what) : CineError("insufficient samples: " + what) {}
};

class IoFailure : public CineError {
public:
    explicit IoFailure(const std::string& what) : CineError("i/o failure: " + what) {}
};

}  // namespace cine
