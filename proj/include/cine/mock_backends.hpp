#pragma once

#include <set>
#include <string>
#include <vector>

#include "cine/backends.hpp"

namespace cine {

enum class DriftKind { IdentitySwap, BackgroundMutation, CharacterCount, PlotMismatch };
std::string to_string(DriftKind k);
DriftKind drift_kind_from_string(const std::string& s);

// Deterministic mock universe. Every output is a pure function of
// (seed, request); fault injection draws from content hashes, never from
// shared RNG state, so resumed and parallel runs reproduce byte-identically.
struct MockWorld {
    std::uint64_t seed = 0;
    double fault_rate = 0.0;  // probability of corrupting one tag per cell/clip
    std::set<DriftKind> drift_kinds = {DriftKind::IdentitySwap, DriftKind::BackgroundMutation,
                                       DriftKind::CharacterCount, DriftKind::PlotMismatch};
};

// One rendered cell of a mock image; mirrors the sidecar schema
// {cells: [{row, col, scene, characters[], attempt}]} exactly.
struct CellTags {
    int row = 0;
    int col = 0;
    std::string scene;
    std::vector<std::string> characters;
    int attempt = 1;
};

json cells_to_sidecar(const std::vector<CellTags>& cells);
std::vector<CellTags> cells_from_sidecar(const json& j);
std::string sidecar_path(const std::string& image_path);
// Missing sidecars read as empty (real images have no tags).
std::vector<CellTags> read_tags(const std::string& content_path);
void write_sidecar(const std::string& image_path, const json& tags);

// Mock tag semantics for similarity: whole-image regions expose scene and
// character tags, character regions collapse to the matching character tag
// (or whatever characters actually rendered there when it is absent),
// background regions expose scene tags only.
std::set<std::string> region_tags(const Region& region);
double jaccard(const std::set<std::string>& a, const std::set<std::string>& b);

// Prompt markers understood by the mock renderers. Keyframe prompts carry
// CELL clauses (see compose_grid_prompt); reference prompts use these heads.
std::string environment_ref_prompt(const std::string& scene_id,
                                   const std::string& environment_description,
                                   const std::string& style_prompt);
std::string clothing_ref_prompt(const std::string& scene_id, const std::string& character_id,
                                const std::string& dna_text, const std::string& target_name,
                                const std::string& style_prompt);
std::string portrait_ref_prompt(const std::string& character_id, const std::string& target_name);

class MockUnderstanding : public UnderstandingBackend {
public:
    explicit MockUnderstanding(MockWorld world) : world_(world) {}
    std::string understand(const std::string& source, const std::string& instructions) override;

private:
    MockWorld world_;
};

class MockImageGen : public ImageGenBackend {
public:
    explicit MockImageGen(MockWorld world) : world_(world) {}
    GeneratedImage generate_image(const ImageGenRequest& req) override;

private:
    MockWorld world_;
};

class MockVideoGen : public VideoGenBackend {
public:
    explicit MockVideoGen(MockWorld world) : world_(world) {}
    GeneratedClip generate_video(const VideoGenRequest& req) override;

private:
    MockWorld world_;
};

class MockJudge : public JudgeBackend {
public:
    explicit MockJudge(MockWorld world) : world_(world) {}
    JudgeVerdict judge(const std::string& content, const JudgeContext& ctx, Dimension dim,
                       double threshold) override;
    JudgeVerdict judge_region_match(const Region& region, const std::string& reference,
                                    double threshold) override;
    JudgeVerdict judge_text(const std::string& reference, const std::string& candidate,
                            double threshold) override;
    JudgeVerdict judge_group(const std::vector<std::string>& images, const json& expectations,
                             Dimension dim, double threshold) override;

private:
    MockWorld world_;
};

class MockEmbed : public EmbedBackend {
public:
    explicit MockEmbed(MockWorld world) : world_(world) {}
    double embed_similarity(const Region& a, const Region& b) override;

private:
    MockWorld world_;
};

BackendSet make_mock_backends(const MockWorld& world);

// Tokens used by the mock plot scoring: lowercase alphanumeric runs of
// length >= 3.
std::vector<std::string> plot_tokens(const std::string& text);

}  // namespace cine
