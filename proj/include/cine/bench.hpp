#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cine/backends.hpp"
#include "cine/validation.hpp"

namespace cine {

// ---- shot-level character-set metrics ----

struct SetMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double iou = 0.0;
    double f1 = 0.0;
};

// Precision/recall/IoU/F1 over predicted vs ground-truth character sets.
// Conventions: both empty -> all 1.0; one side empty -> all 0.0.
SetMetrics set_metrics(const std::set<std::string>& pred, const std::set<std::string>& gt);

// ---- ground truth / prediction documents ----

struct BenchShot {
    std::string shot_id;
    std::set<std::string> character_set;
    std::string plot_description;
};

struct BenchDocument {
    std::vector<BenchShot> shots;
    std::set<std::string> background_characters;  // excluded from metrics when flagged
};

// Parses {shots: [{shot_id, characters[], plot_description}]} (+ optional
// background_characters[]). Throws SchemaViolation with a JSON pointer.
BenchDocument parse_bench_document(const json& j);
BenchDocument load_bench_document(const std::string& path);

// ---- region annotations ----

struct RegionAnnotation {
    enum class Kind { Character, Background };
    Kind kind = Kind::Character;
    std::string character_id;  // set iff kind == Character
    int x = 0, y = 0, w = 0, h = 0;
};

struct FrameAnnotation {
    std::string frame;  // image path
    std::string shot_id;
    std::vector<RegionAnnotation> regions;
};

struct RegionsDocument {
    std::vector<FrameAnnotation> frames;
};

// Parses {frames: [{frame, shot_id, regions: [{kind, character_id?, x, y, w, h}]}]}.
RegionsDocument parse_regions_document(const json& j);
RegionsDocument load_regions_document(const std::string& path);

// ---- understanding track ----

struct UnderstandingRow {
    std::string shot_id;
    SetMetrics set;
    double plot_score = 0.0;  // [0, 10]
};

struct UnderstandingEval {
    std::vector<UnderstandingRow> rows;  // inner join on shot_id, gt order
    SetMetrics macro;
    double macro_plot = 0.0;
    std::vector<std::string> unmatched_pred;  // in pred, absent from gt
    std::vector<std::string> unmatched_gt;    // in gt, absent from pred
};

// Joins pred and gt on shot_id, scores character sets with set_metrics and
// plots with the judge's 10-point text rubric. Characters flagged background
// in the gt are excluded before scoring. Throws EmptyJoin when no shot ids
// align.
UnderstandingEval eval_understanding(const BenchDocument& pred, const BenchDocument& gt,
                                     JudgeBackend& judge);

// ---- remaking track ----

struct ShotScore {
    std::string shot_id;
    double score = 0.0;
};

struct SimilarityEval {
    std::vector<ShotScore> per_shot;
    double overall = 0.0;  // mean of per-shot means
};

// Cropped character regions vs the character's identity reference; scores
// average across characters within a shot, then across shots. Throws
// MissingPortrait.
SimilarityEval clip_id_score(const RegionsDocument& regions,
                             const std::map<std::string, std::string>& portraits,
                             EmbedBackend& embed);

// Background regions vs the owning scene's environment anchor. Throws
// MissingAnchor when a frame's scene has none.
SimilarityEval clip_scene_score(const RegionsDocument& regions,
                                const std::map<std::string, std::string>& shot_to_scene,
                                const std::map<std::string, std::string>& scene_anchors,
                                EmbedBackend& embed);

struct SceneGroup {
    std::string scene_id;
    std::vector<std::string> keyframes;  // >= 2 per group
    json expectations = json::array();   // one {scene, characters[]} per keyframe
};

struct VlmScores {
    double id_vlm = 0.0;
    double scene_vlm = 0.0;
    double plot_vlm = 0.0;
};

// Judge-scored cross-shot consistency over keyframes grouped by scene;
// scene-level scores average to video level. Throws InsufficientSamples on a
// group with fewer than two keyframes.
VlmScores vlm_scores(const std::vector<SceneGroup>& groups, JudgeBackend& judge);

// ---- report emission ----

// Reference scores reported by the full-scale system configuration (named
// commercial models over the original corpus); not reproducible offline and
// included in reports for orientation only.
struct ReferenceScores {
    double id_vlm = 9.17;
    double scene_vlm = 8.84;
    double plot_vlm = 8.67;
    double clip_i_id = 0.842;
    double clip_i_scene = 0.819;
    double understanding_iou = 0.921;
    double understanding_precision = 0.940;
    double understanding_recall = 0.943;
    double understanding_f1 = 0.936;
};

struct EvalReport {
    json provenance = json::object();  // config, seeds, backend identities
    std::optional<UnderstandingEval> understanding;
    std::optional<VlmScores> vlm;
    std::optional<SimilarityEval> id_similarity;
    std::optional<SimilarityEval> scene_similarity;

    json to_json() const;
    std::string to_markdown() const;
};

// Writes report.json and report.md under out_dir, deterministically ordered.
void emit_report(const EvalReport& report, const std::string& out_dir);

}  // namespace cine
