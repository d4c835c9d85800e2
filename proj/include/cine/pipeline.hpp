#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "cine/backends.hpp"
#include "cine/gridsynth.hpp"
#include "cine/run_config.hpp"
#include "cine/screenplay.hpp"
#include "cine/shot_job.hpp"
#include "cine/verifier.hpp"
#include "cine/visual_memory.hpp"

namespace cine {

struct CharacterTarget {
    std::string target_name;
    std::vector<std::string> portraits;  // image paths; synthesized when empty
};

// What to remake and how: the source screenplay (or raw source for the
// understanding backend), the character replacement mapping, and the target
// style.
struct SourceSpec {
    std::string screenplay_path;  // precomputed screenplay JSON, preferred when set
    std::string video_path;       // raw source handed to the understanding backend
    std::map<std::string, CharacterTarget> character_mapping;
    std::string style;  // free text, folded into the run's style prompt
    bool copy_mode = false;

    static SourceSpec from_json(const json& j);
    json to_json() const;
};

struct EdlEntry {
    std::string shot_id;
    std::string clip;  // run-directory relative
    double in_point = 0.0;
    double duration = 0.0;
};

struct EditDecisionList {
    std::vector<EdlEntry> entries;  // screenplay shot order, always
    json to_json() const;
    static EditDecisionList from_json(const json& j);
};

// Append-only JSONL event log; one flushed line per event, seq-numbered.
// This file *is* the run manifest: replaying it reconstructs the run state.
class EventLog {
public:
    explicit EventLog(const std::string& path, int start_seq = 0);
    void append(json event);  // stamps v/seq/ts and flushes

    static std::vector<json> read(const std::string& path);  // CorruptManifest on bad lines
    int next_seq() const { return seq_ + 1; }

private:
    std::string path_;
    int seq_ = 0;
    std::mutex mutex_;
};

// Strips volatile fields (timestamps) for manifest comparisons.
std::vector<json> normalized_events(const std::vector<json>& events);
std::vector<json> normalized_events_from_file(const std::string& path);

struct RunManifest {
    std::string run_id;
    std::string run_dir;
    RunConfig config;
    Screenplay screenplay;
    std::vector<GridBatch> batches;
    std::vector<std::string> shot_order;
    std::map<std::string, ShotJob> jobs;
    EditDecisionList edl;
    bool completed = false;

    int count_in_state(JobState s) const;
};

// Run directory layout (all paths relative to the run directory):
//   run.json            config + source snapshot
//   events.jsonl        the event log
//   screenplay.json     normalized screenplay
//   reference_images/   visual anchors + index.json
//   keyframes/          shot_<id>_attempt<k>.png (+ .tags.json sidecars)
//   clips/              shot_<id>_attempt<k>.json|mp4
//   edl.json, report.json
inline constexpr const char* kEventsFile = "events.jsonl";
inline constexpr const char* kRunFile = "run.json";
inline constexpr const char* kScreenplayFile = "screenplay.json";
inline constexpr const char* kRegistryDir = "reference_images";
inline constexpr const char* kKeyframesDir = "keyframes";
inline constexpr const char* kClipsDir = "clips";
inline constexpr const char* kEdlFile = "edl.json";
inline constexpr const char* kReportFile = "report.json";

// Executes the full remake: understanding, reference generation, allocation,
// grid keyframes, verification loops, clips, stitching. The manifest is
// persisted after every state change; no generation request ever leaves
// without the shot's semantic prompt and its ordered reference list.
RunManifest run_remake(const SourceSpec& source, const BackendSet& backends,
                       const RunConfig& config, const std::string& run_dir);

// Continues an interrupted run from its persisted event log. Completed work
// is never redone; a finished run returns immediately.
RunManifest resume_run(const std::string& run_dir, const BackendSet& backends);

// Builds the visual anchor registry: one environment ref per scene
// (environment-only prompts at the screenplay aspect ratio), portraits from
// the mapping (synthesized when none are provided), and one clothing ref per
// (main character, scene) pair unless copy mode is on. Partial registries
// survive per-item backend failures; problems land in `findings`.
ReferenceRegistry generate_references(const Screenplay& sp, const SourceSpec& source,
                                      ImageGenBackend& image_gen, const RunConfig& config,
                                      const std::string& run_dir,
                                      ValidationReport* findings = nullptr);

// Orders the EDL by screenplay shot order. Strict mode requires every job
// Verified (IncompleteRun otherwise); lenient mode lets Exhausted shots ride
// on their best-scoring attempt.
EditDecisionList stitch(const std::map<std::string, ShotJob>& jobs,
                        const std::vector<std::string>& shot_order, bool strict);

// Runs items through fn with bounded parallelism but commits results (and
// their buffered events) in input order, keeping manifests deterministic.
std::uint64_t derive_seed(std::uint64_t run_seed, const std::string& scope,
                          const std::string& key, int attempt);

}  // namespace cine
