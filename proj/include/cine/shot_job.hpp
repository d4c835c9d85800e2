#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cine/backends.hpp"
#include "cine/gridsynth.hpp"
#include "cine/visual_memory.hpp"

namespace cine {

// Lifecycle of one shot through the generation pipeline. Forward edges:
// Pending -> KeyframeReady -> ClipReady -> Verified. Failed verdicts move a
// job back to Pending (keyframe redo) or KeyframeReady (clip redo); spent
// budgets move it to Exhausted from anywhere.
enum class JobState { Pending, KeyframeReady, ClipReady, Verified, Exhausted };
std::string to_string(JobState s);
JobState job_state_from_string(const std::string& s);

struct ShotJob {
    std::string shot_id;
    JobState state = JobState::Pending;
    int attempt = 0;  // generation attempts in the current stage, <= max_retries + 1
    MemoryPackage package;
    std::optional<Keyframe> keyframe;
    std::optional<ClipHandle> clip;
    std::vector<JudgeVerdict> verdicts;  // verdicts of the latest audit

    // Best attempt so far (summed dimension scores, earliest attempt wins
    // ties); lenient stitching falls back to it when the budget runs out.
    double best_score = -1.0;
    int best_attempt = 0;
    std::string best_keyframe_path;
    std::optional<ClipHandle> best_clip;
    bool exhausted_at_keyframe = false;
};

}  // namespace cine
