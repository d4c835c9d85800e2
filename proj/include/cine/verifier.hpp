#pragma once

#include <functional>
#include <string>
#include <vector>

#include "cine/backends.hpp"
#include "cine/gridsynth.hpp"
#include "cine/shot_job.hpp"
#include "cine/visual_memory.hpp"

namespace cine {

struct AuditThresholds {
    double quality = 7.0;
    double identity = 7.0;
    double environment = 7.0;
    double plot = 7.0;
    double face_match_accept = 0.75;  // similarity needed to accept an identity
    double fallback_switch = 0.5;     // below this the fallback matcher is consulted
    int max_retries = 3;

    double dimension_pass(Dimension d) const {
        switch (d) {
            case Dimension::Quality: return quality;
            case Dimension::Identity: return identity;
            case Dimension::Environment: return environment;
            case Dimension::Plot: return plot;
        }
        return quality;
    }
};

enum class FeedbackSeverity { Minor, Major };
enum class FeedbackRoute { Understanding, Generation };
std::string to_string(FeedbackSeverity s);
std::string to_string(FeedbackRoute r);

// Plot problems go back to the understanding side; everything else is a
// generation-side correction.
FeedbackRoute route_for(Dimension d);

// Structured correction signal for one failed dimension of one audit.
struct Feedback {
    Dimension dimension = Dimension::Quality;
    FeedbackSeverity severity = FeedbackSeverity::Minor;
    std::string description;
    FeedbackRoute route = FeedbackRoute::Generation;
    std::vector<std::string> corrective_hints;
    std::string shot_id;
    int attempt = 1;

    json to_json() const;
};

struct AuditResult {
    std::vector<JudgeVerdict> verdicts;  // one per dimension, fixed order
    bool overall_pass = false;           // all four verdicts pass
    std::vector<Feedback> feedback;      // empty iff overall_pass

    double total_score() const {
        double s = 0;
        for (const auto& v : verdicts) s += v.score;
        return s;
    }
};

enum class MatchMode { Primary, Fallback };

struct IdentityMatch {
    double similarity = 0.0;  // [0, 1]
    bool matched = false;
    MatchMode mode = MatchMode::Primary;
};

// Dual-mode face matching: the judge scores 0-10 (mapped to [0,1]); when the
// judge is unavailable or its score falls below fallback_switch, the
// embedding path decides instead. Throws BothPathsUnavailable when neither
// path can be consulted.
IdentityMatch match_identity(const Region& region, const std::string& portrait_path,
                             JudgeBackend& judge, EmbedBackend& embed,
                             const AuditThresholds& thresholds);
IdentityMatch match_identity(const Region& region, const PortraitRef& portrait,
                             JudgeBackend& judge, EmbedBackend& embed,
                             const AuditThresholds& thresholds);

// Four-dimension audit of a persisted keyframe. The identity verdict is
// additionally gated by match_identity per anchored character. Backend
// transport errors propagate (audits retry without spending generation
// budget).
AuditResult audit_keyframe(const Keyframe& kf, const MemoryPackage& pkg, const Shot& shot,
                           JudgeBackend& judge, EmbedBackend& embed,
                           const AuditThresholds& thresholds, int attempt = 1);

// Same four dimensions over a clip; identity is checked on the clip's
// first/middle/last samples.
AuditResult audit_clip(const ClipHandle& clip, const MemoryPackage& pkg, const Shot& shot,
                       JudgeBackend& judge, EmbedBackend& embed,
                       const AuditThresholds& thresholds, int attempt = 1);

// One Feedback per failed verdict, with dimension-specific corrective hints.
// Precondition: at least one failed verdict.
std::vector<Feedback> formulate_feedback(const std::vector<JudgeVerdict>& verdicts,
                                         const MemoryPackage& pkg, const Shot& shot, int attempt);

struct RefineOutcome {
    MemoryPackage package;
    std::string i2v_prompt;
};

// Pure context update: appends feedback to the package evidence, folds hints
// into a CORRECTIONS clause on both prompts, promotes drifting characters'
// portraits to the front of the reference list, re-pins environment wording,
// and rewrites narrative fields from the canonical shot text on plot
// feedback. The input package is never mutated.
RefineOutcome refine(const MemoryPackage& pkg, const Screenplay& sp,
                     const std::vector<Feedback>& feedback);

enum class Stage { Keyframe, Clip };
std::string to_string(Stage s);

// Pipeline-provided effects for the loop: how to regenerate content and
// where to record audit/feedback evidence.
struct LoopHooks {
    std::function<Keyframe(const MemoryPackage& pkg, int attempt)> regenerate_keyframe;
    std::function<ClipHandle(const MemoryPackage& pkg, const Keyframe& kf, int attempt)>
        generate_clip;
    std::function<void(Stage stage, int attempt, const AuditResult& result)> on_audit;
    std::function<void(const Feedback& feedback)> on_feedback;
};

// Critique-Correct-Verify for one shot and one stage: audit, refine on
// failure, regenerate as a singleton, re-audit; at most max_retries + 1
// audits. Returns the advanced job (Verified / next stage) or Exhausted with
// the best-scoring attempt recorded. Clip-stage failures regenerate the
// keyframe too once ceil(max_retries/2) clip attempts have failed.
ShotJob verification_loop(ShotJob job, Stage stage, const Screenplay& sp, JudgeBackend& judge,
                          EmbedBackend& embed, const AuditThresholds& thresholds,
                          const LoopHooks& hooks);

}  // namespace cine
