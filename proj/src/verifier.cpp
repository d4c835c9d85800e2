#include "cine/verifier.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cine/errors.hpp"

namespace cine {

namespace {

constexpr double kMajorSeverityBelow = 2.5;

std::string join(const std::vector<std::string>& parts, const char* sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

// Characters whose portraits actually made it into the package's reference
// list; these are the identities the audit is accountable for.
std::vector<std::pair<std::string, std::string>> anchored_portraits(const MemoryPackage& pkg) {
    std::vector<std::pair<std::string, std::string>> out;  // (character_id, portrait path)
    std::set<std::string> refs(pkg.character_refs.begin(), pkg.character_refs.end());
    for (const auto& cid : pkg.characters) {
        auto it = pkg.character_mappings.find(cid);
        if (it == pkg.character_mappings.end()) continue;
        for (const auto& path : it->second.portraits) {
            if (refs.count(path)) {
                out.emplace_back(cid, path);
                break;  // one decisive portrait per character
            }
        }
    }
    return out;
}

AuditResult audit_content(const std::string& content_path, const MemoryPackage& pkg,
                          const Shot& shot, JudgeBackend& judge, EmbedBackend& embed,
                          const AuditThresholds& thresholds, int attempt) {
    AuditResult result;
    JudgeContext ctx{&pkg, &shot};

    for (Dimension dim : kAllDimensions) {
        JudgeVerdict v = judge.judge(content_path, ctx, dim, thresholds.dimension_pass(dim));
        if (dim == Dimension::Identity) {
            for (const auto& [cid, portrait] : anchored_portraits(pkg)) {
                IdentityMatch match = match_identity(Region::character(content_path, cid), portrait,
                                                     judge, embed, thresholds);
                if (!match.matched) {
                    v.pass = false;
                    v.score = std::min(v.score, match.similarity * 10.0);
                    v.rationale += (v.rationale.empty() ? "" : "; ") + cid +
                                   " failed face match (similarity " +
                                   std::to_string(match.similarity) + ", " +
                                   (match.mode == MatchMode::Primary ? "primary" : "fallback") +
                                   " path)";
                }
            }
        }
        result.verdicts.push_back(std::move(v));
    }

    result.overall_pass = std::all_of(result.verdicts.begin(), result.verdicts.end(),
                                      [](const JudgeVerdict& v) { return v.pass; });
    if (!result.overall_pass)
        result.feedback = formulate_feedback(result.verdicts, pkg, shot, attempt);
    return result;
}

}  // namespace

std::string to_string(FeedbackSeverity s) {
    return s == FeedbackSeverity::Major ? "major" : "minor";
}

std::string to_string(FeedbackRoute r) {
    return r == FeedbackRoute::Understanding ? "understanding" : "generation";
}

std::string to_string(Stage s) { return s == Stage::Keyframe ? "keyframe" : "clip"; }

std::string to_string(JobState s) {
    switch (s) {
        case JobState::Pending: return "Pending";
        case JobState::KeyframeReady: return "KeyframeReady";
        case JobState::ClipReady: return "ClipReady";
        case JobState::Verified: return "Verified";
        case JobState::Exhausted: return "Exhausted";
    }
    return "Pending";
}

JobState job_state_from_string(const std::string& s) {
    if (s == "Pending") return JobState::Pending;
    if (s == "KeyframeReady") return JobState::KeyframeReady;
    if (s == "ClipReady") return JobState::ClipReady;
    if (s == "Verified") return JobState::Verified;
    if (s == "Exhausted") return JobState::Exhausted;
    throw CorruptManifest("unknown job state \"" + s + "\"");
}

FeedbackRoute route_for(Dimension d) {
    return d == Dimension::Plot ? FeedbackRoute::Understanding : FeedbackRoute::Generation;
}

json Feedback::to_json() const {
    std::string route_text = cine::to_string(route);
    return {{"dimension", cine::to_string(dimension)},
            {"severity", cine::to_string(severity)},
            {"description", description},
            {"route", route_text},
            {"corrective_hints", corrective_hints},
            {"shot_id", shot_id},
            {"attempt", attempt}};
}

IdentityMatch match_identity(const Region& region, const std::string& portrait_path,
                             JudgeBackend& judge, EmbedBackend& embed,
                             const AuditThresholds& thresholds) {
    IdentityMatch out;
    bool primary_ok = false;
    double primary_sim = 0.0;
    std::string primary_error;
    try {
        JudgeVerdict v = judge.judge_region_match(region, portrait_path,
                                                  thresholds.face_match_accept * 10.0);
        primary_sim = std::clamp(v.score / 10.0, 0.0, 1.0);
        primary_ok = true;
    } catch (const CineError& e) {
        primary_error = e.what();
    }

    if (primary_ok && primary_sim >= thresholds.fallback_switch) {
        out.similarity = primary_sim;
        out.mode = MatchMode::Primary;
    } else {
        try {
            double sim = embed.embed_similarity(region, Region::whole(portrait_path));
            out.similarity = std::clamp(sim, 0.0, 1.0);
            out.mode = MatchMode::Fallback;
        } catch (const CineError& e) {
            if (!primary_ok)
                throw BothPathsUnavailable(primary_error + " / " + e.what());
            // Low-confidence primary with a dead fallback: keep the primary.
            out.similarity = primary_sim;
            out.mode = MatchMode::Primary;
        }
    }
    out.matched = out.similarity >= thresholds.face_match_accept;
    return out;
}

IdentityMatch match_identity(const Region& region, const PortraitRef& portrait,
                             JudgeBackend& judge, EmbedBackend& embed,
                             const AuditThresholds& thresholds) {
    return match_identity(region, portrait.image.path, judge, embed, thresholds);
}

AuditResult audit_keyframe(const Keyframe& kf, const MemoryPackage& pkg, const Shot& shot,
                           JudgeBackend& judge, EmbedBackend& embed,
                           const AuditThresholds& thresholds, int attempt) {
    return audit_content(kf.path, pkg, shot, judge, embed, thresholds, attempt);
}

AuditResult audit_clip(const ClipHandle& clip, const MemoryPackage& pkg, const Shot& shot,
                       JudgeBackend& judge, EmbedBackend& embed,
                       const AuditThresholds& thresholds, int attempt) {
    return audit_content(clip.path, pkg, shot, judge, embed, thresholds, attempt);
}

std::vector<Feedback> formulate_feedback(const std::vector<JudgeVerdict>& verdicts,
                                         const MemoryPackage& pkg, const Shot& shot, int attempt) {
    std::vector<const JudgeVerdict*> failed;
    for (const auto& v : verdicts)
        if (!v.pass) failed.push_back(&v);
    if (failed.empty())
        throw std::logic_error("formulate_feedback requires at least one failed verdict");

    std::vector<Feedback> out;
    for (const JudgeVerdict* v : failed) {
        Feedback f;
        f.dimension = v->dimension;
        f.severity = v->score < kMajorSeverityBelow ? FeedbackSeverity::Major
                                                    : FeedbackSeverity::Minor;
        f.route = route_for(v->dimension);
        f.shot_id = pkg.shot_id;
        f.attempt = attempt;
        f.description = cine::to_string(v->dimension) + " audit failed (score " +
                        std::to_string(v->score) + "/10): " + v->rationale;

        switch (v->dimension) {
            case Dimension::Identity: {
                // Name the drifting characters; the rationale carries the ids
                // the judge flagged.
                std::vector<std::string> drifting;
                for (const auto& cid : pkg.characters)
                    if (v->rationale.find(cid) != std::string::npos) drifting.push_back(cid);
                if (drifting.empty()) drifting = pkg.characters;
                for (const auto& cid : drifting) {
                    auto it = pkg.character_mappings.find(cid);
                    std::string portrait =
                        (it != pkg.character_mappings.end() && !it->second.portraits.empty())
                            ? it->second.portraits.front()
                            : "";
                    f.corrective_hints.push_back(
                        "Render " + cid + " exactly as the portrait reference" +
                        (portrait.empty() ? "" : " " + portrait));
                }
                break;
            }
            case Dimension::Environment:
                f.corrective_hints.push_back(
                    "Match the environment anchor " +
                    (pkg.environment_ref ? *pkg.environment_ref : std::string("<none>")) +
                    " for scene " + pkg.major_scene);
                break;
            case Dimension::Quality: {
                auto chars = shot.character_set();
                f.corrective_hints.push_back(
                    "Render exactly " + std::to_string(chars.size()) + " characters: " +
                    join({chars.begin(), chars.end()}, ", "));
                break;
            }
            case Dimension::Plot:
                f.corrective_hints.push_back("Follow the scripted action: " +
                                             shot.subject_movement.action);
                break;
        }
        out.push_back(std::move(f));
    }
    return out;
}

RefineOutcome refine(const MemoryPackage& pkg, const Screenplay& sp,
                     const std::vector<Feedback>& feedback) {
    if (feedback.empty()) throw std::logic_error("refine requires non-empty feedback");

    MemoryPackage next = pkg;
    const Shot* shot = sp.find_shot(pkg.shot_id);

    // Plot feedback resets the narrative to the canonical shot text before
    // corrections are re-applied on top.
    bool plot_reset = std::any_of(feedback.begin(), feedback.end(), [](const Feedback& f) {
        return f.dimension == Dimension::Plot;
    });
    if (plot_reset && shot) {
        next.narrative.action = shot->subject_movement.action;
        next.narrative.camera_movement = shot->camera_movement;
        next.language_base = shot->one_shot_prompt;
        next.i2v_base = shot->i2v_prompt;
    }

    for (const Feedback& f : feedback) {
        if (f.dimension == Dimension::Environment) {
            const MajorScene* scene = sp.find_scene(pkg.major_scene);
            if (scene) {
                next.language_base =
                    "ENVIRONMENT: " + scene->environment_description + "\n" + next.language_base;
                next.i2v_base =
                    "ENVIRONMENT: " + scene->environment_description + "\n" + next.i2v_base;
            }
        }
        if (f.dimension == Dimension::Identity) {
            // Promote the drifting characters' portraits to the front,
            // keeping relative order and the cap.
            std::vector<std::string> front;
            for (const auto& cid : next.characters) {
                if (f.description.find(cid) == std::string::npos &&
                    join(f.corrective_hints, "; ").find(cid) == std::string::npos)
                    continue;
                auto it = next.character_mappings.find(cid);
                if (it == next.character_mappings.end()) continue;
                for (const auto& path : it->second.portraits)
                    if (std::find(next.character_refs.begin(), next.character_refs.end(), path) !=
                            next.character_refs.end() &&
                        std::find(front.begin(), front.end(), path) == front.end())
                        front.push_back(path);
            }
            std::vector<std::string> rest;
            for (const auto& path : next.character_refs)
                if (std::find(front.begin(), front.end(), path) == front.end())
                    rest.push_back(path);
            next.character_refs = front;
            next.character_refs.insert(next.character_refs.end(), rest.begin(), rest.end());
            if (next.character_refs.size() > kPortraitCap)
                next.character_refs.resize(kPortraitCap);
        }
    }

    std::vector<std::string> hints;
    for (const Feedback& f : feedback) {
        next.generation_feedback.push_back(f.description);
        hints.insert(hints.end(), f.corrective_hints.begin(), f.corrective_hints.end());
    }
    next.corrections.push_back("CORRECTIONS: " + join(hints, "; "));

    // Re-render the prompts: canonical base plus every correction clause, no
    // deduplication.
    next.narrative.language_prompt = next.language_base;
    next.narrative.i2v_prompt = next.i2v_base;
    for (const auto& clause : next.corrections) {
        next.narrative.language_prompt += "\n" + clause;
        next.narrative.i2v_prompt += "\n" + clause;
    }

    return {next, next.narrative.i2v_prompt};
}

ShotJob verification_loop(ShotJob job, Stage stage, const Screenplay& sp, JudgeBackend& judge,
                          EmbedBackend& embed, const AuditThresholds& thresholds,
                          const LoopHooks& hooks) {
    const Shot* shot = sp.find_shot(job.shot_id);
    if (!shot) throw UnknownShot(job.shot_id);
    const int max_attempts = thresholds.max_retries + 1;
    if (job.attempt < 1) job.attempt = 1;
    int clip_failures = 0;

    for (;;) {
        AuditResult result;
        if (stage == Stage::Keyframe) {
            if (!job.keyframe) throw std::logic_error("keyframe stage without a keyframe");
            result = audit_keyframe(*job.keyframe, job.package, *shot, judge, embed, thresholds,
                                    job.attempt);
        } else {
            if (!job.clip) throw std::logic_error("clip stage without a clip");
            result =
                audit_clip(*job.clip, job.package, *shot, judge, embed, thresholds, job.attempt);
        }
        if (hooks.on_audit) hooks.on_audit(stage, job.attempt, result);
        job.verdicts = result.verdicts;

        // Best attempt: strictly better total score wins, ties keep the
        // earliest attempt.
        if (result.total_score() > job.best_score) {
            job.best_score = result.total_score();
            job.best_attempt = job.attempt;
            if (job.keyframe) job.best_keyframe_path = job.keyframe->path;
            job.best_clip = job.clip;
        }

        if (result.overall_pass) {
            job.state = stage == Stage::Keyframe ? JobState::KeyframeReady : JobState::Verified;
            return job;
        }

        // Always refine on failure so the evidence trail matches the failed
        // verdict count even when the budget is spent.
        for (const Feedback& f : result.feedback)
            if (hooks.on_feedback) hooks.on_feedback(f);
        job.package = refine(job.package, sp, result.feedback).package;

        if (job.attempt >= max_attempts) {
            job.state = JobState::Exhausted;
            if (stage == Stage::Keyframe) job.exhausted_at_keyframe = true;
            return job;
        }

        job.attempt += 1;
        if (stage == Stage::Keyframe) {
            job.keyframe = hooks.regenerate_keyframe(job.package, job.attempt);
            job.state = JobState::Pending;
        } else {
            ++clip_failures;
            // Persistent clip failures implicate the keyframe; redo it within
            // this clip attempt once half the budget is gone.
            if (clip_failures == (thresholds.max_retries + 1) / 2 && hooks.regenerate_keyframe)
                job.keyframe = hooks.regenerate_keyframe(job.package, job.attempt);
            job.clip = hooks.generate_clip(job.package, *job.keyframe, job.attempt);
            job.state = JobState::ClipReady;
        }
    }
}

}  // namespace cine
