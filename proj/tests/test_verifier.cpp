#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "cine/errors.hpp"
#include "cine/fixtures.hpp"
#include "cine/image.hpp"
#include "cine/mock_backends.hpp"
#include "cine/verifier.hpp"
#include "support.hpp"

using namespace cine;

namespace {

// Scripted judge for the dual-mode matching tests.
class ScriptedJudge : public JudgeBackend {
public:
    double region_score = 10.0;
    bool unavailable = false;

    JudgeVerdict judge(const std::string&, const JudgeContext&, Dimension dim,
                       double threshold) override {
        return {dim, 10.0, 10.0 >= threshold, "scripted"};
    }
    JudgeVerdict judge_region_match(const Region&, const std::string&, double threshold) override {
        if (unavailable) throw TransportError("scripted outage");
        return {Dimension::Identity, region_score, region_score >= threshold, "scripted"};
    }
    JudgeVerdict judge_text(const std::string&, const std::string&, double threshold) override {
        return {Dimension::Plot, 10.0, 10.0 >= threshold, "scripted"};
    }
    JudgeVerdict judge_group(const std::vector<std::string>&, const json&, Dimension dim,
                             double threshold) override {
        return {dim, 10.0, 10.0 >= threshold, "scripted"};
    }
};

class ScriptedEmbed : public EmbedBackend {
public:
    double similarity = 1.0;
    bool unavailable = false;
    double embed_similarity(const Region&, const Region&) override {
        if (unavailable) throw TransportError("scripted outage");
        return similarity;
    }
};

AuditThresholds default_thresholds() { return {}; }

Screenplay example_screenplay() {
    return parse_screenplay(testsup::package_example_document());
}

// Conditioning package for the example shot "9", narrative faithful to the
// screenplay text the way allocate builds it.
MemoryPackage two_character_package() {
    static const Screenplay sp = example_screenplay();
    const Shot& shot = sp.shots[0];
    MemoryPackage pkg;
    pkg.shot_id = "9";
    pkg.major_scene = "major_scene_01";
    pkg.characters = {"@character_01", "@character_02"};
    pkg.environment_ref = "reference_images/major_scene_01_environment.png";
    pkg.character_refs = {"reference_images/character_01_portrait_1.png",
                          "reference_images/character_02_portrait_1.png"};
    pkg.character_mappings["@character_01"] = {"A", "", {pkg.character_refs[0]}};
    pkg.character_mappings["@character_02"] = {"B", "", {pkg.character_refs[1]}};
    pkg.narrative = {shot.subject_movement.action, shot.camera_movement, shot.one_shot_prompt,
                     shot.i2v_prompt};
    pkg.language_base = shot.one_shot_prompt;
    pkg.i2v_base = shot.i2v_prompt;
    return pkg;
}

void write_tagged(const std::string& path, const CellTags& tags) {
    write_png(path, Image(8, 8));
    write_sidecar(path, cells_to_sidecar({tags}));
}

}  // namespace

TEST_SUITE("verifier") {

TEST_CASE("match_identity: confident primary decides") {
    ScriptedJudge judge;
    judge.region_score = 9.0;
    ScriptedEmbed embed;
    IdentityMatch m = match_identity(Region::whole("x.png"), std::string("p.png"), judge, embed,
                                     default_thresholds());
    CHECK(m.similarity == doctest::Approx(0.9));
    CHECK(m.matched);
    CHECK(m.mode == MatchMode::Primary);
}

TEST_CASE("match_identity: unavailable primary falls back to the embedding") {
    ScriptedJudge judge;
    judge.unavailable = true;
    ScriptedEmbed embed;
    embed.similarity = 0.8;
    IdentityMatch m = match_identity(Region::whole("x.png"), std::string("p.png"), judge, embed,
                                     default_thresholds());
    CHECK(m.matched);
    CHECK(m.mode == MatchMode::Fallback);
    CHECK(m.similarity == doctest::Approx(0.8));
}

TEST_CASE("match_identity: low primary consults the fallback, which can reject") {
    ScriptedJudge judge;
    judge.region_score = 4.0;  // 0.4 < fallback_switch 0.5
    ScriptedEmbed embed;
    embed.similarity = 0.3;
    IdentityMatch m = match_identity(Region::whole("x.png"), std::string("p.png"), judge, embed,
                                     default_thresholds());
    CHECK(!m.matched);
    CHECK(m.mode == MatchMode::Fallback);
    CHECK(m.similarity == doctest::Approx(0.3));
}

TEST_CASE("match_identity: both paths down is an error") {
    ScriptedJudge judge;
    judge.unavailable = true;
    ScriptedEmbed embed;
    embed.unavailable = true;
    CHECK_THROWS_AS(match_identity(Region::whole("x.png"), std::string("p.png"), judge, embed,
                                   default_thresholds()),
                    BothPathsUnavailable);
}

TEST_CASE("feedback routing: plot goes to understanding, everything else to generation") {
    CHECK(route_for(Dimension::Plot) == FeedbackRoute::Understanding);
    CHECK(route_for(Dimension::Quality) == FeedbackRoute::Generation);
    CHECK(route_for(Dimension::Identity) == FeedbackRoute::Generation);
    CHECK(route_for(Dimension::Environment) == FeedbackRoute::Generation);
}

TEST_CASE("formulate_feedback binds hints to the failing dimension") {
    Screenplay sp = example_screenplay();
    MemoryPackage pkg = two_character_package();

    std::vector<JudgeVerdict> verdicts = {
        {Dimension::Quality, 10.0, true, ""},
        {Dimension::Identity, 4.0, false, "@character_02 missing"},
        {Dimension::Environment, 10.0, true, ""},
        {Dimension::Plot, 10.0, true, ""},
    };
    auto feedback = formulate_feedback(verdicts, pkg, sp.shots[0], 1);
    REQUIRE(feedback.size() == 1);
    CHECK(feedback[0].dimension == Dimension::Identity);
    CHECK(feedback[0].route == FeedbackRoute::Generation);
    REQUIRE(!feedback[0].corrective_hints.empty());
    CHECK(feedback[0].corrective_hints[0].find(
              "reference_images/character_02_portrait_1.png") != std::string::npos);

    verdicts[0].pass = false;
    verdicts[0].score = 0.0;
    auto two = formulate_feedback(verdicts, pkg, sp.shots[0], 1);
    CHECK(two.size() == 2);
    CHECK(two[0].severity == FeedbackSeverity::Major);   // score 0
    CHECK(two[1].severity == FeedbackSeverity::Minor);   // score 4

    std::vector<JudgeVerdict> all_pass = {{Dimension::Quality, 10.0, true, ""}};
    CHECK_THROWS_AS(formulate_feedback(all_pass, pkg, sp.shots[0], 1), std::logic_error);
}

TEST_CASE("refine promotes the drifting character's portraits") {
    Screenplay sp = example_screenplay();
    MemoryPackage pkg = two_character_package();

    Feedback f;
    f.dimension = Dimension::Identity;
    f.description = "identity audit failed: @character_02 drifted";
    f.corrective_hints = {"Render @character_02 exactly as the portrait reference "
                          "reference_images/character_02_portrait_1.png"};
    f.shot_id = "9";

    RefineOutcome out = refine(pkg, sp, {f});
    CHECK(out.package.character_refs ==
          std::vector<std::string>{"reference_images/character_02_portrait_1.png",
                                   "reference_images/character_01_portrait_1.png"});
    // Pure update: the input package is untouched.
    CHECK(pkg.character_refs.front() == "reference_images/character_01_portrait_1.png");
    CHECK(pkg.generation_feedback.empty());
    CHECK(out.package.generation_feedback.size() == 1);
}

TEST_CASE("refine appends evidence and never deduplicates corrections") {
    Screenplay sp = example_screenplay();
    MemoryPackage pkg = two_character_package();

    Feedback f;
    f.dimension = Dimension::Quality;
    f.description = "quality audit failed";
    f.corrective_hints = {"Render exactly 2 characters"};
    f.shot_id = "9";

    MemoryPackage once = refine(pkg, sp, {f}).package;
    MemoryPackage twice = refine(once, sp, {f}).package;
    CHECK(once.generation_feedback.size() == 1);
    CHECK(twice.generation_feedback.size() == 2);

    auto count_clauses = [](const std::string& text) {
        int n = 0;
        std::size_t pos = 0;
        while ((pos = text.find("CORRECTIONS:", pos)) != std::string::npos) {
            ++n;
            pos += 12;
        }
        return n;
    };
    CHECK(count_clauses(once.narrative.language_prompt) == 1);
    CHECK(count_clauses(twice.narrative.language_prompt) == 2);
    CHECK(count_clauses(twice.narrative.i2v_prompt) == 2);
    CHECK(once.to_json() != twice.to_json());
}

TEST_CASE("plot feedback rewrites the narrative from the canonical shot text") {
    Screenplay sp = example_screenplay();
    MemoryPackage pkg = two_character_package();
    pkg.narrative.language_prompt = "drifted prompt";
    pkg.narrative.action = "drifted action";
    pkg.language_base = "drifted prompt";

    Feedback f;
    f.dimension = Dimension::Plot;
    f.description = "plot audit failed";
    f.corrective_hints = {"Follow the scripted action: turns toward the door"};
    f.shot_id = "9";

    MemoryPackage fixed = refine(pkg, sp, {f}).package;
    CHECK(fixed.narrative.action == sp.shots[0].subject_movement.action);
    CHECK(fixed.narrative.language_prompt.rfind(sp.shots[0].one_shot_prompt, 0) == 0);
    CHECK(fixed.narrative.language_prompt.find("CORRECTIONS:") != std::string::npos);
}

TEST_CASE("environment feedback re-pins the scene description") {
    Screenplay sp = example_screenplay();
    MemoryPackage pkg = two_character_package();
    Feedback f;
    f.dimension = Dimension::Environment;
    f.description = "environment audit failed";
    f.corrective_hints = {"Match the environment anchor"};
    f.shot_id = "9";
    MemoryPackage fixed = refine(pkg, sp, {f}).package;
    CHECK(fixed.narrative.language_prompt.rfind("ENVIRONMENT: ", 0) == 0);
    CHECK(fixed.narrative.i2v_prompt.rfind("ENVIRONMENT: ", 0) == 0);
}

TEST_CASE("audit_keyframe passes a faithful mock keyframe and fails drifted ones") {
    testsup::TempDir dir("audit");
    Screenplay sp = example_screenplay();
    MemoryPackage pkg = two_character_package();
    // The audit reads the package's portrait anchors from disk for the
    // dual-mode gate.
    std::filesystem::create_directories(dir.sub("reference_images"));
    write_tagged(dir.sub("reference_images/character_01_portrait_1.png"),
                 {0, 0, "", {"@character_01"}, 1});
    write_tagged(dir.sub("reference_images/character_02_portrait_1.png"),
                 {0, 0, "", {"@character_02"}, 1});
    MemoryPackage local = pkg;
    for (auto& path : local.character_refs) path = dir.sub(path);
    for (auto& [id, m] : local.character_mappings)
        for (auto& p : m.portraits) p = dir.sub(p);

    MockWorld world;
    MockJudge judge(world);
    MockEmbed embed(world);

    Keyframe clean;
    clean.shot_id = "9";
    clean.path = dir.sub("clean.png");
    write_tagged(clean.path, {0, 0, "major_scene_01", {"@character_01", "@character_02"}, 1});

    AuditResult ok = audit_keyframe(clean, local, sp.shots[0], judge, embed,
                                    default_thresholds());
    CHECK(ok.overall_pass);
    CHECK(ok.feedback.empty());

    // Wrong character count: quality fails, routed to generation.
    Keyframe crowded;
    crowded.shot_id = "9";
    crowded.path = dir.sub("crowded.png");
    write_tagged(crowded.path,
                 {0, 0, "major_scene_01", {"@character_01", "@character_02", "@extra_01"}, 1});
    AuditResult crowd = audit_keyframe(crowded, local, sp.shots[0], judge, embed,
                                       default_thresholds());
    CHECK(!crowd.overall_pass);
    bool quality_fail = false;
    for (const auto& f : crowd.feedback)
        if (f.dimension == Dimension::Quality && f.route == FeedbackRoute::Generation)
            quality_fail = true;
    CHECK(quality_fail);

    // Plot drift in the conditioning: routed to understanding.
    MemoryPackage off_script = local;
    off_script.narrative.language_prompt = "something unrelated entirely";
    AuditResult plot = audit_keyframe(clean, off_script, sp.shots[0], judge, embed,
                                      default_thresholds());
    CHECK(!plot.overall_pass);
    bool plot_routed = false;
    for (const auto& f : plot.feedback)
        if (f.dimension == Dimension::Plot && f.route == FeedbackRoute::Understanding)
            plot_routed = true;
    CHECK(plot_routed);
}

TEST_CASE("audit_clip flags a mid-clip identity drop with the sample index") {
    testsup::TempDir dir("clipaudit");
    Screenplay sp = example_screenplay();
    MemoryPackage pkg = two_character_package();
    std::filesystem::create_directories(dir.sub("reference_images"));
    write_tagged(dir.sub("reference_images/character_01_portrait_1.png"),
                 {0, 0, "", {"@character_01"}, 1});
    write_tagged(dir.sub("reference_images/character_02_portrait_1.png"),
                 {0, 0, "", {"@character_02"}, 1});
    MemoryPackage local = pkg;
    for (auto& path : local.character_refs) path = dir.sub(path);
    for (auto& [id, m] : local.character_mappings)
        for (auto& p : m.portraits) p = dir.sub(p);

    json descriptor = {
        {"v", 1},
        {"duration", 6.0},
        {"keyframe", "k.png"},
        {"samples",
         json::array({json{{"row", 0}, {"col", 0}, {"scene", "major_scene_01"},
                           {"characters", {"@character_01", "@character_02"}}, {"attempt", 1}},
                      json{{"row", 0}, {"col", 0}, {"scene", "major_scene_01"},
                           {"characters", {"@character_01"}}, {"attempt", 1}},
                      json{{"row", 0}, {"col", 0}, {"scene", "major_scene_01"},
                           {"characters", {"@character_01", "@character_02"}}, {"attempt", 1}}})},
        {"i2v_echo", sp.shots[0].i2v_prompt}};
    std::ofstream(dir.sub("clip.json")) << descriptor.dump();

    MockWorld world;
    MockJudge judge(world);
    MockEmbed embed(world);
    AuditResult result = audit_clip({dir.sub("clip.json"), 6.0}, local, sp.shots[0], judge, embed,
                                    default_thresholds());
    CHECK(!result.overall_pass);
    bool identity_fail = false;
    for (const auto& f : result.feedback)
        if (f.dimension == Dimension::Identity &&
            f.description.find("sample 1") != std::string::npos)
            identity_fail = true;
    CHECK(identity_fail);
}

TEST_CASE("verification_loop retries until clean, bounded by the budget") {
    testsup::TempDir dir("loop");
    Screenplay sp = example_screenplay();
    MemoryPackage pkg = two_character_package();
    std::filesystem::create_directories(dir.sub("reference_images"));
    write_tagged(dir.sub("reference_images/character_01_portrait_1.png"),
                 {0, 0, "", {"@character_01"}, 1});
    write_tagged(dir.sub("reference_images/character_02_portrait_1.png"),
                 {0, 0, "", {"@character_02"}, 1});
    for (auto& path : pkg.character_refs) path = dir.sub(path);
    for (auto& [id, m] : pkg.character_mappings)
        for (auto& p : m.portraits) p = dir.sub(p);

    auto write_attempt = [&](int attempt, bool corrupt) {
        std::string path = dir.sub("kf_attempt" + std::to_string(attempt) + ".png");
        write_tagged(path, {0, 0, "major_scene_01",
                            corrupt ? std::vector<std::string>{"@character_01", "@imposter_42"}
                                    : std::vector<std::string>{"@character_01", "@character_02"},
                            attempt});
        Keyframe kf;
        kf.shot_id = "9";
        kf.path = path;
        kf.provenance.attempt = attempt;
        return kf;
    };

    MockWorld world;
    MockJudge judge(world);
    MockEmbed embed(world);
    AuditThresholds thresholds = default_thresholds();

    SUBCASE("fault only on attempt 1") {
        ShotJob job;
        job.shot_id = "9";
        job.package = pkg;
        job.attempt = 1;
        job.keyframe = write_attempt(1, true);

        int audits = 0;
        LoopHooks hooks;
        hooks.regenerate_keyframe = [&](const MemoryPackage&, int attempt) {
            return write_attempt(attempt, false);
        };
        hooks.on_audit = [&](Stage, int, const AuditResult&) { ++audits; };

        ShotJob done = verification_loop(std::move(job), Stage::Keyframe, sp, judge, embed,
                                         thresholds, hooks);
        CHECK(done.state == JobState::KeyframeReady);
        CHECK(done.attempt == 2);
        CHECK(audits == 2);
        CHECK(done.package.generation_feedback.size() == 1);
    }

    SUBCASE("permanent fault exhausts after max_retries + 1 audits") {
        thresholds.max_retries = 2;
        ShotJob job;
        job.shot_id = "9";
        job.package = pkg;
        job.attempt = 1;
        job.keyframe = write_attempt(1, true);

        int audits = 0;
        LoopHooks hooks;
        hooks.regenerate_keyframe = [&](const MemoryPackage&, int attempt) {
            return write_attempt(attempt, true);
        };
        hooks.on_audit = [&](Stage, int, const AuditResult&) { ++audits; };

        ShotJob done = verification_loop(std::move(job), Stage::Keyframe, sp, judge, embed,
                                         thresholds, hooks);
        CHECK(done.state == JobState::Exhausted);
        CHECK(audits == 3);
        CHECK(done.attempt == 3);
        // Evidence equals the cumulative failed verdict count.
        CHECK(done.package.generation_feedback.size() == 3);
    }

    SUBCASE("first-audit pass leaves the package untouched") {
        ShotJob job;
        job.shot_id = "9";
        job.package = pkg;
        job.attempt = 1;
        job.keyframe = write_attempt(1, false);

        LoopHooks hooks;
        ShotJob done = verification_loop(std::move(job), Stage::Keyframe, sp, judge, embed,
                                         thresholds, hooks);
        CHECK(done.state == JobState::KeyframeReady);
        CHECK(done.attempt == 1);
        CHECK(done.package.to_json() == pkg.to_json());
    }
}

TEST_CASE("audit does not mutate the package") {
    testsup::TempDir dir("purity");
    Screenplay sp = example_screenplay();
    MemoryPackage pkg = two_character_package();
    pkg.character_refs.clear();  // no portrait gating for this one
    pkg.character_mappings.clear();

    Keyframe kf;
    kf.shot_id = "9";
    kf.path = dir.sub("kf.png");
    write_tagged(kf.path, {0, 0, "major_scene_01", {"@character_01", "@character_02"}, 1});

    MockWorld world;
    MockJudge judge(world);
    MockEmbed embed(world);
    json before = pkg.to_json();
    audit_keyframe(kf, pkg, sp.shots[0], judge, embed, default_thresholds());
    CHECK(pkg.to_json() == before);
}

}  // TEST_SUITE
