#include <doctest.h>

#include <fstream>

#include "cine/errors.hpp"
#include "cine/fixtures.hpp"
#include "cine/pipeline.hpp"
#include "support.hpp"

using namespace cine;

namespace {

RunConfig mock_config(std::uint64_t seed, double fault_rate, int max_retries) {
    RunConfig config = RunConfig::offline_defaults();
    config.seed = seed;
    config.thresholds.max_retries = max_retries;
    for (auto& [kind, backend] : config.backends) backend.mock->fault_rate = 0.0;
    config.backends[BackendKind::ImageGen].mock->fault_rate = fault_rate;
    config.backends[BackendKind::VideoGen].mock->fault_rate = fault_rate;
    return config;
}

SourceSpec fixture_source(const std::string& dir, const FixtureParams& params) {
    Screenplay sp = synth_screenplay(params);
    std::filesystem::create_directories(dir);
    std::ofstream out(dir + "/source_screenplay.json");
    out << serialize_screenplay(sp);
    out.close();

    SourceSpec source;
    source.screenplay_path = dir + "/source_screenplay.json";
    for (const auto& c : sp.characters)
        source.character_mapping[c.character_id] = {"Target " + c.primary_name, {}};
    source.style = "clay";
    return source;
}

int count_events(const std::vector<json>& events, const std::string& type) {
    int n = 0;
    for (const auto& e : events)
        if (e.value("type", "") == type) ++n;
    return n;
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("fault-free mock run verifies every shot on attempt one") {
    testsup::TempDir dir("run");
    FixtureParams params;
    params.scenes = 2;
    params.shots = 12;
    params.seed = 5;
    SourceSpec source = fixture_source(dir.sub("in"), params);
    RunConfig config = mock_config(11, 0.0, 3);

    RunManifest manifest =
        run_remake(source, make_backends(config), config, dir.sub("run"));

    CHECK(manifest.completed);
    CHECK(manifest.count_in_state(JobState::Verified) == 12);
    for (const auto& [id, job] : manifest.jobs) {
        CHECK(job.state == JobState::Verified);
        CHECK(job.package.generation_feedback.empty());
    }
    REQUIRE(manifest.edl.entries.size() == 12);
    for (std::size_t i = 0; i < manifest.edl.entries.size(); ++i)
        CHECK(manifest.edl.entries[i].shot_id == manifest.shot_order[i]);

    // One image call per batch at the keyframe stage.
    auto events = EventLog::read(dir.sub("run") + "/" + kEventsFile);
    int grid_requests = 0;
    for (const auto& e : events)
        if (e.value("type", "") == "generation_request" && e.value("kind", "") == "image" &&
            e.value("stage", "") == "keyframe")
            ++grid_requests;
    CHECK(grid_requests == int(manifest.batches.size()));
}

TEST_CASE("conditioning invariant holds for every logged generation request") {
    testsup::TempDir dir("conditioning");
    FixtureParams params;
    params.scenes = 2;
    params.shots = 8;
    SourceSpec source = fixture_source(dir.sub("in"), params);
    RunConfig config = mock_config(3, 0.2, 2);

    run_remake(source, make_backends(config), config, dir.sub("run"));

    auto events = EventLog::read(dir.sub("run") + "/" + kEventsFile);
    int requests = 0;
    for (const auto& e : events) {
        if (e.value("type", "") != "generation_request") continue;
        ++requests;
        CHECK(!e.at("prompt").get<std::string>().empty());
        REQUIRE(e.at("references").is_array());
        CHECK(!e.at("references").empty());
        if (!e.at("environment_ref").is_null())
            CHECK(e.at("references")[0] == e.at("environment_ref"));
    }
    CHECK(requests > 0);
}

TEST_CASE("permanent faults exhaust every shot with exactly max_retries+1 attempts") {
    testsup::TempDir dir("exhaust");
    FixtureParams params;
    params.scenes = 1;
    params.shots = 4;
    SourceSpec source = fixture_source(dir.sub("in"), params);
    RunConfig config = mock_config(7, 1.0, 2);

    RunManifest manifest = run_remake(source, make_backends(config), config, dir.sub("run"));
    CHECK(manifest.count_in_state(JobState::Exhausted) == 4);

    auto events = EventLog::read(dir.sub("run") + "/" + kEventsFile);
    std::map<std::pair<std::string, std::string>, int> audits;  // (shot, stage) -> count
    for (const auto& e : events)
        if (e.value("type", "") == "audit")
            audits[{e.at("shot_id"), e.at("stage")}]++;
    for (const auto& [key, count] : audits) CHECK(count == 3);  // max_retries + 1
    CHECK(audits.size() == 8);  // 4 shots x 2 stages
}

TEST_CASE("retry-bound and feedback bookkeeping survive moderate fault rates") {
    testsup::TempDir dir("faulty");
    FixtureParams params;
    params.scenes = 2;
    params.shots = 10;
    SourceSpec source = fixture_source(dir.sub("in"), params);
    RunConfig config = mock_config(21, 0.3, 3);

    RunManifest manifest = run_remake(source, make_backends(config), config, dir.sub("run"));
    auto events = EventLog::read(dir.sub("run") + "/" + kEventsFile);

    std::map<std::pair<std::string, std::string>, int> attempts;
    std::map<std::string, int> failed_verdicts;
    for (const auto& e : events) {
        if (e.value("type", "") == "audit") {
            auto key = std::make_pair(e.at("shot_id").get<std::string>(),
                                      e.at("stage").get<std::string>());
            attempts[key] = std::max(attempts[key], e.at("attempt").get<int>());
            for (const auto& v : e.at("verdicts"))
                if (!v.at("pass").get<bool>()) failed_verdicts[e.at("shot_id")]++;
        }
    }
    for (const auto& [key, max_attempt] : attempts) CHECK(max_attempt <= 4);

    // Evidence length equals the cumulative failed verdict count per shot.
    for (const auto& [id, job] : manifest.jobs)
        CHECK(job.package.generation_feedback.size() == std::size_t(failed_verdicts[id]));

    // Feedback routing: plot -> understanding, others -> generation.
    for (const auto& e : events) {
        if (e.value("type", "") != "feedback") continue;
        if (e.at("dimension") == "plot")
            CHECK(e.at("route") == "understanding");
        else
            CHECK(e.at("route") == "generation");
    }
}

TEST_CASE("stitch keeps screenplay order and modes behave") {
    std::map<std::string, ShotJob> jobs;
    std::vector<std::string> order = {"1", "2", "3", "4", "5"};
    for (const auto& id : order) {
        ShotJob job;
        job.shot_id = id;
        job.state = JobState::Verified;
        job.clip = ClipHandle{"clips/shot_" + id + "_attempt1.json", 6.0};
        jobs[id] = job;
    }

    EditDecisionList edl = stitch(jobs, order, true);
    REQUIRE(edl.entries.size() == 5);
    for (std::size_t i = 0; i < order.size(); ++i) CHECK(edl.entries[i].shot_id == order[i]);

    jobs["3"].state = JobState::Exhausted;
    jobs["3"].best_clip = ClipHandle{"clips/shot_3_attempt2.json", 6.0};
    CHECK_THROWS_AS(stitch(jobs, order, true), IncompleteRun);

    EditDecisionList lenient = stitch(jobs, order, false);
    REQUIRE(lenient.entries.size() == 5);
    CHECK(lenient.entries[2].clip == "clips/shot_3_attempt2.json");
}

TEST_CASE("interrupted run resumes to a manifest identical to an uninterrupted one") {
    FixtureParams params;
    params.scenes = 2;
    params.shots = 8;
    params.seed = 3;

    testsup::TempDir full_dir("full");
    SourceSpec source_a = fixture_source(full_dir.sub("in"), params);
    RunConfig config = mock_config(17, 0.25, 2);
    run_remake(source_a, make_backends(config), config, full_dir.sub("run"));

    testsup::TempDir cut_dir("cut");
    SourceSpec source_b = fixture_source(cut_dir.sub("in"), params);
    RunConfig stopping = config;
    stopping.stop_after = "keyframes";
    RunManifest partial =
        run_remake(source_b, make_backends(stopping), stopping, cut_dir.sub("run"));
    CHECK(!partial.completed);

    RunManifest resumed = resume_run(cut_dir.sub("run"), make_backends(config));
    CHECK(resumed.completed);

    auto full_events = normalized_events_from_file(full_dir.sub("run") + "/" + kEventsFile);
    auto resumed_events = normalized_events_from_file(cut_dir.sub("run") + "/" + kEventsFile);
    REQUIRE(full_events.size() == resumed_events.size());
    for (std::size_t i = 0; i < full_events.size(); ++i)
        CHECK(full_events[i] == resumed_events[i]);

    // And the reports agree byte for byte.
    std::ifstream fa(full_dir.sub("run") + "/" + kReportFile);
    std::ifstream fb(cut_dir.sub("run") + "/" + kReportFile);
    std::string ra((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
    std::string rb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
    CHECK(ra == rb);
}

TEST_CASE("resuming a finished run issues no further work") {
    testsup::TempDir dir("idem");
    FixtureParams params;
    params.scenes = 1;
    params.shots = 4;
    SourceSpec source = fixture_source(dir.sub("in"), params);
    RunConfig config = mock_config(2, 0.0, 1);
    run_remake(source, make_backends(config), config, dir.sub("run"));

    auto before = EventLog::read(dir.sub("run") + "/" + kEventsFile);
    RunManifest again = resume_run(dir.sub("run"), make_backends(config));
    auto after = EventLog::read(dir.sub("run") + "/" + kEventsFile);
    CHECK(again.completed);
    CHECK(before.size() == after.size());
    CHECK(count_events(after, "generation_request") ==
          count_events(before, "generation_request"));
}

TEST_CASE("a truncated event log is reported as corrupt") {
    testsup::TempDir dir("corrupt");
    FixtureParams params;
    params.scenes = 1;
    params.shots = 2;
    SourceSpec source = fixture_source(dir.sub("in"), params);
    RunConfig config = mock_config(9, 0.0, 1);
    run_remake(source, make_backends(config), config, dir.sub("run"));

    // Truncate the last line mid-record.
    std::string path = dir.sub("run") + "/" + kEventsFile;
    std::ifstream in(path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    std::ofstream out(path, std::ios::trunc);
    out << text.substr(0, text.size() - 20);
    out.close();

    CHECK_THROWS_AS(resume_run(dir.sub("run"), make_backends(config)), CorruptManifest);
}

TEST_CASE("generate_references covers scenes, portraits and main-character clothing") {
    testsup::TempDir dir("refs");
    FixtureParams params;
    params.scenes = 2;
    params.shots = 6;
    params.characters = 2;
    params.mains = 2;
    Screenplay sp = synth_screenplay(params);

    SourceSpec source;
    for (const auto& c : sp.characters)
        source.character_mapping[c.character_id] = {"Target", {}};
    RunConfig config = mock_config(4, 0.0, 1);

    MockWorld world;
    world.seed = config.seed;
    MockImageGen image_gen(world);
    ValidationReport findings;
    ReferenceRegistry registry =
        generate_references(sp, source, image_gen, config, dir.path(), &findings);

    CHECK(registry.environments().size() == 2);
    CHECK(registry.portraits().size() == 2);
    CHECK(registry.clothing().size() <= 4);
    CHECK(!registry.clothing().empty());

    // Environment prompts never mention characters.
    for (const auto& scene : sp.major_scenes) {
        std::string prompt = environment_ref_prompt(scene.scene_id,
                                                    scene.environment_description, "STYLE");
        CHECK(prompt.find("@character_") == std::string::npos);
    }

    SUBCASE("copy mode skips clothing and reuses portraits") {
        SourceSpec copy = source;
        copy.copy_mode = true;
        ReferenceRegistry reg2 =
            generate_references(sp, copy, image_gen, config, dir.sub("copy"), &findings);
        CHECK(reg2.clothing().empty());
        CHECK(reg2.portraits().size() == 2);
        CHECK(reg2.copy_mode());
    }
}

TEST_CASE("clip durations clamp into the supported range") {
    testsup::TempDir dir("clamp");
    FixtureParams params;
    params.scenes = 1;
    params.shots = 2;
    SourceSpec source = fixture_source(dir.sub("in"), params);
    RunConfig config = mock_config(6, 0.0, 1);
    config.clip_duration = 10.0;  // out of range, clamped to 8

    RunManifest manifest = run_remake(source, make_backends(config), config, dir.sub("run"));
    for (const auto& entry : manifest.edl.entries) CHECK(entry.duration == doctest::Approx(8.0));
}

TEST_CASE("global-context ablation conditions every shot on the full roster") {
    testsup::TempDir dir("global");
    FixtureParams params;
    params.scenes = 1;
    params.shots = 4;
    params.characters = 3;
    params.mains = 3;
    SourceSpec source = fixture_source(dir.sub("in"), params);
    RunConfig config = mock_config(8, 0.0, 1);
    config.global_context = true;

    RunManifest manifest = run_remake(source, make_backends(config), config, dir.sub("run"));
    for (const auto& [id, job] : manifest.jobs)
        CHECK(job.package.characters.size() == 3);
    // Shots whose true cast is smaller than the roster fail quality audits
    // and run out of budget.
    int full_cast = 0;
    for (const auto& shot : manifest.screenplay.shots)
        if (shot.character_set().size() == 3) ++full_cast;
    REQUIRE(full_cast < 4);  // the fixture seed must provide partial casts
    CHECK(manifest.count_in_state(JobState::Verified) == full_cast);
}

TEST_CASE("run ids derive from the seed") {
    testsup::TempDir dir("runid");
    FixtureParams params;
    params.scenes = 1;
    params.shots = 2;
    SourceSpec source = fixture_source(dir.sub("in"), params);
    RunConfig config = mock_config(123, 0.0, 1);
    RunManifest a = run_remake(source, make_backends(config), config, dir.sub("a"));
    RunManifest b = run_remake(source, make_backends(config), config, dir.sub("b"));
    CHECK(a.run_id == b.run_id);

    auto ea = normalized_events_from_file(dir.sub("a") + "/" + kEventsFile);
    auto eb = normalized_events_from_file(dir.sub("b") + "/" + kEventsFile);
    CHECK(ea == eb);
}

}  // TEST_SUITE
