#include <doctest.h>

#include <thread>

#include <httplib.h>

#include "cine/errors.hpp"
#include "cine/fixtures.hpp"
#include "cine/http_backends.hpp"
#include "cine/image.hpp"
#include "cine/mock_backends.hpp"
#include "cine/run_config.hpp"
#include "support.hpp"

using namespace cine;

namespace {

std::string grid_prompt_2x2(int attempt = 1) {
    std::string p = "STYLE: TEST\nENVIRONMENT major_scene_01: ward.\nGRID 2x2\n";
    for (int i = 0; i < 4; ++i) {
        p += "CELL (" + std::to_string(i / 2) + "," + std::to_string(i % 2) +
             ") [scene=major_scene_01; characters=@character_01,@character_02; attempt=" +
             std::to_string(attempt) + "]: shot " + std::to_string(i + 1) +
             " prompt | camera: push\n";
    }
    p += "Constraints: no subtitles, no watermarks, no text overlays";
    return p;
}

// Writes a keyframe + sidecar pair for judge/embed tests.
void write_tagged_image(const std::string& path, const CellTags& tags) {
    Image img(8, 8);
    write_png(path, img);
    write_sidecar(path, cells_to_sidecar({tags}));
}

MemoryPackage simple_package() {
    MemoryPackage pkg;
    pkg.shot_id = "9";
    pkg.major_scene = "major_scene_01";
    pkg.characters = {"@character_01", "@character_02"};
    pkg.environment_ref = "reference_images/major_scene_01_environment.png";
    pkg.character_refs = {"reference_images/character_01_portrait_1.png",
                          "reference_images/character_02_portrait_1.png"};
    pkg.character_mappings["@character_01"] = {"A", "", {pkg.character_refs[0]}};
    pkg.character_mappings["@character_02"] = {"B", "", {pkg.character_refs[1]}};
    pkg.narrative.language_prompt = "Medium close-up of the lead near the door";
    pkg.narrative.i2v_prompt = "Dynamic sequence for shot 9";
    return pkg;
}

Shot simple_shot() {
    Shot s;
    s.shot_id = "9";
    s.scene_id = "major_scene_01";
    s.characters = {"@character_01", "@character_02"};
    s.one_shot_prompt = "Medium close-up of the lead near the door";
    s.i2v_prompt = "Dynamic sequence for shot 9";
    s.subject_movement.action = "turns toward the door";
    return s;
}

// Transport-flaky decorator used by the retry tests.
class FlakyImageGen : public ImageGenBackend {
public:
    FlakyImageGen(std::shared_ptr<ImageGenBackend> inner, int failures)
        : inner_(std::move(inner)), remaining_(failures) {}
    GeneratedImage generate_image(const ImageGenRequest& req) override {
        if (remaining_ > 0) {
            --remaining_;
            throw TransportError("synthetic outage");
        }
        return inner_->generate_image(req);
    }
    int calls_failed() const { return remaining_; }

private:
    std::shared_ptr<ImageGenBackend> inner_;
    int remaining_;
};

}  // namespace

TEST_SUITE("backends") {

TEST_CASE("mock understanding is byte-deterministic") {
    MockWorld world;
    world.seed = 7;
    MockUnderstanding backend(world);
    CHECK(backend.understand("demo_2scene", "") == backend.understand("demo_2scene", ""));
}

TEST_CASE("demo_2scene yields two scenes") {
    MockWorld world;
    world.seed = 7;
    MockUnderstanding backend(world);
    Screenplay sp = understand_validated(backend, "demo_2scene", "");
    CHECK(sp.major_scenes.size() == 2);
    CHECK(sp.metadata.total_scenes == 2);
}

TEST_CASE("dangling references surface as NonconformingOutput") {
    MockWorld world;
    MockUnderstanding backend(world);
    CHECK_THROWS_AS(understand_validated(backend, "demo_2scene_dangling", ""),
                    NonconformingOutput);
}

TEST_CASE("mock image generation honors the dimension contract") {
    MockWorld world;
    MockImageGen backend(world);
    ImageGenRequest req;
    req.prompt = grid_prompt_2x2();
    req.width = 1920;
    req.height = 1080;
    GeneratedImage out = backend.generate_image(req);
    Image img = decode_png(out.png);
    CHECK(img.width == 1920);
    CHECK(img.height == 1080);
}

TEST_CASE("fault-free sidecars echo the prompt tags for all cells") {
    MockWorld world;
    world.fault_rate = 0.0;
    MockImageGen backend(world);
    ImageGenRequest req;
    req.prompt = grid_prompt_2x2();
    req.width = 640;
    req.height = 360;
    GeneratedImage out = backend.generate_image(req);
    auto cells = cells_from_sidecar(out.tags);
    REQUIRE(cells.size() == 4);
    for (const auto& c : cells) {
        CHECK(c.scene == "major_scene_01");
        CHECK(c.characters ==
              std::vector<std::string>{"@character_01", "@character_02"});
        CHECK(c.attempt == 1);
    }
}

TEST_CASE("corruption is seeded and reproducible") {
    MockWorld world;
    world.seed = 123;
    world.fault_rate = 0.5;
    MockImageGen a(world), b(world);
    ImageGenRequest req;
    req.prompt = grid_prompt_2x2();
    req.width = 64;
    req.height = 64;
    CHECK(a.generate_image(req).tags == b.generate_image(req).tags);
    CHECK(a.generate_image(req).png == b.generate_image(req).png);

    // A different seed redraws the corruption pattern eventually.
    bool differs = false;
    for (std::uint64_t s = 1; s < 20 && !differs; ++s) {
        MockWorld other = world;
        other.seed = s;
        differs = MockImageGen(other).generate_image(req).tags != a.generate_image(req).tags;
    }
    CHECK(differs);
}

TEST_CASE("video duration is range-guarded before dispatch") {
    MockWorld world;
    MockVideoGen backend(world);
    VideoGenRequest req;
    req.keyframe = "missing.png";
    req.i2v_prompt = "motion";
    req.duration = 9.0;
    CHECK_THROWS_AS(backend.generate_video(req), std::invalid_argument);

    req.duration = 6.0;
    GeneratedClip clip = backend.generate_video(req);
    CHECK(clip.duration == doctest::Approx(6.0));
}

TEST_CASE("clips propagate keyframe tags when fault-free") {
    testsup::TempDir dir("clip");
    std::string kf = dir.sub("kf.png");
    write_tagged_image(kf, {0, 0, "major_scene_01", {"@character_01"}, 1});

    MockWorld world;
    MockVideoGen backend(world);
    VideoGenRequest req;
    req.keyframe = kf;
    req.i2v_prompt = "Dynamic sequence";
    req.duration = 6.0;
    GeneratedClip clip = backend.generate_video(req);
    REQUIRE(clip.descriptor.contains("samples"));
    CHECK(clip.descriptor["samples"].size() == 3);
    for (const auto& s : clip.descriptor["samples"]) {
        CHECK(s["scene"] == "major_scene_01");
        CHECK(s["characters"] == json::array({"@character_01"}));
    }
    CHECK(clip.descriptor["i2v_echo"] == "Dynamic sequence");
}

TEST_CASE("mock judge scores the four dimensions against the package") {
    testsup::TempDir dir("judge");
    MockWorld world;
    MockJudge judge(world);
    MemoryPackage pkg = simple_package();
    Shot shot = simple_shot();
    JudgeContext ctx{&pkg, &shot};

    std::string clean = dir.sub("clean.png");
    write_tagged_image(clean, {0, 0, "major_scene_01",
                               {"@character_01", "@character_02"}, 1});
    for (Dimension dim : kAllDimensions) {
        JudgeVerdict v = judge.judge(clean, ctx, dim, 7.0);
        CHECK(v.score == doctest::Approx(10.0));
        CHECK(v.pass);
    }

    // One swapped identity: identity 4 (fail at 7), quality still 10.
    std::string swapped = dir.sub("swapped.png");
    write_tagged_image(swapped, {0, 0, "major_scene_01",
                                 {"@character_01", "@imposter_55"}, 1});
    JudgeVerdict identity = judge.judge(swapped, ctx, Dimension::Identity, 7.0);
    CHECK(identity.score == doctest::Approx(4.0));
    CHECK(!identity.pass);
    JudgeVerdict quality = judge.judge(swapped, ctx, Dimension::Quality, 7.0);
    CHECK(quality.pass);

    // Wrong scene: environment fails, identity unaffected.
    std::string moved = dir.sub("moved.png");
    write_tagged_image(moved, {0, 0, "major_scene_01_mutated",
                               {"@character_01", "@character_02"}, 1});
    CHECK(!judge.judge(moved, ctx, Dimension::Environment, 7.0).pass);
    CHECK(judge.judge(moved, ctx, Dimension::Identity, 7.0).pass);
}

TEST_CASE("embed similarity is Jaccard over tags") {
    testsup::TempDir dir("embed");
    MockWorld world;
    MockEmbed embed(world);

    std::string a = dir.sub("a.png");
    std::string b = dir.sub("b.png");
    std::string c = dir.sub("c.png");
    write_tagged_image(a, {0, 0, "x", {"@y"}, 1});
    write_tagged_image(b, {0, 0, "x", {"@z"}, 1});
    write_tagged_image(c, {0, 0, "q", {"@w"}, 1});

    CHECK(embed.embed_similarity(Region::whole(a), Region::whole(a)) == doctest::Approx(1.0));
    CHECK(embed.embed_similarity(Region::whole(a), Region::whole(c)) == doctest::Approx(0.0));
    // {scene:x, char:@y} vs {scene:x, char:@z}: one shared of three.
    CHECK(embed.embed_similarity(Region::whole(a), Region::whole(b)) ==
          doctest::Approx(1.0 / 3.0));
    // Symmetry.
    CHECK(embed.embed_similarity(Region::whole(a), Region::whole(b)) ==
          embed.embed_similarity(Region::whole(b), Region::whole(a)));
}

TEST_CASE("character regions collapse to the matching identity tag") {
    testsup::TempDir dir("regionkind");
    std::string kf = dir.sub("kf.png");
    write_tagged_image(kf, {0, 0, "s", {"@character_01", "@character_02"}, 1});
    std::string portrait = dir.sub("portrait.png");
    write_tagged_image(portrait, {0, 0, "", {"@character_01"}, 1});

    MockWorld world;
    MockEmbed embed(world);
    CHECK(embed.embed_similarity(Region::character(kf, "@character_01"),
                                 Region::whole(portrait)) == doctest::Approx(1.0));
    // Drifted: the expected identity is absent, whatever rendered disagrees.
    std::string drifted = dir.sub("drifted.png");
    write_tagged_image(drifted, {0, 0, "s", {"@imposter_11"}, 1});
    CHECK(embed.embed_similarity(Region::character(drifted, "@character_01"),
                                 Region::whole(portrait)) == doctest::Approx(0.0));
}

TEST_CASE("transport retries recover transient failures") {
    MockWorld world;
    auto inner = std::make_shared<MockImageGen>(world);
    ImageGenRequest req;
    req.prompt = "PORTRAIT_REF [character=@character_01]: head shot";
    req.width = 32;
    req.height = 32;

    FlakyImageGen twice(inner, 2);
    GeneratedImage ok = with_transport_retries(2, [&] { return twice.generate_image(req); });
    CHECK(!ok.png.empty());

    FlakyImageGen three(inner, 3);
    CHECK_THROWS_AS(with_transport_retries(2, [&] { return three.generate_image(req); }),
                    TransportError);
}

TEST_CASE("refusals are not retried as transport errors") {
    MockWorld world;
    MockImageGen backend(world);
    ImageGenRequest req;
    req.prompt = "TRIGGER_REFUSAL please";
    req.width = 8;
    req.height = 8;
    CHECK_THROWS_AS(backend.generate_image(req), BackendRefusal);
}

// The same black-box expectations hold for the HTTP adapter, exercised
// against an in-process server.
TEST_CASE("http adapters pass the backend contract") {
    httplib::Server server;
    MockWorld world;
    MockImageGen mock_image(world);

    server.Post("/v1/image", [&](const httplib::Request& req, httplib::Response& res) {
        json body = json::parse(req.body);
        ImageGenRequest r;
        r.prompt = body.at("prompt");
        r.width = body.at("width");
        r.height = body.at("height");
        GeneratedImage img = mock_image.generate_image(r);
        res.set_content(std::string(img.png.begin(), img.png.end()), "image/png");
    });
    server.Post("/v1/video", [&](const httplib::Request& req, httplib::Response& res) {
        json body = json::parse(req.body);
        res.set_content(json{{"duration", body.at("duration")}, {"video_base64", ""}}.dump(),
                        "application/json");
    });
    server.Post("/v1/judge", [&](const httplib::Request&, httplib::Response& res) {
        res.set_content(json{{"score", 9.0}, {"rationale", "ok"}}.dump(), "application/json");
    });
    server.Post("/v1/embed", [&](const httplib::Request&, httplib::Response& res) {
        res.set_content(json{{"similarity", 0.75}}.dump(), "application/json");
    });
    server.Post("/v1/refuse", [&](const httplib::Request&, httplib::Response& res) {
        res.status = 422;
        res.set_content("nope", "text/plain");
    });
    server.Post("/v1/flaky", [&](const httplib::Request&, httplib::Response& res) {
        static int calls = 0;
        if (calls++ < 1) {
            res.status = 503;
            return;
        }
        res.set_content(json{{"similarity", 1.0}}.dump(), "application/json");
    });

    int port = server.bind_to_any_port("127.0.0.1");
    std::thread thread([&] { server.listen_after_bind(); });
    server.wait_until_ready();
    std::string base = "http://127.0.0.1:" + std::to_string(port);

    auto config_for = [&](const std::string& path) {
        BackendConfig c;
        c.endpoint = base + path;
        c.timeout = 5.0;
        return c;
    };

    {
        HttpImageGen image(config_for("/v1/image"));
        ImageGenRequest req;
        req.prompt = "PORTRAIT_REF [character=@character_01]: head shot";
        req.width = 48;
        req.height = 32;
        Image img = decode_png(image.generate_image(req).png);
        CHECK(img.width == 48);
        CHECK(img.height == 32);
    }
    {
        HttpVideoGen video(config_for("/v1/video"));
        VideoGenRequest req;
        req.keyframe = "k.png";
        req.i2v_prompt = "motion";
        req.duration = 9.0;  // guarded client-side, never dispatched
        CHECK_THROWS_AS(video.generate_video(req), std::invalid_argument);
        req.duration = 5.0;
        CHECK(video.generate_video(req).duration == doctest::Approx(5.0));
    }
    {
        HttpJudge judge(config_for("/v1/judge"));
        JudgeVerdict v = judge.judge_text("a", "b", 7.0);
        CHECK(v.score == doctest::Approx(9.0));
        CHECK(v.pass);
    }
    {
        HttpEmbed embed(config_for("/v1/embed"));
        CHECK(embed.embed_similarity(Region::whole("a.png"), Region::whole("b.png")) ==
              doctest::Approx(0.75));
    }
    {
        HttpEmbed refuse(config_for("/v1/refuse"));
        CHECK_THROWS_AS(refuse.embed_similarity(Region::whole("a"), Region::whole("b")),
                        BackendRefusal);
    }
    {
        HttpEmbed flaky(config_for("/v1/flaky"));
        double sim = with_transport_retries(
            1, [&] { return flaky.embed_similarity(Region::whole("a"), Region::whole("b")); });
        CHECK(sim == doctest::Approx(1.0));
    }

    server.stop();
    thread.join();
}

TEST_CASE("config validation rejects out-of-range values") {
    RunConfig config = RunConfig::offline_defaults();
    CHECK_NOTHROW(config.validate());
    config.backends[BackendKind::Judge].timeout = 0;
    CHECK_THROWS_AS(config.validate(), ConfigError);

    RunConfig c2 = RunConfig::offline_defaults();
    c2.backends[BackendKind::Embed].max_concurrent = 0;
    CHECK_THROWS_AS(c2.validate(), ConfigError);

    RunConfig c3 = RunConfig::offline_defaults();
    c3.thresholds.face_match_accept = 1.5;
    CHECK_THROWS_AS(c3.validate(), ConfigError);
}

}  // TEST_SUITE
