// cineremake: consistency-first remaking of long multi-shot videos over
// pluggable model backends, with a fully deterministic offline mock mode.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "cine/bench.hpp"
#include "cine/errors.hpp"
#include "cine/fixtures.hpp"
#include "cine/hashing.hpp"
#include "cine/mock_backends.hpp"
#include "cine/pipeline.hpp"
#include "cine/run_config.hpp"

namespace fs = std::filesystem;
using namespace cine;

namespace {

// Exit codes: 0 ok, 2 config/schema/format, 3 transport, 4 incomplete run
// (strict mode), 5 eval join failure.
constexpr int kExitOk = 0;
constexpr int kExitSchema = 2;
constexpr int kExitTransport = 3;
constexpr int kExitIncomplete = 4;
constexpr int kExitJoin = 5;

struct GlobalOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    bool json_errors = false;
};

RunConfig load_config(const GlobalOptions& global) {
    RunConfig config = global.config_path.empty() ? RunConfig::offline_defaults()
                                                  : load_run_config(global.config_path);
    if (global.seed) config.seed = *global.seed;  // flags override file values
    config.validate();
    return config;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoFailure("cannot read " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, const std::string& text) {
    fs::path parent = fs::path(path).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
    std::ofstream out(path);
    if (!out) throw IoFailure("cannot write " + path);
    out << text;
}

SourceSpec load_mapping(const std::string& path) {
    SourceSpec spec;
    if (path.empty()) return spec;
    json j = json::parse(read_file(path));
    for (auto it = j.begin(); it != j.end(); ++it) {
        CharacterTarget target;
        target.target_name = it.value().value("target_name", "");
        target.portraits = it.value().value("portraits", std::vector<std::string>{});
        spec.character_mapping[it.key()] = std::move(target);
    }
    return spec;
}

int classify_error(const std::exception& e) {
    if (dynamic_cast<const TransportError*>(&e)) return kExitTransport;
    if (dynamic_cast<const IncompleteRun*>(&e)) return kExitIncomplete;
    if (dynamic_cast<const EmptyJoin*>(&e)) return kExitJoin;
    return kExitSchema;
}

void report_error(const GlobalOptions& global, const std::exception& e) {
    if (global.json_errors) {
        json err = {{"error", {{"message", e.what()}}}};
        std::cerr << err.dump() << "\n";
    } else {
        std::cerr << "error: " << e.what() << "\n";
    }
}

// ---- per-run evaluation shared by `eval --mode remaking` and mock-demo ----

struct RunEvalInputs {
    std::string run_dir;
    BenchDocument gt;
    RegionsDocument regions;
};

EvalReport evaluate_run(const RunEvalInputs& inputs, const BackendSet& backends) {
    const std::string& run_dir = inputs.run_dir;
    Screenplay sp = parse_screenplay(read_file(run_dir + "/" + kScreenplayFile));
    ReferenceRegistry registry =
        ReferenceRegistry::load(sp, run_dir + "/" + std::string(kRegistryDir));
    json report = json::parse(read_file(run_dir + "/" + kReportFile));

    std::map<std::string, std::string> portraits;
    for (const auto& p : registry.portraits())
        if (!portraits.count(p.character_id))
            portraits[p.character_id] = run_dir + "/" + p.image.path;
    std::map<std::string, std::string> anchors;
    for (const auto& e : registry.environments())
        anchors[e.scene_id] = run_dir + "/" + e.image.path;
    std::map<std::string, std::string> shot_to_scene;
    for (const auto& shot : sp.shots) shot_to_scene[shot.shot_id] = shot.scene_id;

    EvalReport eval;
    eval.provenance = {{"run_id", report.value("run_id", "")},
                       {"seed", report.value("seed", std::uint64_t(0))},
                       {"backends", report.value("backends", json::object())},
                       {"aggregation", "macro (per-shot mean, then mean over shots)"}};

    eval.id_similarity = clip_id_score(inputs.regions, portraits, *backends.embed);
    eval.scene_similarity =
        clip_scene_score(inputs.regions, shot_to_scene, anchors, *backends.embed);

    // Keyframe groups per scene, skipping scenes with fewer than two shots.
    std::map<std::string, std::string> final_keyframe;
    for (const auto& row : report.at("shots"))
        if (!row.at("keyframe").is_null())
            final_keyframe[row.at("shot_id").get<std::string>()] = row.at("keyframe");
    std::map<std::string, const BenchShot*> gt_by_id;
    for (const auto& s : inputs.gt.shots) gt_by_id[s.shot_id] = &s;

    std::vector<SceneGroup> groups;
    for (const auto& scene : sp.major_scenes) {
        SceneGroup group;
        group.scene_id = scene.scene_id;
        for (const auto* shot : shots_of_scene(sp, scene.scene_id)) {
            auto it = final_keyframe.find(shot->shot_id);
            if (it == final_keyframe.end()) continue;
            group.keyframes.push_back(run_dir + "/" + it->second);
            auto gt_it = gt_by_id.find(shot->shot_id);
            std::vector<std::string> chars =
                gt_it != gt_by_id.end()
                    ? std::vector<std::string>(gt_it->second->character_set.begin(),
                                               gt_it->second->character_set.end())
                    : shot->characters;
            group.expectations.push_back({{"scene", scene.scene_id}, {"characters", chars}});
        }
        if (group.keyframes.size() >= 2) groups.push_back(std::move(group));
    }
    if (!groups.empty()) eval.vlm = vlm_scores(groups, *backends.judge);

    // Understanding track: the run's screenplay vs the ground truth.
    BenchDocument pred;
    for (const auto& shot : sp.shots) {
        BenchShot b;
        b.shot_id = shot.shot_id;
        b.character_set = shot.character_set();
        b.plot_description = shot.one_shot_prompt;
        pred.shots.push_back(std::move(b));
    }
    eval.understanding = eval_understanding(pred, inputs.gt, *backends.judge);
    return eval;
}

// Whole-frame conformance of final keyframes to the screenplay expectations;
// the offline stand-in for a cross-shot consistency metric.
double keyframe_consistency(const std::string& run_dir, const Screenplay& sp) {
    json report = json::parse(read_file(run_dir + "/" + kReportFile));
    double total = 0;
    int counted = 0;
    for (const auto& row : report.at("shots")) {
        if (row.at("keyframe").is_null()) continue;
        const Shot* shot = sp.find_shot(row.at("shot_id"));
        if (!shot) continue;
        std::set<std::string> expected = {"scene:" + shot->scene_id};
        for (const auto& c : shot->character_set()) expected.insert("char:" + c);
        auto tags =
            region_tags(Region::whole(run_dir + "/" + row.at("keyframe").get<std::string>()));
        total += jaccard(tags, expected);
        ++counted;
    }
    return counted ? total / counted : 0.0;
}

json run_scores(const std::string& run_dir, const Screenplay& sp, const BenchDocument& gt,
                const RegionsDocument& regions, const BackendSet& backends) {
    EvalReport eval = evaluate_run({run_dir, gt, regions}, backends);
    emit_report(eval, run_dir + "/eval");
    json report = json::parse(read_file(run_dir + "/" + kReportFile));
    int verified = report.value("verified", 0);
    int total = int(report.at("shots").size());
    return {{"verified", verified},
            {"total", total},
            {"verified_fraction", total ? double(verified) / total : 0.0},
            {"id_score", eval.id_similarity->overall},
            {"scene_score", eval.scene_similarity->overall},
            {"consistency", keyframe_consistency(run_dir, sp)},
            {"id_vlm", eval.vlm ? json(eval.vlm->id_vlm) : json(nullptr)},
            {"scene_vlm", eval.vlm ? json(eval.vlm->scene_vlm) : json(nullptr)},
            {"plot_vlm", eval.vlm ? json(eval.vlm->plot_vlm) : json(nullptr)},
            {"understanding_f1", eval.understanding->macro.f1}};
}

// Synthesizes gt + full-frame regions for a run's final keyframes.
void demo_eval_inputs(const Screenplay& sp, const std::string& run_dir, BenchDocument* gt,
                      RegionsDocument* regions) {
    json report = json::parse(read_file(run_dir + "/" + kReportFile));
    std::map<std::string, std::string> final_keyframe;
    for (const auto& row : report.at("shots"))
        if (!row.at("keyframe").is_null())
            final_keyframe[row.at("shot_id").get<std::string>()] = row.at("keyframe");

    gt->shots.clear();
    regions->frames.clear();
    for (const auto& shot : sp.shots) {
        BenchShot b;
        b.shot_id = shot.shot_id;
        b.character_set = shot.character_set();
        b.plot_description = shot.one_shot_prompt;
        gt->shots.push_back(b);

        auto it = final_keyframe.find(shot.shot_id);
        if (it == final_keyframe.end()) continue;
        FrameAnnotation frame;
        frame.frame = run_dir + "/" + it->second;
        frame.shot_id = shot.shot_id;
        for (const auto& c : shot.character_set())
            frame.regions.push_back({RegionAnnotation::Kind::Character, c, 0, 0,
                                     sp.metadata.width, sp.metadata.height});
        frame.regions.push_back({RegionAnnotation::Kind::Background, "", 0, 0, sp.metadata.width,
                                 sp.metadata.height});
        regions->frames.push_back(std::move(frame));
    }
}

json regions_to_json(const RegionsDocument& doc) {
    json frames = json::array();
    for (const auto& f : doc.frames) {
        json regions = json::array();
        for (const auto& r : f.regions) {
            json e = {{"kind", r.kind == RegionAnnotation::Kind::Character ? "character"
                                                                           : "background"},
                      {"x", r.x},
                      {"y", r.y},
                      {"w", r.w},
                      {"h", r.h}};
            if (r.kind == RegionAnnotation::Kind::Character) e["character_id"] = r.character_id;
            regions.push_back(std::move(e));
        }
        frames.push_back({{"frame", f.frame}, {"shot_id", f.shot_id}, {"regions", regions}});
    }
    return {{"frames", frames}};
}

json gt_to_json(const BenchDocument& doc) {
    json shots = json::array();
    for (const auto& s : doc.shots)
        shots.push_back({{"shot_id", s.shot_id},
                         {"characters", std::vector<std::string>(s.character_set.begin(),
                                                                 s.character_set.end())},
                         {"plot_description", s.plot_description}});
    json j = {{"shots", shots}};
    if (!doc.background_characters.empty())
        j["background_characters"] = std::vector<std::string>(doc.background_characters.begin(),
                                                              doc.background_characters.end());
    return j;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cineremake: long-video remaking with dual-bridge consistency control"};
    app.require_subcommand(1);

    GlobalOptions global;
    app.add_option("--config", global.config_path, "Run config JSON file");
    std::uint64_t seed_flag = 0;
    auto* seed_opt = app.add_option("--seed", seed_flag, "Override the run seed");
    app.add_flag("--json-errors", global.json_errors, "Machine-parsable errors on stderr");

    // understand
    auto* understand = app.add_subcommand("understand", "Produce a screenplay from a source");
    std::string u_source, u_out;
    understand->add_option("--source", u_source, "Video path or mock source descriptor")
        ->required();
    understand->add_option("--out", u_out, "Output screenplay JSON path")->required();

    // validate
    auto* validate = app.add_subcommand("validate", "Validate a screenplay file");
    std::string v_screenplay;
    validate->add_option("--screenplay", v_screenplay, "Screenplay JSON path")->required();

    // refs
    auto* refs = app.add_subcommand("refs", "Generate the visual anchor registry");
    std::string r_screenplay, r_mapping, r_style, r_out;
    bool r_copy = false;
    refs->add_option("--screenplay", r_screenplay)->required();
    refs->add_option("--mapping", r_mapping, "character_id -> target mapping JSON");
    refs->add_option("--style", r_style, "Target style text");
    refs->add_flag("--copy-mode", r_copy, "Reuse source character designs (2D styles)");
    refs->add_option("--out", r_out, "Registry/run directory")->required();

    // remake
    auto* remake = app.add_subcommand("remake", "Run the full remake pipeline");
    std::string m_screenplay, m_source, m_mapping, m_style, m_out, m_stop;
    bool m_copy = false, m_strict = false, m_resume = false, m_no_verify = false,
         m_global_ctx = false;
    int m_max_retries = -1;
    remake->add_option("--screenplay", m_screenplay, "Precomputed screenplay JSON");
    remake->add_option("--source", m_source, "Raw source for the understanding backend");
    remake->add_option("--mapping", m_mapping);
    remake->add_option("--style", m_style);
    remake->add_flag("--copy-mode", m_copy);
    remake->add_flag("--strict", m_strict, "Exit 4 unless every shot verifies");
    remake->add_flag("--resume", m_resume, "Continue an interrupted run in --out");
    remake->add_flag("--no-verify", m_no_verify, "Disable retries (max_retries = 0)");
    remake->add_flag("--global-context", m_global_ctx,
                     "Ablation: condition on the whole roster instead of per-shot allocation");
    remake->add_option("--max-retries", m_max_retries);
    remake->add_option("--stop-after", m_stop,
                       "Stop after a stage: understand|refs|plan|keyframes|verify|clips");
    remake->add_option("--out", m_out, "Run directory")->required();

    // resume
    auto* resume = app.add_subcommand("resume", "Resume an interrupted run");
    std::string s_run;
    resume->add_option("--run", s_run, "Run directory")->required();

    // eval
    auto* eval = app.add_subcommand("eval", "Evaluate understanding or remaking outputs");
    std::string e_mode, e_pred, e_gt, e_regions, e_run, e_out;
    eval->add_option("--mode", e_mode, "understanding|remaking")->required();
    eval->add_option("--pred", e_pred, "Prediction shots JSON (understanding mode)");
    eval->add_option("--gt", e_gt, "Ground-truth shots JSON")->required();
    eval->add_option("--regions", e_regions, "Region annotations JSON (remaking mode)");
    eval->add_option("--run", e_run, "Run directory (remaking mode)");
    eval->add_option("--out", e_out, "Report output directory")->required();

    // mock-demo
    auto* demo = app.add_subcommand("mock-demo",
                                    "Synthesize a fixture and run the full pipeline on mocks");
    int d_shots = 20, d_scenes = 2, d_characters = 3, d_max_retries = 3;
    double d_fault = 0.15;
    std::uint64_t d_seed = 7;
    std::string d_out, d_stop;
    bool d_no_verify = false, d_global_ctx = false;
    demo->add_option("--shots", d_shots)->check(CLI::PositiveNumber);
    demo->add_option("--scenes", d_scenes)->check(CLI::PositiveNumber);
    demo->add_option("--characters", d_characters)->check(CLI::PositiveNumber);
    demo->add_option("--fault-rate", d_fault)->check(CLI::Range(0.0, 1.0));
    demo->add_option("--seed", d_seed);
    demo->add_option("--max-retries", d_max_retries);
    demo->add_flag("--no-verify", d_no_verify);
    demo->add_flag("--global-context", d_global_ctx);
    demo->add_option("--stop-after", d_stop);
    demo->add_option("--out", d_out, "Demo output directory")->required();

    CLI11_PARSE(app, argc, argv);
    if (seed_opt->count()) global.seed = seed_flag;

    try {
        if (*understand) {
            RunConfig config = load_config(global);
            BackendSet backends = make_backends(config);
            try {
                Screenplay sp = understand_validated(*backends.understanding, u_source,
                                                     "Produce the shot-level screenplay JSON.");
                write_file(u_out, serialize_screenplay(sp));
                std::cout << "wrote " << u_out << " (" << sp.shots.size() << " shots, "
                          << sp.major_scenes.size() << " scenes)\n";
            } catch (const NonconformingOutput& e) {
                report_error(global, e);
                return kExitSchema;
            }
            return kExitOk;
        }

        if (*validate) {
            Screenplay sp = parse_screenplay(read_file(v_screenplay));
            ValidationReport report = validate_screenplay(sp);
            std::cout << (report.empty() ? "no findings\n" : report.to_string());
            return report.has_errors() ? kExitSchema : kExitOk;
        }

        if (*refs) {
            RunConfig config = load_config(global);
            BackendSet backends = make_backends(config);
            Screenplay sp = parse_screenplay(read_file(r_screenplay));
            ValidationReport sp_report = validate_screenplay(sp);
            if (sp_report.has_errors()) {
                std::cerr << sp_report.to_string();
                return kExitSchema;
            }
            SourceSpec source = load_mapping(r_mapping);
            source.style = r_style;
            source.copy_mode = r_copy;
            ValidationReport findings;
            std::string out_dir = fs::absolute(r_out).lexically_normal().string();
            ReferenceRegistry registry =
                generate_references(sp, source, *backends.image_gen, config, out_dir, &findings);
            registry.save(out_dir + "/" + std::string(kRegistryDir));
            std::cout << "registered " << registry.environments().size() << " environments, "
                      << registry.portraits().size() << " portraits, "
                      << registry.clothing().size() << " clothing refs\n";
            if (!findings.empty()) std::cout << findings.to_string();
            return kExitOk;
        }

        if (*remake) {
            RunConfig config = load_config(global);
            if (m_max_retries >= 0) config.thresholds.max_retries = m_max_retries;
            if (m_no_verify) config.thresholds.max_retries = 0;
            config.strict_stitch = m_strict || config.strict_stitch;
            config.global_context = m_global_ctx || config.global_context;
            if (!m_stop.empty()) config.stop_after = m_stop;
            BackendSet backends = make_backends(config);

            RunManifest manifest;
            if (m_resume) {
                manifest = resume_run(m_out, backends);
            } else {
                SourceSpec source = load_mapping(m_mapping);
                source.screenplay_path = m_screenplay;
                source.video_path = m_source;
                source.style = m_style;
                source.copy_mode = m_copy;
                if (m_screenplay.empty() && m_source.empty())
                    throw ConfigError("one of --screenplay or --source is required");
                manifest = run_remake(source, backends, config, m_out);
            }

            for (const auto& id : manifest.shot_order)
                std::cout << "shot " << id << ": " << to_string(manifest.jobs.at(id).state)
                          << " (attempt " << manifest.jobs.at(id).attempt << ")\n";
            int verified = manifest.count_in_state(JobState::Verified);
            std::cout << verified << "/" << manifest.shot_order.size() << " shots verified\n";
            if (config.strict_stitch && verified != int(manifest.shot_order.size()))
                return kExitIncomplete;
            return kExitOk;
        }

        if (*resume) {
            std::ifstream run_file(s_run + "/" + std::string(kRunFile));
            if (!run_file) throw CorruptManifest("missing run.json in " + s_run);
            json run_json = json::parse(run_file);
            RunConfig config = RunConfig::from_json(run_json.at("config"));
            BackendSet backends = make_backends(config);
            RunManifest manifest = resume_run(s_run, backends);
            std::cout << manifest.count_in_state(JobState::Verified) << "/"
                      << manifest.shot_order.size() << " shots verified\n";
            return kExitOk;
        }

        if (*eval) {
            RunConfig config = load_config(global);
            BackendSet backends = make_backends(config);
            if (e_mode == "understanding") {
                if (e_pred.empty()) throw ConfigError("--pred is required in understanding mode");
                BenchDocument pred = load_bench_document(e_pred);
                BenchDocument gt = load_bench_document(e_gt);
                EvalReport report;
                report.provenance = {{"mode", "understanding"},
                                     {"pred", fs::path(e_pred).filename().string()},
                                     {"gt", fs::path(e_gt).filename().string()},
                                     {"judge", config.backends.at(BackendKind::Judge).model_name}};
                report.understanding = eval_understanding(pred, gt, *backends.judge);
                emit_report(report, e_out);
                std::cout << "macro F1 " << report.understanding->macro.f1 << ", IoU "
                          << report.understanding->macro.iou << "\n";
            } else if (e_mode == "remaking") {
                if (e_run.empty() || e_regions.empty())
                    throw ConfigError("--run and --regions are required in remaking mode");
                RunEvalInputs inputs;
                inputs.run_dir = fs::absolute(e_run).lexically_normal().string();
                inputs.gt = load_bench_document(e_gt);
                inputs.regions = load_regions_document(e_regions);
                EvalReport report = evaluate_run(inputs, backends);
                emit_report(report, e_out);
                std::cout << "CLIP-I (ID) " << report.id_similarity->overall
                          << ", CLIP-I (Scene) " << report.scene_similarity->overall << "\n";
            } else {
                throw ConfigError("--mode must be understanding or remaking");
            }
            std::cout << "wrote " << e_out << "/report.json and report.md\n";
            return kExitOk;
        }

        if (*demo) {
            fs::create_directories(d_out);
            FixtureParams params;
            params.shots = d_shots;
            params.scenes = std::max(1, std::min(d_scenes, d_shots));
            params.characters = d_characters;
            params.mains = std::min(2, d_characters);
            params.seed = global.seed.value_or(d_seed);
            Screenplay sp = synth_screenplay(params);
            write_file(d_out + "/screenplay.json", serialize_screenplay(sp));

            SourceSpec source;
            source.screenplay_path = d_out + "/screenplay.json";
            for (const auto& c : sp.characters)
                source.character_mapping[c.character_id] = {"Recast " + c.primary_name, {}};
            source.style = "mock demo";

            RunConfig config = RunConfig::offline_defaults();
            config.seed = params.seed;
            config.thresholds.max_retries = d_no_verify ? 0 : d_max_retries;
            config.global_context = d_global_ctx;
            config.stop_after = d_stop;
            config.backends[BackendKind::ImageGen].mock->fault_rate = d_fault;
            config.backends[BackendKind::VideoGen].mock->fault_rate = d_fault;

            run_remake(source, make_backends(config), config, d_out + "/run");
            if (!d_stop.empty()) {
                std::cout << "stopped after stage \"" << d_stop << "\"; resume with:\n  "
                          << "cineremake resume --run " << d_out << "/run\n";
                return kExitOk;
            }

            // Paired baseline: identical world, retries disabled.
            RunConfig baseline_config = config;
            baseline_config.thresholds.max_retries = 0;
            baseline_config.global_context = false;
            run_remake(source, make_backends(baseline_config), baseline_config,
                       d_out + "/baseline");

            BenchDocument gt;
            RegionsDocument primary_regions, baseline_regions;
            const std::string run_dir = fs::absolute(d_out + "/run").lexically_normal().string();
            const std::string base_dir =
                fs::absolute(d_out + "/baseline").lexically_normal().string();
            demo_eval_inputs(sp, run_dir, &gt, &primary_regions);
            BenchDocument gt2 = gt;
            demo_eval_inputs(sp, base_dir, &gt2, &baseline_regions);
            write_file(d_out + "/gt.json", gt_to_json(gt).dump(2) + "\n");
            write_file(d_out + "/regions.json", regions_to_json(primary_regions).dump(2) + "\n");

            BackendSet scorers = make_backends(RunConfig::offline_defaults());
            json with_verify = run_scores(run_dir, sp, gt, primary_regions, scorers);
            json without_verify = run_scores(base_dir, sp, gt2, baseline_regions, scorers);

            json comparison = {{"seed", params.seed},
                               {"shots", d_shots},
                               {"fault_rate", d_fault},
                               {"max_retries", config.thresholds.max_retries},
                               {"global_context", d_global_ctx},
                               {"with_verification", with_verify},
                               {"without_verification", without_verify}};
            write_file(d_out + "/comparison.json", comparison.dump(2) + "\n");

            auto line = [](const char* name, const json& s) {
                std::printf("%-17s verified %2d/%2d (%5.1f%%)  id %.3f  scene %.3f  consistency "
                            "%.3f\n",
                            name, s.value("verified", 0), s.value("total", 0),
                            100.0 * s.value("verified_fraction", 0.0), s.value("id_score", 0.0),
                            s.value("scene_score", 0.0), s.value("consistency", 0.0));
            };
            line("verification ON:", with_verify);
            line("verification OFF:", without_verify);
            double delta =
                with_verify.value("id_score", 0.0) - without_verify.value("id_score", 0.0);
            std::printf("id score delta: %+.3f\n", delta);
            std::cout << "wrote " << d_out << "/comparison.json\n";
            return kExitOk;
        }
    } catch (const CineError& e) {
        report_error(global, e);
        return classify_error(e);
    } catch (const json::exception& e) {
        report_error(global, e);
        return kExitSchema;
    } catch (const std::exception& e) {
        report_error(global, e);
        return kExitSchema;
    }

    return kExitOk;
}
