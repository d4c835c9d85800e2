#include "cine/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <thread>

#include "cine/errors.hpp"
#include "cine/fixtures.hpp"
#include "cine/hashing.hpp"
#include "cine/image.hpp"
#include "cine/mock_backends.hpp"

namespace fs = std::filesystem;

namespace cine {

namespace {

std::string now_iso() {
    using namespace std::chrono;
    auto now = system_clock::now();
    auto ms = duration_cast<milliseconds>(now.time_since_epoch()) % 1000;
    std::time_t t = system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900,
                  tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, int(ms.count()));
    return buf;
}

std::string resolve(const std::string& run_dir, const std::string& rel) {
    if (rel.empty() || rel.front() == '/') return rel;
    return run_dir + "/" + rel;
}

std::vector<std::string> resolve_all(const std::string& run_dir,
                                     const std::vector<std::string>& rels) {
    std::vector<std::string> out;
    out.reserve(rels.size());
    for (const auto& r : rels) out.push_back(resolve(run_dir, r));
    return out;
}

void write_text_file(const std::string& path, const std::string& text) {
    fs::create_directories(fs::path(path).parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoFailure("cannot write " + path);
    out << text;
}

void write_bytes_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    fs::create_directories(fs::path(path).parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoFailure("cannot write " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
}

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoFailure("cannot read " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw CorruptManifest(path + ": " + e.what());
    }
}

json findings_json(const ValidationReport& report) {
    json arr = json::array();
    for (const auto& f : report.findings())
        arr.push_back({{"path", f.path},
                       {"severity", f.severity == Severity::Error ? "error" : "warning"},
                       {"rule", f.rule},
                       {"message", f.message}});
    return arr;
}

Feedback feedback_from_event(const json& e) {
    Feedback f;
    f.dimension = dimension_from_string(e.at("dimension"));
    f.severity = e.value("severity", "minor") == "major" ? FeedbackSeverity::Major
                                                         : FeedbackSeverity::Minor;
    f.description = e.value("description", "");
    f.route = e.value("route", "generation") == "understanding" ? FeedbackRoute::Understanding
                                                                : FeedbackRoute::Generation;
    f.corrective_hints = e.value("corrective_hints", std::vector<std::string>{});
    f.shot_id = e.value("shot_id", "");
    f.attempt = e.value("attempt", 1);
    return f;
}

// Bounded-parallel map that surfaces results in input order; exceptions are
// re-thrown at commit time, also in input order.
template <typename Item, typename Fn>
auto ordered_parallel(const std::vector<Item>& items, int workers, Fn fn)
    -> std::vector<decltype(fn(items[0]))> {
    using R = decltype(fn(items[0]));
    std::vector<std::optional<R>> slots(items.size());
    std::vector<std::exception_ptr> errors(items.size());

    if (workers <= 1 || items.size() <= 1) {
        for (std::size_t i = 0; i < items.size(); ++i) slots[i] = fn(items[i]);
    } else {
        std::atomic<std::size_t> next{0};
        auto work = [&] {
            for (;;) {
                std::size_t i = next.fetch_add(1);
                if (i >= items.size()) return;
                try {
                    slots[i] = fn(items[i]);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        };
        std::vector<std::thread> pool;
        std::size_t n = std::min<std::size_t>(std::size_t(workers), items.size());
        for (std::size_t i = 0; i < n; ++i) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }

    std::vector<R> out;
    out.reserve(items.size());
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (errors[i]) std::rethrow_exception(errors[i]);
        out.push_back(std::move(*slots[i]));
    }
    return out;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t run_seed, const std::string& scope,
                          const std::string& key, int attempt) {
    std::uint64_t h = hash_combine(run_seed, scope);
    h = hash_combine(h, key);
    h = hash_combine(h, std::to_string(attempt));
    return h;
}

json SourceSpec::to_json() const {
    json mapping = json::object();
    for (const auto& [cid, target] : character_mapping)
        mapping[cid] = {{"target_name", target.target_name}, {"portraits", target.portraits}};
    return {{"screenplay_path", screenplay_path},
            {"video_path", video_path},
            {"character_mapping", std::move(mapping)},
            {"style", style},
            {"copy_mode", copy_mode}};
}

SourceSpec SourceSpec::from_json(const json& j) {
    SourceSpec s;
    s.screenplay_path = j.value("screenplay_path", "");
    s.video_path = j.value("video_path", "");
    if (j.contains("character_mapping")) {
        for (auto it = j["character_mapping"].begin(); it != j["character_mapping"].end(); ++it) {
            CharacterTarget t;
            t.target_name = it.value().value("target_name", "");
            t.portraits = it.value().value("portraits", std::vector<std::string>{});
            s.character_mapping[it.key()] = std::move(t);
        }
    }
    s.style = j.value("style", "");
    s.copy_mode = j.value("copy_mode", false);
    return s;
}

json EditDecisionList::to_json() const {
    json arr = json::array();
    for (const auto& e : entries)
        arr.push_back({{"shot_id", e.shot_id},
                       {"clip", e.clip},
                       {"in", e.in_point},
                       {"duration", e.duration}});
    return {{"entries", std::move(arr)}};
}

EditDecisionList EditDecisionList::from_json(const json& j) {
    EditDecisionList edl;
    for (const auto& e : j.value("entries", json::array()))
        edl.entries.push_back({e.at("shot_id"), e.at("clip"), e.value("in", 0.0),
                               e.value("duration", 0.0)});
    return edl;
}

EventLog::EventLog(const std::string& path, int start_seq) : path_(path), seq_(start_seq) {
    fs::create_directories(fs::path(path).parent_path());
}

void EventLog::append(json event) {
    std::lock_guard<std::mutex> lock(mutex_);
    event["v"] = 1;
    event["seq"] = ++seq_;
    event["ts"] = now_iso();
    std::ofstream out(path_, std::ios::app);
    if (!out) throw IoFailure("cannot append to " + path_);
    out << event.dump() << "\n";
    out.flush();
}

std::vector<json> EventLog::read(const std::string& path) {
    std::ifstream in(path);
    if (!in) return {};
    std::vector<json> events;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            events.push_back(json::parse(line));
        } catch (const json::parse_error& e) {
            throw CorruptManifest("line " + std::to_string(lineno) + " of " + path + ": " +
                                  e.what());
        }
    }
    return events;
}

std::vector<json> normalized_events(const std::vector<json>& events) {
    std::vector<json> out = events;
    for (auto& e : out) e.erase("ts");
    return out;
}

std::vector<json> normalized_events_from_file(const std::string& path) {
    return normalized_events(EventLog::read(path));
}

int RunManifest::count_in_state(JobState s) const {
    int n = 0;
    for (const auto& [id, job] : jobs)
        if (job.state == s) ++n;
    return n;
}

EditDecisionList stitch(const std::map<std::string, ShotJob>& jobs,
                        const std::vector<std::string>& shot_order, bool strict) {
    if (strict) {
        for (const auto& id : shot_order) {
            auto it = jobs.find(id);
            if (it == jobs.end() || it->second.state != JobState::Verified)
                throw IncompleteRun("shot " + id + " is not Verified");
        }
    }
    EditDecisionList edl;
    for (const auto& id : shot_order) {
        auto it = jobs.find(id);
        if (it == jobs.end()) continue;
        const ShotJob& job = it->second;
        const ClipHandle* clip = nullptr;
        if (job.state == JobState::Verified && job.clip)
            clip = &*job.clip;
        else if (job.best_clip)
            clip = &*job.best_clip;  // exhausted shots ride their best attempt
        else if (job.clip)
            clip = &*job.clip;
        if (!clip) continue;  // never generated; lenient runs skip it
        edl.entries.push_back({id, clip->path, 0.0, clip->duration});
    }
    return edl;
}

ReferenceRegistry generate_references(const Screenplay& sp, const SourceSpec& source,
                                      ImageGenBackend& image_gen, const RunConfig& config,
                                      const std::string& run_dir, ValidationReport* findings) {
    ReferenceRegistry registry(sp, source.copy_mode);
    fs::create_directories(resolve(run_dir, kRegistryDir));
    const std::string style_prompt = config.style_prompt +
                                     (source.style.empty() ? "" : " TARGET STYLE: " + source.style);

    // Scene anchors: environment-only prompts, screenplay aspect ratio.
    for (const auto& scene : sp.major_scenes) {
        try {
            ImageGenRequest req;
            req.prompt = environment_ref_prompt(scene.scene_id, scene.environment_description,
                                                style_prompt);
            req.width = sp.metadata.width;
            req.height = sp.metadata.height;
            req.seed = derive_seed(config.seed, "env", scene.scene_id, 1);
            GeneratedImage img = with_transport_retries(
                config.backends.at(BackendKind::ImageGen).retry_on_transport_error,
                [&] { return image_gen.generate_image(req); });
            const std::string rel = environment_image_path(scene.scene_id);
            write_bytes_file(resolve(run_dir, rel), img.png);
            if (!img.tags.is_null()) write_sidecar(resolve(run_dir, rel), img.tags);
            registry.register_environment(scene.scene_id, {rel, req.width, req.height}, "default");
        } catch (const CineError& e) {
            if (findings)
                findings->add_warning("/major_scenes", "environment generation failed",
                                      scene.scene_id + ": " + e.what());
        }
    }

    // Portraits: copy what the mapping provides, synthesize otherwise.
    for (const auto& character : sp.characters) {
        auto it = source.character_mapping.find(character.character_id);
        if (it == source.character_mapping.end()) continue;
        const CharacterTarget& target = it->second;
        int n = 1;
        if (!target.portraits.empty()) {
            for (const auto& src_path : target.portraits) {
                try {
                    ImageHandle src = ImageHandle::from_file(src_path);
                    const std::string rel = portrait_image_path(character.character_id, n);
                    fs::copy_file(src_path, resolve(run_dir, rel),
                                  fs::copy_options::overwrite_existing);
                    if (fs::exists(sidecar_path(src_path)))
                        fs::copy_file(sidecar_path(src_path), sidecar_path(resolve(run_dir, rel)),
                                      fs::copy_options::overwrite_existing);
                    registry.register_portrait(character.character_id,
                                               {rel, src.width, src.height}, target.target_name);
                    ++n;
                } catch (const CineError& e) {
                    if (findings)
                        findings->add_warning("/characters", "portrait import failed",
                                              character.character_id + ": " + e.what());
                }
            }
        } else {
            try {
                ImageGenRequest req;
                req.prompt = portrait_ref_prompt(character.character_id, target.target_name);
                req.width = 512;
                req.height = 512;
                req.seed = derive_seed(config.seed, "por", character.character_id, 1);
                GeneratedImage img = with_transport_retries(
                    config.backends.at(BackendKind::ImageGen).retry_on_transport_error,
                    [&] { return image_gen.generate_image(req); });
                const std::string rel = portrait_image_path(character.character_id, 1);
                write_bytes_file(resolve(run_dir, rel), img.png);
                if (!img.tags.is_null()) write_sidecar(resolve(run_dir, rel), img.tags);
                registry.register_portrait(character.character_id, {rel, req.width, req.height},
                                           target.target_name);
            } catch (const CineError& e) {
                if (findings)
                    findings->add_warning("/characters", "portrait synthesis failed",
                                          character.character_id + ": " + e.what());
            }
        }
    }

    // Clothing anchors per (main character, scene) pair, skipped in copy mode
    // where the portraits already carry the designs.
    if (!source.copy_mode) {
        for (const auto& character : sp.characters) {
            if (character.role_classification != "main") continue;
            std::string description = character.clothing_variations.empty()
                                          ? character.physical_attributes
                                          : character.clothing_variations.front().description;
            WardrobeDNA dna = derive_wardrobe_dna(description);
            for (const auto& scene : sp.major_scenes) {
                bool appears = false;
                for (const auto& shot : sp.shots)
                    if (shot.scene_id == scene.scene_id &&
                        shot.character_set().count(character.character_id)) {
                        appears = true;
                        break;
                    }
                if (!appears) continue;
                try {
                    std::string target_name;
                    auto it = source.character_mapping.find(character.character_id);
                    if (it != source.character_mapping.end()) target_name = it->second.target_name;
                    ImageGenRequest req;
                    req.prompt = clothing_ref_prompt(scene.scene_id, character.character_id,
                                                     wardrobe_to_prompt(dna), target_name,
                                                     style_prompt);
                    req.width = 768;
                    req.height = 1024;
                    req.seed = derive_seed(config.seed, "clo",
                                           character.character_id + ":" + scene.scene_id, 1);
                    GeneratedImage img = with_transport_retries(
                        config.backends.at(BackendKind::ImageGen).retry_on_transport_error,
                        [&] { return image_gen.generate_image(req); });
                    const std::string rel =
                        clothing_image_path(scene.scene_id, character.character_id);
                    write_bytes_file(resolve(run_dir, rel), img.png);
                    if (!img.tags.is_null()) write_sidecar(resolve(run_dir, rel), img.tags);
                    registry.register_clothing(character.character_id, scene.scene_id, dna,
                                               {rel, req.width, req.height});
                } catch (const CineError& e) {
                    if (findings)
                        findings->add_warning("/characters", "clothing generation failed",
                                              character.character_id + " in " + scene.scene_id +
                                                  ": " + e.what());
                }
            }
        }
    }

    return registry;
}

namespace {

// Replayed view of one shot's history, folded from the event log.
struct ShotReplay {
    std::map<int, std::string> kf_path_by_attempt;
    std::map<int, KeyframeProvenance> kf_prov_by_attempt;
    std::optional<std::string> kf_final_state;
    std::vector<json> kf_feedback;
    std::map<int, double> kf_score_by_attempt;
    int kf_max_attempt = 0;

    std::map<int, std::pair<std::string, double>> clip_by_attempt;  // path, duration
    std::optional<std::string> clip_final_state;
    std::vector<json> clip_feedback;
    std::map<int, double> clip_score_by_attempt;
    int clip_max_attempt = 0;
};

struct ReplayState {
    json run_started;
    std::set<std::string> stages_done;
    std::vector<GridBatch> batches;
    std::set<std::string> batches_ready;
    std::map<std::string, ShotReplay> shots;
    bool completed = false;
    int event_count = 0;

    bool stage_done(const std::string& s) const { return stages_done.count(s) > 0; }
};

ReplayState fold_events(const std::vector<json>& events) {
    ReplayState st;
    st.event_count = int(events.size());
    for (const auto& e : events) {
        const std::string type = e.value("type", "");
        if (type == "run_started") {
            st.run_started = e;
        } else if (type == "stage_done") {
            st.stages_done.insert(e.value("stage", ""));
        } else if (type == "batches_planned") {
            for (const auto& b : e.value("batches", json::array())) {
                GridBatch batch;
                batch.batch_id = b.at("batch_id");
                batch.order = b.at("order");
                batch.shot_ids = b.at("shot_ids").get<std::vector<std::string>>();
                batch.scene_id = b.value("scene_id", "");
                for (const auto& c : b.value("character_set", std::vector<std::string>{}))
                    batch.character_set.insert(c);
                st.batches.push_back(std::move(batch));
            }
        } else if (type == "keyframes_ready") {
            st.batches_ready.insert(e.value("batch_id", ""));
            for (const auto& kf : e.value("keyframes", json::array())) {
                auto& shot = st.shots[kf.at("shot_id").get<std::string>()];
                int attempt = e.value("attempt", 1);
                shot.kf_path_by_attempt[attempt] = kf.at("path");
                shot.kf_prov_by_attempt[attempt] = {e.value("batch_id", ""), kf.value("row", 0),
                                                    kf.value("col", 0), attempt};
                shot.kf_max_attempt = std::max(shot.kf_max_attempt, attempt);
            }
        } else if (type == "keyframe_ready") {
            auto& shot = st.shots[e.at("shot_id").get<std::string>()];
            int attempt = e.value("attempt", 1);
            if (e.value("stage", "keyframe") == "keyframe") {
                shot.kf_path_by_attempt[attempt] = e.at("path");
                shot.kf_prov_by_attempt[attempt] = {"", 0, 0, attempt};
                shot.kf_max_attempt = std::max(shot.kf_max_attempt, attempt);
            } else {
                shot.kf_path_by_attempt[shot.kf_max_attempt] = e.at("path");
            }
        } else if (type == "audit") {
            auto& shot = st.shots[e.at("shot_id").get<std::string>()];
            double total = 0;
            for (const auto& v : e.value("verdicts", json::array()))
                total += v.value("score", 0.0);
            int attempt = e.value("attempt", 1);
            if (e.value("stage", "keyframe") == "keyframe")
                shot.kf_score_by_attempt[attempt] = total;
            else
                shot.clip_score_by_attempt[attempt] = total;
        } else if (type == "feedback") {
            auto& shot = st.shots[e.at("shot_id").get<std::string>()];
            if (e.value("stage", "keyframe") == "keyframe")
                shot.kf_feedback.push_back(e);
            else
                shot.clip_feedback.push_back(e);
        } else if (type == "state") {
            auto& shot = st.shots[e.at("shot_id").get<std::string>()];
            const std::string to = e.value("to", "");
            if (e.value("stage", "") == "keyframe")
                shot.kf_final_state = to;
            else if (e.value("stage", "") == "clip" && (to == "Verified" || to == "Exhausted"))
                shot.clip_final_state = to;
        } else if (type == "clip_ready") {
            auto& shot = st.shots[e.at("shot_id").get<std::string>()];
            int attempt = e.value("attempt", 1);
            shot.clip_by_attempt[attempt] = {e.at("path"), e.value("duration", 0.0)};
            shot.clip_max_attempt = std::max(shot.clip_max_attempt, attempt);
        } else if (type == "run_completed") {
            st.completed = true;
        }
    }
    return st;
}

// Calls refine once per (attempt) group of replayed feedback events,
// mirroring exactly what the live loop did.
MemoryPackage replay_feedback(MemoryPackage pkg, const Screenplay& sp,
                              const std::vector<json>& feedback_events) {
    std::size_t i = 0;
    while (i < feedback_events.size()) {
        int attempt = feedback_events[i].value("attempt", 1);
        std::vector<Feedback> group;
        while (i < feedback_events.size() && feedback_events[i].value("attempt", 1) == attempt) {
            group.push_back(feedback_from_event(feedback_events[i]));
            ++i;
        }
        pkg = refine(pkg, sp, group).package;
    }
    return pkg;
}

struct Engine {
    std::string run_dir;
    RunConfig config;
    SourceSpec source;
    BackendSet backends;
    std::unique_ptr<EventLog> log;
    ReplayState replay;

    std::string run_id;
    Screenplay sp;
    std::unique_ptr<ReferenceRegistry> registry;
    std::vector<GridBatch> batches;
    std::vector<std::string> shot_order;
    std::map<std::string, ShotJob> jobs;
    EditDecisionList edl;
    bool completed = false;
    std::string style_prompt;

    AdmissionGate image_gate{1};
    AdmissionGate video_gate{1};

    Engine(std::string dir, RunConfig cfg, SourceSpec src, BackendSet bs, ReplayState rp)
        : run_dir(std::move(dir)),
          config(std::move(cfg)),
          source(std::move(src)),
          backends(std::move(bs)),
          replay(std::move(rp)),
          image_gate(config.backends.at(BackendKind::ImageGen).max_concurrent),
          video_gate(config.backends.at(BackendKind::VideoGen).max_concurrent) {
        log = std::make_unique<EventLog>(run_dir + "/" + kEventsFile, replay.event_count);
        run_id = make_run_id(config);
        style_prompt = config.style_prompt +
                       (source.style.empty() ? "" : " TARGET STYLE: " + source.style);
        for (const char* sub : {kRegistryDir, kKeyframesDir, kClipsDir})
            fs::create_directories(run_dir + "/" + sub);
    }

    static std::string make_run_id(const RunConfig& cfg) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "run-%016llx",
                      (unsigned long long)hash_combine(cfg.seed, "run"));
        return buf;
    }

    GeneratedImage call_image(const ImageGenRequest& req) {
        AdmissionGate::Ticket ticket(image_gate);
        return with_transport_retries(
            config.backends.at(BackendKind::ImageGen).retry_on_transport_error,
            [&] { return backends.image_gen->generate_image(req); });
    }

    GeneratedClip call_video(const VideoGenRequest& req) {
        AdmissionGate::Ticket ticket(video_gate);
        return with_transport_retries(
            config.backends.at(BackendKind::VideoGen).retry_on_transport_error,
            [&] { return backends.video_gen->generate_video(req); });
    }

    // The conditioning invariant: no generation request leaves without the
    // semantic prompt and a non-empty ordered reference list.
    void enforce_conditioning(const std::string& prompt, const std::vector<std::string>& refs,
                              const std::string& shot_context) {
        if (prompt.empty() || refs.empty())
            throw MissingAnchor("conditioning", shot_context);
    }

    const Shot& shot_of(const std::string& shot_id) const {
        const Shot* s = sp.find_shot(shot_id);
        if (!s) throw UnknownShot(shot_id);
        return *s;
    }

    MemoryPackage allocate_package(const std::string& shot_id, ValidationReport* findings) {
        if (!config.global_context) return allocate(sp, shot_id, *registry, style_prompt, findings);
        // Ablation mode: the whole roster rides along with every shot instead
        // of the shot-scoped allocation.
        Screenplay global = sp;
        std::vector<std::string> all_ids;
        for (const auto& c : global.characters) all_ids.push_back(c.character_id);
        std::sort(all_ids.begin(), all_ids.end());
        for (auto& shot : global.shots) shot.characters = all_ids;
        return allocate(global, shot_id, *registry, style_prompt, findings);
    }

    bool stop_requested_after(const std::string& stage) const {
        return config.stop_after == stage;
    }

    // ---- stages ----

    void stage_understand() {
        if (replay.stage_done("understand")) {
            sp = parse_screenplay(read_json_file(resolve(run_dir, kScreenplayFile)));
            return;
        }
        if (!source.screenplay_path.empty()) {
            std::ifstream in(source.screenplay_path);
            if (!in) throw UnderstandingFailed("cannot read " + source.screenplay_path);
            std::string text((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
            try {
                sp = parse_screenplay(text);
            } catch (const CineError& e) {
                throw UnderstandingFailed(e.what());
            }
            ValidationReport report = validate_screenplay(sp);
            if (report.has_errors()) throw UnderstandingFailed(report.to_string());
        } else {
            const auto& bc = config.backends.at(BackendKind::Understanding);
            int attempts = bc.retry_on_transport_error + 1;
            std::string last_error;
            bool done = false;
            for (int i = 0; i < attempts && !done; ++i) {
                try {
                    sp = understand_validated(*backends.understanding, source.video_path,
                                              "Produce the shot-level screenplay JSON.");
                    done = true;
                } catch (const CineError& e) {
                    last_error = e.what();
                }
            }
            if (!done) throw UnderstandingFailed(last_error);
        }

        for (const auto& [cid, target] : source.character_mapping)
            if (!sp.find_character(cid)) throw UnknownCharacter(cid);

        write_text_file(resolve(run_dir, kScreenplayFile), serialize_screenplay(sp));
        ValidationReport report = validate_screenplay(sp);
        log->append({{"type", "screenplay_ready"},
                     {"path", kScreenplayFile},
                     {"shots", sp.shots.size()},
                     {"scenes", sp.major_scenes.size()},
                     {"characters", sp.characters.size()},
                     {"findings", findings_json(report)}});
        log->append({{"type", "stage_done"}, {"stage", "understand"}});
    }

    void stage_refs() {
        if (replay.stage_done("refs")) {
            registry = std::make_unique<ReferenceRegistry>(
                ReferenceRegistry::load(sp, resolve(run_dir, kRegistryDir)));
            return;
        }
        ValidationReport findings;
        registry = std::make_unique<ReferenceRegistry>(
            generate_references(sp, source, *backends.image_gen, config, run_dir, &findings));
        registry->save(resolve(run_dir, kRegistryDir));
        log->append({{"type", "references_ready"},
                     {"index", std::string(kRegistryDir) + "/index.json"},
                     {"environments", registry->environments().size()},
                     {"portraits", registry->portraits().size()},
                     {"clothing", registry->clothing().size()},
                     {"findings", findings_json(findings)}});
        log->append({{"type", "stage_done"}, {"stage", "refs"}});
    }

    void stage_plan() {
        for (const auto& shot : sp.shots) shot_order.push_back(shot.shot_id);

        ValidationReport findings;
        for (const auto& id : shot_order) {
            ShotJob job;
            job.shot_id = id;
            try {
                job.package = allocate_package(id, &findings);
            } catch (const CineError& e) {
                // The shot stays Pending with no package; it is excluded from
                // batching and generation.
                findings.add_error("/shots/" + id, "allocation failed", e.what());
            }
            jobs[id] = std::move(job);
        }

        // Only shots with a complete conditioning package enter batches.
        std::vector<const Shot*> shot_ptrs;
        for (const auto& shot : sp.shots)
            if (!jobs.at(shot.shot_id).package.shot_id.empty()) shot_ptrs.push_back(&shot);

        if (replay.stage_done("plan")) {
            batches = replay.batches;
            return;
        }
        batches = plan_batches(shot_ptrs);

        json batch_json = json::array();
        for (const auto& b : batches) {
            std::vector<std::string> chars(b.character_set.begin(), b.character_set.end());
            batch_json.push_back({{"batch_id", b.batch_id},
                                  {"order", b.order},
                                  {"shot_ids", b.shot_ids},
                                  {"scene_id", b.scene_id},
                                  {"character_set", chars}});
        }
        log->append({{"type", "batches_planned"}, {"batches", std::move(batch_json)}});
        if (!findings.empty())
            log->append({{"type", "allocation_findings"}, {"findings", findings_json(findings)}});
        log->append({{"type", "stage_done"}, {"stage", "plan"}});
    }

    std::string keyframe_rel_path(const std::string& shot_id, int attempt,
                                  bool clip_stage = false) {
        return std::string(kKeyframesDir) + "/shot_" + shot_id +
               (clip_stage ? "_clip_attempt" : "_attempt") + std::to_string(attempt) + ".png";
    }

    std::string clip_rel_path(const std::string& shot_id, int attempt, const std::string& ext) {
        return std::string(kClipsDir) + "/shot_" + shot_id + "_attempt" + std::to_string(attempt) +
               "." + ext;
    }

    // Renders one batch, splits it, persists tiles + sidecars. Returns the
    // buffered events plus the finished keyframes.
    struct BatchOutcome {
        std::vector<json> events;
        std::vector<Keyframe> keyframes;  // aligned with batch.shot_ids
    };

    BatchOutcome render_batch(const GridBatch& batch) {
        BatchOutcome out;
        std::vector<MemoryPackage> packages;
        for (const auto& id : batch.shot_ids) packages.push_back(jobs.at(id).package);
        const MajorScene* scene = sp.find_scene(batch.scene_id);
        GridPrompt gp = compose_grid_prompt(batch, packages,
                                            scene ? scene->environment_description : "", 1);
        enforce_conditioning(gp.prompt, gp.references, "batch " + batch.batch_id);

        ImageGenRequest req;
        req.prompt = gp.prompt;
        req.references = resolve_all(run_dir, gp.references);
        req.width = batch.order * sp.metadata.width;
        req.height = batch.order * sp.metadata.height;
        req.seed = derive_seed(config.seed, "grid", batch.batch_id, 1);

        out.events.push_back({{"type", "generation_request"},
                              {"kind", "image"},
                              {"stage", "keyframe"},
                              {"batch_id", batch.batch_id},
                              {"shot_ids", batch.shot_ids},
                              {"attempt", 1},
                              {"prompt", gp.prompt},
                              {"references", gp.references},
                              {"environment_ref",
                               packages.front().environment_ref
                                   ? json(*packages.front().environment_ref)
                                   : json(nullptr)},
                              {"width", req.width},
                              {"height", req.height},
                              {"seed", *req.seed}});

        Image canvas;
        json tags = nullptr;
        try {
            for (int round = 0;; ++round) {
                GeneratedImage generated = call_image(req);
                canvas = decode_png(generated.png);
                if (canvas.width == req.width && canvas.height == req.height) {
                    tags = generated.tags;
                    break;
                }
                DimensionMismatch err("backend returned " + std::to_string(canvas.width) + "x" +
                                      std::to_string(canvas.height) + " for batch " +
                                      batch.batch_id);
                if (round >= 1) throw err;  // whole batch retried once
            }
        } catch (const CineError& e) {
            // Affected shots stay Pending with a finding.
            out.events.push_back({{"type", "batch_failed"},
                                  {"batch_id", batch.batch_id},
                                  {"shot_ids", batch.shot_ids},
                                  {"error", e.what()}});
            return out;
        }
        auto cells = tags.is_null() ? std::vector<CellTags>{} : cells_from_sidecar(tags);

        json ready = json::array();
        if (batch.order == 1) {
            Keyframe kf;
            kf.shot_id = batch.shot_ids.front();
            kf.image = std::move(canvas);
            kf.path = keyframe_rel_path(kf.shot_id, 1);
            kf.provenance = {batch.batch_id, 0, 0, 1};
            write_png(resolve(run_dir, kf.path), kf.image);
            if (!cells.empty())
                write_sidecar(resolve(run_dir, kf.path), cells_to_sidecar({cells.front()}));
            ready.push_back({{"shot_id", kf.shot_id}, {"path", kf.path}, {"row", 0}, {"col", 0}});
            out.keyframes.push_back(std::move(kf));
        } else {
            GridSpec spec = GridSpec::for_tiles(batch.order, sp.metadata.width,
                                                sp.metadata.height);
            std::vector<Keyframe> tiles = split_grid(canvas, spec);
            for (std::size_t i = 0; i < batch.shot_ids.size(); ++i) {
                Keyframe& kf = tiles[i];
                kf.shot_id = batch.shot_ids[i];
                kf.path = keyframe_rel_path(kf.shot_id, 1);
                kf.provenance.batch_id = batch.batch_id;
                kf.provenance.attempt = 1;
                write_png(resolve(run_dir, kf.path), kf.image);
                for (const auto& cell : cells)
                    if (cell.row == kf.provenance.row && cell.col == kf.provenance.col)
                        write_sidecar(resolve(run_dir, kf.path), cells_to_sidecar({cell}));
                ready.push_back({{"shot_id", kf.shot_id},
                                 {"path", kf.path},
                                 {"row", kf.provenance.row},
                                 {"col", kf.provenance.col}});
                out.keyframes.push_back(std::move(kf));
            }
        }
        out.events.push_back({{"type", "keyframes_ready"},
                              {"batch_id", batch.batch_id},
                              {"attempt", 1},
                              {"keyframes", std::move(ready)}});
        return out;
    }

    void stage_keyframes() {
        const bool done = replay.stage_done("keyframes");
        std::vector<const GridBatch*> todo;
        for (const auto& batch : batches) {
            if (done || replay.batches_ready.count(batch.batch_id)) {
                // Restore from the replayed manifest; pixels stay on disk.
                for (const auto& id : batch.shot_ids) {
                    const auto it = replay.shots.find(id);
                    if (it == replay.shots.end()) continue;
                    auto pit = it->second.kf_path_by_attempt.find(1);
                    if (pit == it->second.kf_path_by_attempt.end()) continue;
                    Keyframe kf;
                    kf.shot_id = id;
                    kf.path = pit->second;
                    kf.provenance = it->second.kf_prov_by_attempt.count(1)
                                        ? it->second.kf_prov_by_attempt.at(1)
                                        : KeyframeProvenance{batch.batch_id, 0, 0, 1};
                    jobs.at(id).keyframe = std::move(kf);
                    jobs.at(id).attempt = 1;
                }
            } else {
                todo.push_back(&batch);
            }
        }

        if (!todo.empty()) {
            int workers = std::min(config.parallelism,
                                   config.backends.at(BackendKind::ImageGen).max_concurrent);
            auto outcomes = ordered_parallel(
                todo, workers, [&](const GridBatch* batch) { return render_batch(*batch); });
            for (auto& outcome : outcomes) {
                for (auto& e : outcome.events) log->append(std::move(e));
                for (auto& kf : outcome.keyframes) {
                    ShotJob& job = jobs.at(kf.shot_id);
                    job.keyframe = std::move(kf);
                    job.attempt = 1;
                }
            }
        }
        if (!done) log->append({{"type", "stage_done"}, {"stage", "keyframes"}});
    }

    // Singleton regeneration used by both verification stages.
    Keyframe regenerate_singleton(const MemoryPackage& pkg, int attempt, bool clip_stage,
                                  std::vector<json>* events) {
        GridBatch single;
        single.batch_id = "shot_" + pkg.shot_id + "_retry";
        single.order = 1;
        single.shot_ids = {pkg.shot_id};
        single.scene_id = pkg.major_scene;
        single.character_set = {pkg.characters.begin(), pkg.characters.end()};
        const MajorScene* scene = sp.find_scene(pkg.major_scene);
        GridPrompt gp = compose_grid_prompt(single, {pkg},
                                            scene ? scene->environment_description : "", attempt);
        enforce_conditioning(gp.prompt, gp.references, "shot " + pkg.shot_id);

        ImageGenRequest req;
        req.prompt = gp.prompt;
        req.references = resolve_all(run_dir, gp.references);
        req.width = sp.metadata.width;
        req.height = sp.metadata.height;
        req.seed = derive_seed(config.seed, clip_stage ? "kf-clipfix" : "kf", pkg.shot_id, attempt);

        events->push_back({{"type", "generation_request"},
                           {"kind", "image"},
                           {"stage", clip_stage ? "clip" : "keyframe"},
                           {"shot_ids", std::vector<std::string>{pkg.shot_id}},
                           {"attempt", attempt},
                           {"prompt", gp.prompt},
                           {"references", gp.references},
                           {"environment_ref", pkg.environment_ref ? json(*pkg.environment_ref)
                                                                   : json(nullptr)},
                           {"width", req.width},
                           {"height", req.height},
                           {"seed", *req.seed}});

        GeneratedImage generated = call_image(req);
        Keyframe kf;
        kf.shot_id = pkg.shot_id;
        kf.image = decode_png(generated.png);
        if (kf.image.width != req.width || kf.image.height != req.height)
            throw DimensionMismatch("backend returned wrong keyframe size for shot " + pkg.shot_id);
        kf.path = keyframe_rel_path(pkg.shot_id, attempt, clip_stage);
        kf.provenance = {single.batch_id, 0, 0, attempt};
        write_png(resolve(run_dir, kf.path), kf.image);
        if (!generated.tags.is_null()) {
            auto cells = cells_from_sidecar(generated.tags);
            if (!cells.empty())
                write_sidecar(resolve(run_dir, kf.path), cells_to_sidecar({cells.front()}));
        }
        events->push_back({{"type", "keyframe_ready"},
                           {"shot_id", pkg.shot_id},
                           {"attempt", attempt},
                           {"stage", clip_stage ? "clip" : "keyframe"},
                           {"path", kf.path}});
        return kf;
    }

    ClipHandle generate_clip_for(const MemoryPackage& pkg, const Keyframe& kf, int attempt,
                                 std::vector<json>* events) {
        double duration = std::clamp(config.clip_duration, 4.0, 8.0);
        VideoGenRequest req;
        req.keyframe = resolve(run_dir, kf.path);
        req.references = resolve_all(run_dir, order_references(pkg));
        req.i2v_prompt = pkg.narrative.i2v_prompt;
        req.duration = duration;
        req.seed = derive_seed(config.seed, "video", pkg.shot_id, attempt);
        enforce_conditioning(req.i2v_prompt, req.references, "shot " + pkg.shot_id);

        events->push_back({{"type", "generation_request"},
                           {"kind", "video"},
                           {"stage", "clip"},
                           {"shot_ids", std::vector<std::string>{pkg.shot_id}},
                           {"attempt", attempt},
                           {"prompt", req.i2v_prompt},
                           {"references", order_references(pkg)},
                           {"environment_ref", pkg.environment_ref ? json(*pkg.environment_ref)
                                                                   : json(nullptr)},
                           {"keyframe", kf.path},
                           {"duration", duration},
                           {"seed", *req.seed}});

        GeneratedClip clip = call_video(req);
        std::string rel = clip_rel_path(pkg.shot_id, attempt, clip.media_extension);
        if (!clip.descriptor.is_null())
            write_text_file(resolve(run_dir, rel), clip.descriptor.dump(2) + "\n");
        else
            write_bytes_file(resolve(run_dir, rel), clip.media);
        events->push_back({{"type", "clip_ready"},
                           {"shot_id", pkg.shot_id},
                           {"attempt", attempt},
                           {"path", rel},
                           {"duration", clip.duration}});
        return {rel, clip.duration};
    }

    // Audits run against resolved paths; jobs keep run-relative ones.
    ShotJob with_resolved_paths(ShotJob job) const {
        if (job.keyframe) job.keyframe->path = resolve(run_dir, job.keyframe->path);
        if (job.clip) job.clip->path = resolve(run_dir, job.clip->path);
        return job;
    }

    struct ShotOutcome {
        std::vector<json> events;
        ShotJob job;
    };

    ShotOutcome verify_keyframe_shot(ShotJob job) {
        ShotOutcome out;
        std::string rel_kf = job.keyframe->path;
        ShotJob working = with_resolved_paths(std::move(job));

        LoopHooks hooks;
        hooks.regenerate_keyframe = [&](const MemoryPackage& pkg, int attempt) {
            Keyframe kf = regenerate_singleton(pkg, attempt, false, &out.events);
            rel_kf = kf.path;
            kf.path = resolve(run_dir, kf.path);
            return kf;
        };
        hooks.on_audit = [&](Stage stage, int attempt, const AuditResult& result) {
            json verdicts = json::array();
            for (const auto& v : result.verdicts) verdicts.push_back(v.to_json());
            out.events.push_back({{"type", "audit"},
                                  {"shot_id", working.shot_id},
                                  {"stage", to_string(stage)},
                                  {"attempt", attempt},
                                  {"verdicts", std::move(verdicts)},
                                  {"pass", result.overall_pass}});
        };
        hooks.on_feedback = [&](const Feedback& f) {
            json e = f.to_json();
            e["type"] = "feedback";
            e["stage"] = "keyframe";
            out.events.push_back(std::move(e));
        };

        working = verification_loop(std::move(working), Stage::Keyframe, sp, *backends.judge,
                                    *backends.embed, config.thresholds, hooks);

        // Keep run-relative paths in the job record.
        working.keyframe->path = rel_kf;
        if (!working.best_keyframe_path.empty() &&
            working.best_keyframe_path.rfind(run_dir, 0) == 0)
            working.best_keyframe_path = working.best_keyframe_path.substr(run_dir.size() + 1);
        if (working.state == JobState::Exhausted && !working.best_keyframe_path.empty() &&
            working.best_keyframe_path != rel_kf) {
            // Carry the best-scoring keyframe into the clip stage.
            working.keyframe->path = working.best_keyframe_path;
        }
        out.events.push_back({{"type", "state"},
                              {"shot_id", working.shot_id},
                              {"stage", "keyframe"},
                              {"from", "Pending"},
                              {"to", to_string(working.state)}});
        out.job = std::move(working);
        return out;
    }

    void restore_keyframe_stage(ShotJob& job, const ShotReplay& sr) {
        job.package = replay_feedback(job.package, sp, sr.kf_feedback);
        job.attempt = std::max(1, sr.kf_max_attempt);
        if (sr.kf_path_by_attempt.count(sr.kf_max_attempt)) {
            Keyframe kf;
            kf.shot_id = job.shot_id;
            kf.path = sr.kf_path_by_attempt.at(sr.kf_max_attempt);
            if (sr.kf_prov_by_attempt.count(sr.kf_max_attempt))
                kf.provenance = sr.kf_prov_by_attempt.at(sr.kf_max_attempt);
            job.keyframe = std::move(kf);
        }
        job.state = job_state_from_string(*sr.kf_final_state);
        job.exhausted_at_keyframe = job.state == JobState::Exhausted;
        // Best attempt bookkeeping from the audit trail.
        for (const auto& [attempt, score] : sr.kf_score_by_attempt) {
            if (score > job.best_score) {
                job.best_score = score;
                job.best_attempt = attempt;
                if (sr.kf_path_by_attempt.count(attempt))
                    job.best_keyframe_path = sr.kf_path_by_attempt.at(attempt);
            }
        }
        if (job.state == JobState::Exhausted && !job.best_keyframe_path.empty() && job.keyframe)
            job.keyframe->path = job.best_keyframe_path;
    }

    void stage_verify() {
        const bool done = replay.stage_done("verify");
        std::vector<std::string> todo;
        for (const auto& id : shot_order) {
            ShotJob& job = jobs.at(id);
            if (!job.keyframe) continue;  // batch failure left it Pending
            const auto it = replay.shots.find(id);
            if (it != replay.shots.end() && it->second.kf_final_state) {
                restore_keyframe_stage(job, it->second);
                continue;
            }
            if (done) continue;
            todo.push_back(id);
        }

        if (!todo.empty()) {
            auto outcomes = ordered_parallel(todo, config.parallelism, [&](const std::string& id) {
                try {
                    return verify_keyframe_shot(jobs.at(id));
                } catch (const TransportError& e) {
                    // Audit transport failures do not consume generation
                    // attempts; the shot keeps its current state.
                    ShotOutcome out;
                    out.job = jobs.at(id);
                    out.events.push_back({{"type", "shot_stage_failed"},
                                          {"shot_id", id},
                                          {"stage", "keyframe"},
                                          {"error", e.what()}});
                    return out;
                }
            });
            for (auto& outcome : outcomes) {
                for (auto& e : outcome.events) log->append(std::move(e));
                jobs.at(outcome.job.shot_id) = std::move(outcome.job);
            }
        }
        if (!done) log->append({{"type", "stage_done"}, {"stage", "verify"}});
    }

    ShotOutcome clip_shot(ShotJob job) {
        ShotOutcome out;
        const bool was_exhausted = job.state == JobState::Exhausted;
        std::string rel_kf = job.keyframe->path;
        std::string rel_clip;

        ShotJob working = with_resolved_paths(std::move(job));
        working.attempt = 1;

        Keyframe first_kf;
        first_kf.shot_id = working.shot_id;
        first_kf.path = rel_kf;  // generate_clip_for resolves internally
        first_kf.provenance = working.keyframe->provenance;
        ClipHandle first = generate_clip_for(working.package, first_kf, 1, &out.events);
        rel_clip = first.path;
        working.clip = ClipHandle{resolve(run_dir, first.path), first.duration};
        if (!was_exhausted) {
            out.events.push_back({{"type", "state"},
                                  {"shot_id", working.shot_id},
                                  {"stage", "clip"},
                                  {"from", to_string(JobState::KeyframeReady)},
                                  {"to", "ClipReady"}});
        }
        working.state = JobState::ClipReady;  // kf-exhausted jobs still get their clip budget

        LoopHooks hooks;
        hooks.regenerate_keyframe = [&](const MemoryPackage& pkg, int attempt) {
            Keyframe kf = regenerate_singleton(pkg, attempt, true, &out.events);
            rel_kf = kf.path;
            kf.path = resolve(run_dir, kf.path);
            return kf;
        };
        hooks.generate_clip = [&](const MemoryPackage& pkg, const Keyframe& kf, int attempt) {
            Keyframe rel_view = kf;
            if (rel_view.path.rfind(run_dir, 0) == 0)
                rel_view.path = rel_view.path.substr(run_dir.size() + 1);
            ClipHandle handle = generate_clip_for(pkg, rel_view, attempt, &out.events);
            rel_clip = handle.path;
            return ClipHandle{resolve(run_dir, handle.path), handle.duration};
        };
        hooks.on_audit = [&](Stage stage, int attempt, const AuditResult& result) {
            json verdicts = json::array();
            for (const auto& v : result.verdicts) verdicts.push_back(v.to_json());
            out.events.push_back({{"type", "audit"},
                                  {"shot_id", working.shot_id},
                                  {"stage", to_string(stage)},
                                  {"attempt", attempt},
                                  {"verdicts", std::move(verdicts)},
                                  {"pass", result.overall_pass}});
        };
        hooks.on_feedback = [&](const Feedback& f) {
            json e = f.to_json();
            e["type"] = "feedback";
            e["stage"] = "clip";
            out.events.push_back(std::move(e));
        };

        working = verification_loop(std::move(working), Stage::Clip, sp, *backends.judge,
                                    *backends.embed, config.thresholds, hooks);

        working.keyframe->path = rel_kf;
        working.clip->path = rel_clip;
        if (working.best_clip && working.best_clip->path.rfind(run_dir, 0) == 0)
            working.best_clip->path = working.best_clip->path.substr(run_dir.size() + 1);
        if (!working.best_keyframe_path.empty() && working.best_keyframe_path.rfind(run_dir, 0) == 0)
            working.best_keyframe_path = working.best_keyframe_path.substr(run_dir.size() + 1);

        if (was_exhausted) working.state = JobState::Exhausted;
        out.events.push_back({{"type", "state"},
                              {"shot_id", working.shot_id},
                              {"stage", "clip"},
                              {"from", "ClipReady"},
                              {"to", to_string(working.state)}});
        out.job = std::move(working);
        return out;
    }

    void restore_clip_stage(ShotJob& job, const ShotReplay& sr) {
        job.package = replay_feedback(job.package, sp, sr.clip_feedback);
        if (sr.clip_by_attempt.count(sr.clip_max_attempt)) {
            const auto& [path, duration] = sr.clip_by_attempt.at(sr.clip_max_attempt);
            job.clip = ClipHandle{path, duration};
        }
        if (!job.exhausted_at_keyframe) job.state = job_state_from_string(*sr.clip_final_state);
        double best = -1;
        int best_attempt = 0;
        for (const auto& [attempt, score] : sr.clip_score_by_attempt) {
            if (score > best) {
                best = score;
                best_attempt = attempt;
            }
        }
        if (best_attempt > 0 && sr.clip_by_attempt.count(best_attempt)) {
            const auto& [path, duration] = sr.clip_by_attempt.at(best_attempt);
            job.best_clip = ClipHandle{path, duration};
        }
    }

    void stage_clips() {
        const bool done = replay.stage_done("clips");
        std::vector<std::string> todo;
        for (const auto& id : shot_order) {
            ShotJob& job = jobs.at(id);
            if (!job.keyframe) continue;
            const auto it = replay.shots.find(id);
            if (it != replay.shots.end() && it->second.clip_final_state) {
                restore_clip_stage(job, it->second);
                continue;
            }
            if (done) continue;
            if (job.state == JobState::KeyframeReady ||
                (job.state == JobState::Exhausted && job.exhausted_at_keyframe))
                todo.push_back(id);
        }

        if (!todo.empty()) {
            int workers = std::min(config.parallelism,
                                   config.backends.at(BackendKind::VideoGen).max_concurrent);
            auto outcomes = ordered_parallel(todo, workers, [&](const std::string& id) {
                try {
                    return clip_shot(jobs.at(id));
                } catch (const CineError& e) {
                    ShotOutcome out;
                    out.job = jobs.at(id);  // state unchanged
                    out.events.push_back({{"type", "shot_stage_failed"},
                                          {"shot_id", id},
                                          {"stage", "clip"},
                                          {"error", e.what()}});
                    return out;
                }
            });
            for (auto& outcome : outcomes) {
                for (auto& e : outcome.events) log->append(std::move(e));
                jobs.at(outcome.job.shot_id) = std::move(outcome.job);
            }
        }
        if (!done) log->append({{"type", "stage_done"}, {"stage", "clips"}});
    }

    void stage_stitch() {
        edl = stitch(jobs, shot_order, config.strict_stitch);
        if (replay.stage_done("stitch")) return;
        write_text_file(resolve(run_dir, kEdlFile), edl.to_json().dump(2) + "\n");
        log->append(
            {{"type", "edl_written"}, {"path", kEdlFile}, {"entries", edl.entries.size()}});

        if (!config.stitch_cmd.empty()) {
            std::string cmd = config.stitch_cmd;
            auto replace_all = [&cmd](const std::string& from, const std::string& to) {
                for (std::size_t pos = 0; (pos = cmd.find(from, pos)) != std::string::npos;
                     pos += to.size())
                    cmd.replace(pos, from.size(), to);
            };
            replace_all("{edl}", resolve(run_dir, kEdlFile));
            replace_all("{out}", resolve(run_dir, "final_video.mp4"));
            int code = std::system(cmd.c_str());
            log->append({{"type", "stitch_cmd"}, {"exit_code", code}});
        }
        log->append({{"type", "stage_done"}, {"stage", "stitch"}});
    }

    json report_json() const {
        json rows = json::array();
        int verified = 0, exhausted = 0;
        for (const auto& id : shot_order) {
            const ShotJob& job = jobs.at(id);
            if (job.state == JobState::Verified) ++verified;
            if (job.state == JobState::Exhausted) ++exhausted;
            rows.push_back(
                {{"shot_id", id},
                 {"state", to_string(job.state)},
                 {"attempt", job.attempt},
                 {"keyframe", job.keyframe ? json(job.keyframe->path) : json(nullptr)},
                 {"clip", job.clip ? json(job.clip->path) : json(nullptr)},
                 {"best_attempt", job.best_attempt},
                 {"best_score", job.best_score},
                 {"generation_feedback", job.package.generation_feedback}});
        }
        json backends_json = json::object();
        for (const auto& [kind, bc] : config.backends)
            backends_json[to_string(kind)] = {{"endpoint", bc.endpoint},
                                              {"model_name", bc.model_name}};
        return {{"run_id", run_id},
                {"seed", config.seed},
                {"style_prompt", style_prompt},
                {"global_context", config.global_context},
                {"max_retries", config.thresholds.max_retries},
                {"shots", rows},
                {"verified", verified},
                {"exhausted", exhausted},
                {"total", shot_order.size()},
                {"backends", backends_json},
                {"edl_entries", edl.entries.size()}};
    }

    void finish() {
        write_text_file(resolve(run_dir, kReportFile), report_json().dump(2) + "\n");
        int verified = 0, exhausted = 0;
        for (const auto& [id, job] : jobs) {
            if (job.state == JobState::Verified) ++verified;
            if (job.state == JobState::Exhausted) ++exhausted;
        }
        log->append({{"type", "run_completed"},
                     {"verified", verified},
                     {"exhausted", exhausted},
                     {"total", jobs.size()}});
        completed = true;
    }

    RunManifest manifest() const {
        RunManifest m;
        m.run_id = run_id;
        m.run_dir = run_dir;
        m.config = config;
        m.screenplay = sp;
        m.batches = batches;
        m.shot_order = shot_order;
        m.jobs = jobs;
        m.edl = edl;
        m.completed = completed;
        return m;
    }

    RunManifest execute() {
        stage_understand();
        if (stop_requested_after("understand")) return manifest();
        stage_refs();
        if (stop_requested_after("refs")) return manifest();
        stage_plan();
        if (stop_requested_after("plan")) return manifest();
        stage_keyframes();
        if (stop_requested_after("keyframes")) return manifest();
        stage_verify();
        if (stop_requested_after("verify")) return manifest();
        stage_clips();
        if (stop_requested_after("clips")) return manifest();
        stage_stitch();
        if (replay.completed) {
            completed = true;
            return manifest();
        }
        finish();
        return manifest();
    }
};

}  // namespace

RunManifest run_remake(const SourceSpec& source, const BackendSet& backends,
                       const RunConfig& config, const std::string& run_dir) {
    config.validate();
    if (!backends.understanding || !backends.image_gen || !backends.video_gen || !backends.judge ||
        !backends.embed)
        throw ConfigError("all five backends must be configured");
    const std::string dir = fs::absolute(run_dir).lexically_normal().string();
    fs::create_directories(dir);

    Engine engine(dir, config, source, backends, ReplayState{});
    write_text_file(resolve(run_dir, kRunFile),
                    json{{"run_id", engine.run_id},
                         {"config", config.to_json()},
                         {"source", source.to_json()}}
                            .dump(2) +
                        "\n");
    engine.log->append({{"type", "run_started"},
                        {"run_id", engine.run_id},
                        {"seed", config.seed},
                        {"style_prompt", engine.style_prompt},
                        {"copy_mode", source.copy_mode},
                        {"strict_stitch", config.strict_stitch},
                        {"max_retries", config.thresholds.max_retries},
                        {"clip_duration", config.clip_duration},
                        {"parallelism", config.parallelism},
                        {"global_context", config.global_context}});
    return engine.execute();
}

RunManifest resume_run(const std::string& run_dir, const BackendSet& backends) {
    const std::string dir = fs::absolute(run_dir).lexically_normal().string();
    std::ifstream run_file(resolve(dir, kRunFile));
    if (!run_file) throw CorruptManifest("missing " + std::string(kRunFile) + " in " + dir);
    json run_json;
    try {
        run_json = json::parse(run_file);
    } catch (const json::parse_error& e) {
        throw CorruptManifest(std::string("run.json: ") + e.what());
    }
    RunConfig config = RunConfig::from_json(run_json.at("config"));
    config.stop_after.clear();  // a resume always runs to completion
    SourceSpec source = SourceSpec::from_json(run_json.at("source"));

    auto events = EventLog::read(resolve(dir, kEventsFile));
    if (events.empty()) throw CorruptManifest("empty event log in " + dir);
    ReplayState replay = fold_events(events);
    if (replay.run_started.is_null()) throw CorruptManifest("no run_started event in " + dir);

    Engine engine(dir, config, source, backends, std::move(replay));
    return engine.execute();
}

}  // namespace cine
