#include "cine/bench.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "cine/errors.hpp"

namespace cine {

namespace {

std::set<std::string> without(const std::set<std::string>& base,
                              const std::set<std::string>& removed) {
    std::set<std::string> out;
    for (const auto& x : base)
        if (!removed.count(x)) out.insert(x);
    return out;
}

std::string fmt(double v, int precision = 3) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.*f", precision, v);
    return buf;
}

json load_json_or_throw(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoFailure("cannot read " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw MalformedJson(path + ": " + e.what());
    }
}

}  // namespace

SetMetrics set_metrics(const std::set<std::string>& pred, const std::set<std::string>& gt) {
    SetMetrics m;
    if (pred.empty() && gt.empty()) return {1.0, 1.0, 1.0, 1.0};
    if (pred.empty() || gt.empty()) return {0.0, 0.0, 0.0, 0.0};

    std::size_t inter = 0;
    for (const auto& x : pred) inter += gt.count(x);
    const std::size_t uni = pred.size() + gt.size() - inter;

    m.precision = double(inter) / double(pred.size());
    m.recall = double(inter) / double(gt.size());
    m.iou = double(inter) / double(uni);
    m.f1 = (m.precision + m.recall) > 0
               ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
               : 0.0;
    return m;
}

BenchDocument parse_bench_document(const json& j) {
    if (!j.is_object()) throw SchemaViolation("", "expected object");
    if (!j.contains("shots")) throw SchemaViolation("/shots", "required field absent");
    if (!j["shots"].is_array()) throw SchemaViolation("/shots", "expected array");

    BenchDocument doc;
    const json& shots = j["shots"];
    for (std::size_t i = 0; i < shots.size(); ++i) {
        const json& s = shots[i];
        const std::string p = "/shots/" + std::to_string(i);
        if (!s.is_object()) throw SchemaViolation(p, "expected object");
        if (!s.contains("shot_id") || !s["shot_id"].is_string())
            throw SchemaViolation(p + "/shot_id", "expected string");
        BenchShot shot;
        shot.shot_id = s["shot_id"];
        if (s.contains("characters")) {
            if (!s["characters"].is_array())
                throw SchemaViolation(p + "/characters", "expected array");
            for (std::size_t k = 0; k < s["characters"].size(); ++k) {
                if (!s["characters"][k].is_string())
                    throw SchemaViolation(p + "/characters/" + std::to_string(k),
                                          "expected string");
                shot.character_set.insert(s["characters"][k].get<std::string>());
            }
        }
        shot.plot_description = s.value("plot_description", "");
        for (const auto& existing : doc.shots)
            if (existing.shot_id == shot.shot_id)
                throw SchemaViolation(p + "/shot_id", "duplicate shot_id " + shot.shot_id);
        doc.shots.push_back(std::move(shot));
    }
    if (j.contains("background_characters")) {
        if (!j["background_characters"].is_array())
            throw SchemaViolation("/background_characters", "expected array");
        for (const auto& c : j["background_characters"])
            doc.background_characters.insert(c.get<std::string>());
    }
    return doc;
}

BenchDocument load_bench_document(const std::string& path) {
    return parse_bench_document(load_json_or_throw(path));
}

RegionsDocument parse_regions_document(const json& j) {
    if (!j.is_object()) throw SchemaViolation("", "expected object");
    if (!j.contains("frames")) throw SchemaViolation("/frames", "required field absent");
    if (!j["frames"].is_array()) throw SchemaViolation("/frames", "expected array");

    RegionsDocument doc;
    const json& frames = j["frames"];
    for (std::size_t i = 0; i < frames.size(); ++i) {
        const json& f = frames[i];
        const std::string p = "/frames/" + std::to_string(i);
        if (!f.is_object()) throw SchemaViolation(p, "expected object");
        FrameAnnotation frame;
        if (!f.contains("frame") || !f["frame"].is_string())
            throw SchemaViolation(p + "/frame", "expected string");
        frame.frame = f["frame"];
        if (!f.contains("shot_id") || !f["shot_id"].is_string())
            throw SchemaViolation(p + "/shot_id", "expected string");
        frame.shot_id = f["shot_id"];
        const json& regions = f.value("regions", json::array());
        for (std::size_t k = 0; k < regions.size(); ++k) {
            const json& r = regions[k];
            const std::string rp = p + "/regions/" + std::to_string(k);
            RegionAnnotation region;
            const std::string kind = r.value("kind", "");
            if (kind == "character") {
                region.kind = RegionAnnotation::Kind::Character;
                if (!r.contains("character_id"))
                    throw SchemaViolation(rp + "/character_id", "required for character regions");
                region.character_id = r["character_id"];
            } else if (kind == "background") {
                region.kind = RegionAnnotation::Kind::Background;
            } else {
                throw SchemaViolation(rp + "/kind", "expected character|background");
            }
            region.x = r.value("x", 0);
            region.y = r.value("y", 0);
            region.w = r.value("w", 0);
            region.h = r.value("h", 0);
            if (region.w <= 0 || region.h <= 0)
                throw SchemaViolation(rp, "region needs positive w and h");
            frame.regions.push_back(std::move(region));
        }
        doc.frames.push_back(std::move(frame));
    }
    return doc;
}

RegionsDocument load_regions_document(const std::string& path) {
    return parse_regions_document(load_json_or_throw(path));
}

UnderstandingEval eval_understanding(const BenchDocument& pred, const BenchDocument& gt,
                                     JudgeBackend& judge) {
    UnderstandingEval eval;
    std::map<std::string, const BenchShot*> pred_by_id;
    for (const auto& s : pred.shots) pred_by_id[s.shot_id] = &s;

    std::set<std::string> joined;
    for (const auto& gt_shot : gt.shots) {
        auto it = pred_by_id.find(gt_shot.shot_id);
        if (it == pred_by_id.end()) {
            eval.unmatched_gt.push_back(gt_shot.shot_id);
            continue;
        }
        joined.insert(gt_shot.shot_id);
        const BenchShot& p = *it->second;

        UnderstandingRow row;
        row.shot_id = gt_shot.shot_id;
        row.set = set_metrics(without(p.character_set, gt.background_characters),
                              without(gt_shot.character_set, gt.background_characters));
        row.plot_score =
            judge.judge_text(gt_shot.plot_description, p.plot_description, 0.0).score;
        eval.rows.push_back(std::move(row));
    }
    for (const auto& p : pred.shots)
        if (!joined.count(p.shot_id)) eval.unmatched_pred.push_back(p.shot_id);

    if (eval.rows.empty()) throw EmptyJoin("no shot ids shared between prediction and ground truth");

    for (const auto& row : eval.rows) {
        eval.macro.precision += row.set.precision;
        eval.macro.recall += row.set.recall;
        eval.macro.iou += row.set.iou;
        eval.macro.f1 += row.set.f1;
        eval.macro_plot += row.plot_score;
    }
    const double n = double(eval.rows.size());
    eval.macro.precision /= n;
    eval.macro.recall /= n;
    eval.macro.iou /= n;
    eval.macro.f1 /= n;
    eval.macro_plot /= n;
    return eval;
}

SimilarityEval clip_id_score(const RegionsDocument& regions,
                             const std::map<std::string, std::string>& portraits,
                             EmbedBackend& embed) {
    // shot -> accumulated per-character similarities
    std::map<std::string, std::pair<double, int>> by_shot;
    std::vector<std::string> shot_order;

    for (const auto& frame : regions.frames) {
        for (const auto& region : frame.regions) {
            if (region.kind != RegionAnnotation::Kind::Character) continue;
            auto it = portraits.find(region.character_id);
            if (it == portraits.end()) throw MissingPortrait(region.character_id);
            Region crop = Region::character(frame.frame, region.character_id);
            crop.rect = {{region.x, region.y, region.w, region.h}};
            double sim = embed.embed_similarity(crop, Region::whole(it->second));
            if (!by_shot.count(frame.shot_id)) shot_order.push_back(frame.shot_id);
            auto& acc = by_shot[frame.shot_id];
            acc.first += sim;
            acc.second += 1;
        }
    }

    SimilarityEval eval;
    for (const auto& shot_id : shot_order) {
        const auto& [sum, count] = by_shot.at(shot_id);
        eval.per_shot.push_back({shot_id, sum / count});
    }
    for (const auto& s : eval.per_shot) eval.overall += s.score;
    if (!eval.per_shot.empty()) eval.overall /= double(eval.per_shot.size());
    return eval;
}

SimilarityEval clip_scene_score(const RegionsDocument& regions,
                                const std::map<std::string, std::string>& shot_to_scene,
                                const std::map<std::string, std::string>& scene_anchors,
                                EmbedBackend& embed) {
    std::map<std::string, std::pair<double, int>> by_shot;
    std::vector<std::string> shot_order;

    for (const auto& frame : regions.frames) {
        auto scene_it = shot_to_scene.find(frame.shot_id);
        if (scene_it == shot_to_scene.end())
            throw MissingAnchor("scene", "shot " + frame.shot_id);
        auto anchor_it = scene_anchors.find(scene_it->second);
        if (anchor_it == scene_anchors.end())
            throw MissingAnchor("environment", scene_it->second);

        for (const auto& region : frame.regions) {
            if (region.kind != RegionAnnotation::Kind::Background) continue;
            Region crop = Region::background(frame.frame);
            crop.rect = {{region.x, region.y, region.w, region.h}};
            double sim = embed.embed_similarity(crop, Region::background(anchor_it->second));
            if (!by_shot.count(frame.shot_id)) shot_order.push_back(frame.shot_id);
            auto& acc = by_shot[frame.shot_id];
            acc.first += sim;
            acc.second += 1;
        }
    }

    SimilarityEval eval;
    for (const auto& shot_id : shot_order) {
        const auto& [sum, count] = by_shot.at(shot_id);
        eval.per_shot.push_back({shot_id, sum / count});
    }
    for (const auto& s : eval.per_shot) eval.overall += s.score;
    if (!eval.per_shot.empty()) eval.overall /= double(eval.per_shot.size());
    return eval;
}

VlmScores vlm_scores(const std::vector<SceneGroup>& groups, JudgeBackend& judge) {
    if (groups.empty()) throw InsufficientSamples("no scene groups");
    VlmScores total;
    for (const auto& group : groups) {
        if (group.keyframes.size() < 2)
            throw InsufficientSamples("scene group " + group.scene_id + " has " +
                                      std::to_string(group.keyframes.size()) +
                                      " keyframes, need at least 2");
        total.id_vlm +=
            judge.judge_group(group.keyframes, group.expectations, Dimension::Identity, 0.0).score;
        total.scene_vlm +=
            judge.judge_group(group.keyframes, group.expectations, Dimension::Environment, 0.0)
                .score;
        total.plot_vlm +=
            judge.judge_group(group.keyframes, group.expectations, Dimension::Plot, 0.0).score;
    }
    const double n = double(groups.size());
    return {total.id_vlm / n, total.scene_vlm / n, total.plot_vlm / n};
}

json EvalReport::to_json() const {
    json j = json::object();
    j["provenance"] = provenance;

    const ReferenceScores ref;
    j["reference_full_scale"] = {{"id_vlm", ref.id_vlm},
                                 {"scene_vlm", ref.scene_vlm},
                                 {"plot_vlm", ref.plot_vlm},
                                 {"clip_i_id", ref.clip_i_id},
                                 {"clip_i_scene", ref.clip_i_scene},
                                 {"understanding",
                                  {{"iou", ref.understanding_iou},
                                   {"precision", ref.understanding_precision},
                                   {"recall", ref.understanding_recall},
                                   {"f1", ref.understanding_f1}}},
                                 {"note", "published full-scale configuration; not reproducible "
                                          "with offline backends"}};

    if (understanding) {
        json rows = json::array();
        for (const auto& r : understanding->rows)
            rows.push_back({{"shot_id", r.shot_id},
                            {"precision", r.set.precision},
                            {"recall", r.set.recall},
                            {"iou", r.set.iou},
                            {"f1", r.set.f1},
                            {"plot_score", r.plot_score}});
        j["understanding"] = {{"rows", std::move(rows)},
                              {"macro",
                               {{"precision", understanding->macro.precision},
                                {"recall", understanding->macro.recall},
                                {"iou", understanding->macro.iou},
                                {"f1", understanding->macro.f1},
                                {"plot_score", understanding->macro_plot}}},
                              {"unmatched_pred", understanding->unmatched_pred},
                              {"unmatched_gt", understanding->unmatched_gt}};
    }

    json remaking = json::object();
    bool have_remaking = false;
    if (vlm) {
        remaking["id_vlm"] = vlm->id_vlm;
        remaking["scene_vlm"] = vlm->scene_vlm;
        remaking["plot_vlm"] = vlm->plot_vlm;
        have_remaking = true;
    }
    auto emit_similarity = [&](const char* key, const SimilarityEval& e) {
        json rows = json::array();
        for (const auto& s : e.per_shot) rows.push_back({{"shot_id", s.shot_id}, {"score", s.score}});
        remaking[key] = {{"overall", e.overall}, {"per_shot", std::move(rows)}};
        have_remaking = true;
    };
    if (id_similarity) emit_similarity("clip_i_id", *id_similarity);
    if (scene_similarity) emit_similarity("clip_i_scene", *scene_similarity);
    if (have_remaking) j["remaking"] = std::move(remaking);
    return j;
}

std::string EvalReport::to_markdown() const {
    const ReferenceScores ref;
    std::string md = "# Evaluation Report\n\n";

    md += "## Long-Video Remaking\n\n";
    md += "| Method | ID-VLM | Scene-VLM | Plot-VLM | CLIP-I (ID) | CLIP-I (Scene) |\n";
    md += "|---|---|---|---|---|---|\n";
    md += "| reference (full-scale configuration) | " + fmt(ref.id_vlm, 2) + " | " +
          fmt(ref.scene_vlm, 2) + " | " + fmt(ref.plot_vlm, 2) + " | " + fmt(ref.clip_i_id) +
          " | " + fmt(ref.clip_i_scene) + " |\n";
    if (vlm || id_similarity || scene_similarity) {
        md += "| this run | ";
        md += (vlm ? fmt(vlm->id_vlm, 2) : "-") + std::string(" | ");
        md += (vlm ? fmt(vlm->scene_vlm, 2) : "-") + std::string(" | ");
        md += (vlm ? fmt(vlm->plot_vlm, 2) : "-") + std::string(" | ");
        md += (id_similarity ? fmt(id_similarity->overall) : "-") + std::string(" | ");
        md += (scene_similarity ? fmt(scene_similarity->overall) : "-") + std::string(" |\n");
    }
    md += "\n";

    md += "## Long-Video Understanding\n\n";
    md += "| Setting | IoU | Prec. | Recall | F1 | Plot |\n";
    md += "|---|---|---|---|---|---|\n";
    md += "| reference (full-scale configuration) | " + fmt(ref.understanding_iou) + " | " +
          fmt(ref.understanding_precision) + " | " + fmt(ref.understanding_recall) + " | " +
          fmt(ref.understanding_f1) + " | - |\n";
    if (understanding) {
        md += "| this run | " + fmt(understanding->macro.iou) + " | " +
              fmt(understanding->macro.precision) + " | " + fmt(understanding->macro.recall) +
              " | " + fmt(understanding->macro.f1) + " | " + fmt(understanding->macro_plot, 2) +
              " |\n";
        if (understanding->rows.empty()) md += "\n_Warning: zero joined rows._\n";
    }
    md += "\nReference rows report the published full-scale configuration and are not "
          "reproducible with offline backends; see provenance in report.json.\n";
    return md;
}

void emit_report(const EvalReport& report, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    std::ofstream js(out_dir + "/report.json");
    if (!js) throw IoFailure("cannot write " + out_dir + "/report.json");
    js << report.to_json().dump(2) << "\n";
    std::ofstream md(out_dir + "/report.md");
    if (!md) throw IoFailure("cannot write " + out_dir + "/report.md");
    md << report.to_markdown();
}

}  // namespace cine
