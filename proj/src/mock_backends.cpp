#include "cine/mock_backends.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>

#include "cine/errors.hpp"
#include "cine/fixtures.hpp"
#include "cine/hashing.hpp"
#include "cine/image.hpp"

namespace cine {

namespace {

constexpr const char* kRefusalMarker = "TRIGGER_REFUSAL";

std::string join(const std::vector<std::string>& parts, const char* sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

// Parses "key=value; key=value" attribute blocks.
std::map<std::string, std::string> parse_attrs(const std::string& block) {
    std::map<std::string, std::string> out;
    for (auto& part : split(block, ';')) {
        auto eq = part.find('=');
        if (eq == std::string::npos) continue;
        std::string key = part.substr(0, eq);
        std::string value = part.substr(eq + 1);
        auto trim = [](std::string& s) {
            while (!s.empty() && s.front() == ' ') s.erase(s.begin());
            while (!s.empty() && s.back() == ' ') s.pop_back();
        };
        trim(key);
        trim(value);
        out[key] = value;
    }
    return out;
}

struct ParsedClause {
    CellTags tags;
    std::string text;  // full clause, hashed for fault decisions
    bool faultable = false;
};

// Extracts renderable cells from a prompt: CELL clauses from grid/keyframe
// prompts, or one synthetic cell from a reference-generation prompt.
std::vector<ParsedClause> parse_prompt(const std::string& prompt) {
    std::vector<ParsedClause> out;
    std::size_t pos = 0;
    while ((pos = prompt.find("CELL (", pos)) != std::string::npos) {
        std::size_t end = prompt.find('\n', pos);
        if (end == std::string::npos) end = prompt.size();
        std::string clause = prompt.substr(pos, end - pos);

        ParsedClause pc;
        pc.text = clause;
        pc.faultable = true;
        int r = 0, c = 0;
        std::sscanf(clause.c_str(), "CELL (%d,%d)", &r, &c);
        pc.tags.row = r;
        pc.tags.col = c;
        auto lb = clause.find('[');
        auto rb = clause.find(']');
        if (lb != std::string::npos && rb != std::string::npos && rb > lb) {
            auto attrs = parse_attrs(clause.substr(lb + 1, rb - lb - 1));
            pc.tags.scene = attrs["scene"];
            pc.tags.characters = split(attrs["characters"], ',');
            if (attrs.count("attempt")) pc.tags.attempt = std::atoi(attrs["attempt"].c_str());
        }
        out.push_back(std::move(pc));
        pos = end;
    }
    if (!out.empty()) return out;

    for (const char* head : {"ENVIRONMENT_REF", "CLOTHING_REF", "PORTRAIT_REF"}) {
        auto p = prompt.find(head);
        if (p == std::string::npos) continue;
        ParsedClause pc;
        pc.text = prompt;
        auto lb = prompt.find('[', p);
        auto rb = prompt.find(']', p);
        if (lb != std::string::npos && rb != std::string::npos && rb > lb) {
            auto attrs = parse_attrs(prompt.substr(lb + 1, rb - lb - 1));
            pc.tags.scene = attrs["scene"];
            if (attrs.count("character")) pc.tags.characters = {attrs["character"]};
            if (attrs.count("attempt")) pc.tags.attempt = std::atoi(attrs["attempt"].c_str());
        }
        out.push_back(std::move(pc));
        return out;
    }

    ParsedClause pc;
    pc.text = prompt;
    out.push_back(std::move(pc));
    return out;
}

int score_from_mismatches(int m) { return m == 0 ? 10 : m == 1 ? 4 : 0; }

std::string imposter_id(std::uint64_t h) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "@imposter_%02u", unsigned(h % 90 + 10));
    return buf;
}

}  // namespace

std::string to_string(DriftKind k) {
    switch (k) {
        case DriftKind::IdentitySwap: return "identity_swap";
        case DriftKind::BackgroundMutation: return "background_mutation";
        case DriftKind::CharacterCount: return "character_count";
        case DriftKind::PlotMismatch: return "plot_mismatch";
    }
    return "unknown";
}

DriftKind drift_kind_from_string(const std::string& s) {
    if (s == "identity_swap") return DriftKind::IdentitySwap;
    if (s == "background_mutation") return DriftKind::BackgroundMutation;
    if (s == "character_count") return DriftKind::CharacterCount;
    if (s == "plot_mismatch") return DriftKind::PlotMismatch;
    throw ConfigError("unknown drift kind \"" + s + "\"");
}

json cells_to_sidecar(const std::vector<CellTags>& cells) {
    json arr = json::array();
    for (const auto& c : cells)
        arr.push_back({{"row", c.row},
                       {"col", c.col},
                       {"scene", c.scene},
                       {"characters", c.characters},
                       {"attempt", c.attempt}});
    return json{{"cells", std::move(arr)}};
}

std::vector<CellTags> cells_from_sidecar(const json& j) {
    std::vector<CellTags> out;
    for (const auto& c : j.value("cells", json::array())) {
        CellTags t;
        t.row = c.value("row", 0);
        t.col = c.value("col", 0);
        t.scene = c.value("scene", "");
        t.characters = c.value("characters", std::vector<std::string>{});
        t.attempt = c.value("attempt", 1);
        out.push_back(std::move(t));
    }
    return out;
}

std::string sidecar_path(const std::string& image_path) { return image_path + ".tags.json"; }

std::vector<CellTags> read_tags(const std::string& content_path) {
    // Clip descriptors carry their samples inline; images use the sidecar.
    std::string path = content_path;
    if (path.size() > 5 && path.substr(path.size() - 5) == ".json") {
        std::ifstream in(path);
        if (!in) return {};
        json j;
        try {
            j = json::parse(in);
        } catch (const json::parse_error&) {
            return {};
        }
        if (j.contains("samples")) return cells_from_sidecar(json{{"cells", j["samples"]}});
        return cells_from_sidecar(j);
    }
    std::ifstream in(sidecar_path(path));
    if (!in) return {};
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error&) {
        return {};
    }
    return cells_from_sidecar(j);
}

void write_sidecar(const std::string& image_path, const json& tags) {
    std::ofstream out(sidecar_path(image_path));
    if (!out) throw IoFailure("cannot write " + sidecar_path(image_path));
    out << tags.dump(2) << "\n";
}

std::set<std::string> region_tags(const Region& region) {
    auto cells = read_tags(region.path);
    std::set<std::string> tags;
    switch (region.kind) {
        case Region::Kind::Whole:
            for (const auto& c : cells) {
                if (!c.scene.empty()) tags.insert("scene:" + c.scene);
                for (const auto& ch : c.characters) tags.insert("char:" + ch);
            }
            break;
        case Region::Kind::Character: {
            bool present = false;
            std::set<std::string> actual;
            for (const auto& c : cells)
                for (const auto& ch : c.characters) {
                    actual.insert("char:" + ch);
                    if (ch == region.character_id) present = true;
                }
            if (present)
                tags.insert("char:" + region.character_id);
            else
                tags = std::move(actual);  // whoever actually rendered there
            break;
        }
        case Region::Kind::Background:
            for (const auto& c : cells)
                if (!c.scene.empty()) tags.insert("scene:" + c.scene);
            break;
    }
    return tags;
}

double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
    if (a.empty() && b.empty()) return 1.0;
    std::size_t inter = 0;
    for (const auto& x : a) inter += b.count(x);
    std::size_t uni = a.size() + b.size() - inter;
    return uni == 0 ? 1.0 : double(inter) / double(uni);
}

std::string environment_ref_prompt(const std::string& scene_id,
                                   const std::string& environment_description,
                                   const std::string& style_prompt) {
    std::string p;
    if (!style_prompt.empty()) p += style_prompt + "\n";
    p += "ENVIRONMENT_REF [scene=" + scene_id + "; attempt=1]: " + environment_description +
         "\nEnvironment only: no people, no characters, no figures. Constraints: no subtitles, "
         "no watermarks, no text overlays";
    return p;
}

std::string clothing_ref_prompt(const std::string& scene_id, const std::string& character_id,
                                const std::string& dna_text, const std::string& target_name,
                                const std::string& style_prompt) {
    std::string p;
    if (!style_prompt.empty()) p += style_prompt + "\n";
    p += "CLOTHING_REF [scene=" + scene_id + "; character=" + character_id +
         "; attempt=1]: full-body reference of " + (target_name.empty() ? "the character" : target_name) +
         " wearing " + dna_text +
         "\nConstraints: no subtitles, no watermarks, no text overlays";
    return p;
}

std::string portrait_ref_prompt(const std::string& character_id, const std::string& target_name) {
    return "PORTRAIT_REF [character=" + character_id + "]: head-and-shoulders portrait of " +
           (target_name.empty() ? "the character" : target_name);
}

std::string MockUnderstanding::understand(const std::string& source,
                                          const std::string& instructions) {
    (void)instructions;
    if (source.find(kRefusalMarker) != std::string::npos)
        throw TransportError("mock endpoint rejected source " + source);

    if (std::filesystem::exists(source)) {
        std::ifstream in(source);
        std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        return text;
    }

    FixtureParams params;
    params.seed = world_.seed;
    int scenes = 0;
    if (std::sscanf(source.c_str(), "demo_%dscene", &scenes) == 1 && scenes > 0) {
        params.scenes = scenes;
        params.shots = scenes * 3;
    }
    Screenplay sp = synth_screenplay(params);
    if (source.find("dangling") != std::string::npos && !sp.shots.empty())
        sp.shots.back().scene_id = "major_scene_99";
    return serialize_screenplay(sp);
}

GeneratedImage MockImageGen::generate_image(const ImageGenRequest& req) {
    check_request(req);
    if (req.prompt.find(kRefusalMarker) != std::string::npos)
        throw BackendRefusal("mock policy rejection");

    auto clauses = parse_prompt(req.prompt);
    std::vector<CellTags> cells;
    cells.reserve(clauses.size());

    std::vector<DriftKind> kinds;
    for (DriftKind k : {DriftKind::IdentitySwap, DriftKind::BackgroundMutation,
                        DriftKind::CharacterCount})
        if (world_.drift_kinds.count(k)) kinds.push_back(k);

    for (const auto& clause : clauses) {
        CellTags tags = clause.tags;
        if (clause.faultable && !kinds.empty() && world_.fault_rate > 0.0) {
            std::uint64_t h = hash_combine(world_.seed, req.seed.value_or(0));
            h = hash_combine(h, clause.text);
            if (hash_unit(hash_combine(h, "fault")) < world_.fault_rate) {
                DriftKind kind = kinds[hash_combine(h, "kind") % kinds.size()];
                std::uint64_t pick = hash_combine(h, "pick");
                if (kind == DriftKind::IdentitySwap && tags.characters.empty())
                    kind = DriftKind::BackgroundMutation;
                switch (kind) {
                    case DriftKind::IdentitySwap:
                        tags.characters[pick % tags.characters.size()] = imposter_id(pick);
                        break;
                    case DriftKind::BackgroundMutation:
                        tags.scene += "_mutated";
                        break;
                    case DriftKind::CharacterCount:
                        tags.characters.push_back("@extra_01");
                        break;
                    case DriftKind::PlotMismatch:
                        break;  // plot drift is injected at the clip stage
                }
            }
        }
        cells.push_back(std::move(tags));
    }

    int rows = 1, cols = 1;
    for (const auto& c : cells) {
        rows = std::max(rows, c.row + 1);
        cols = std::max(cols, c.col + 1);
    }
    Image img(req.width, req.height);
    for (const auto& c : cells) {
        std::uint64_t h = fnv1a64(c.scene);
        h = hash_combine(h, join(c.characters, ","));
        h = hash_combine(h, std::to_string(c.attempt));
        int x0 = c.col * req.width / cols;
        int x1 = (c.col + 1) * req.width / cols;
        int y0 = c.row * req.height / rows;
        int y1 = (c.row + 1) * req.height / rows;
        img.fill_rect(x0, y0, x1 - x0, y1 - y0, std::uint8_t(h >> 16), std::uint8_t(h >> 8),
                      std::uint8_t(h));
    }

    GeneratedImage out;
    out.png = encode_png(img);
    out.tags = cells_to_sidecar(cells);
    return out;
}

GeneratedClip MockVideoGen::generate_video(const VideoGenRequest& req) {
    check_request(req);
    if (req.i2v_prompt.find(kRefusalMarker) != std::string::npos)
        throw BackendRefusal("mock policy rejection");

    auto base_cells = read_tags(req.keyframe);
    CellTags base = base_cells.empty() ? CellTags{} : base_cells.front();
    std::vector<CellTags> samples = {base, base, base};  // first / middle / last
    std::string echo = req.i2v_prompt;

    std::vector<DriftKind> kinds;
    for (DriftKind k : {DriftKind::IdentitySwap, DriftKind::BackgroundMutation,
                        DriftKind::PlotMismatch})
        if (world_.drift_kinds.count(k)) kinds.push_back(k);

    if (!kinds.empty() && world_.fault_rate > 0.0) {
        // Keyed on seed and prompt only: file paths vary between run
        // directories and must not influence fault decisions.
        std::uint64_t h = hash_combine(world_.seed, req.seed.value_or(0));
        h = hash_combine(h, req.i2v_prompt);
        if (hash_unit(hash_combine(h, "fault")) < world_.fault_rate) {
            DriftKind kind = kinds[hash_combine(h, "kind") % kinds.size()];
            std::uint64_t pick = hash_combine(h, "pick");
            int sample = 1 + int(pick % 2);  // corrupt mid or last sample
            if (kind == DriftKind::IdentitySwap && base.characters.empty())
                kind = DriftKind::PlotMismatch;
            switch (kind) {
                case DriftKind::IdentitySwap:
                    samples[sample].characters.erase(samples[sample].characters.begin() +
                                                     pick % samples[sample].characters.size());
                    break;
                case DriftKind::BackgroundMutation:
                    samples[sample].scene += "_mutated";
                    break;
                case DriftKind::PlotMismatch: {
                    auto tokens = plot_tokens(req.i2v_prompt);
                    if (!tokens.empty()) {
                        const std::string& victim = tokens[pick % tokens.size()];
                        auto at = echo.find(victim);
                        if (at != std::string::npos) echo.replace(at, victim.size(), "offscript");
                    }
                    break;
                }
                case DriftKind::CharacterCount:
                    break;  // keyframe-stage drift only
            }
        }
    }

    json samples_json = json::array();
    for (const auto& s : samples)
        samples_json.push_back({{"row", s.row},
                                {"col", s.col},
                                {"scene", s.scene},
                                {"characters", s.characters},
                                {"attempt", s.attempt}});

    GeneratedClip clip;
    clip.duration = req.duration;
    clip.media_extension = "json";
    clip.descriptor = {{"v", 1},
                       {"duration", req.duration},
                       {"keyframe", req.keyframe},
                       {"samples", std::move(samples_json)},
                       {"i2v_echo", echo},
                       {"references", req.references}};
    return clip;
}

std::vector<std::string> plot_tokens(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char raw : text) {
        unsigned char c = static_cast<unsigned char>(raw);
        if (std::isalnum(c)) {
            cur += char(std::tolower(c));
        } else {
            if (cur.size() >= 3) out.push_back(cur);
            cur.clear();
        }
    }
    if (cur.size() >= 3) out.push_back(cur);
    return out;
}

namespace {

int missing_token_count(const std::string& reference, const std::string& candidate) {
    auto ref = plot_tokens(reference);
    auto cand = plot_tokens(candidate);
    std::set<std::string> have(cand.begin(), cand.end());
    std::set<std::string> missing;
    for (const auto& t : ref)
        if (!have.count(t)) missing.insert(t);
    return int(missing.size());
}

}  // namespace

JudgeVerdict MockJudge::judge(const std::string& content, const JudgeContext& ctx, Dimension dim,
                              double threshold) {
    const MemoryPackage* pkg = ctx.package;
    const Shot* shot = ctx.shot;
    auto samples = read_tags(content);
    if (samples.empty()) samples.push_back(CellTags{});

    JudgeVerdict v;
    v.dimension = dim;
    int worst_score = 10;
    std::string worst_note;

    // Plot is a text check against the conditioning context, independent of
    // the rendered samples.
    if (dim == Dimension::Plot) {
        std::string reference, candidate;
        bool is_clip = content.size() > 5 && content.substr(content.size() - 5) == ".json";
        if (is_clip) {
            reference = shot ? shot->i2v_prompt : "";
            std::ifstream in(content);
            json j = in ? json::parse(in, nullptr, false) : json();
            candidate = j.is_object() ? j.value("i2v_echo", "") : "";
        } else {
            reference = shot ? shot->one_shot_prompt : "";
            candidate = pkg ? pkg->narrative.language_prompt : "";
        }
        int m = missing_token_count(reference, candidate);
        v.score = score_from_mismatches(m);
        v.pass = v.score >= threshold;
        v.rationale = m == 0 ? "narrative matches the screenplay"
                             : "narrative diverges from the screenplay (" + std::to_string(m) +
                                   " missing tokens)";
        return v;
    }

    for (std::size_t i = 0; i < samples.size(); ++i) {
        const CellTags& s = samples[i];
        std::set<std::string> chars(s.characters.begin(), s.characters.end());
        int m = 0;
        std::string note;
        switch (dim) {
            case Dimension::Quality: {
                int expected = shot ? int(shot->character_set().size()) : int(chars.size());
                m = std::abs(expected - int(chars.size()));
                if (m) note = "expected " + std::to_string(expected) + " characters, found " +
                              std::to_string(chars.size());
                break;
            }
            case Dimension::Identity: {
                if (pkg) {
                    std::set<std::string> ref_paths(pkg->character_refs.begin(),
                                                    pkg->character_refs.end());
                    for (const auto& [cid, mapping] : pkg->character_mappings) {
                        bool anchored = std::any_of(
                            mapping.portraits.begin(), mapping.portraits.end(),
                            [&](const std::string& p) { return ref_paths.count(p) > 0; });
                        if (anchored && !chars.count(cid)) {
                            ++m;
                            note += (note.empty() ? "" : "; ") + cid + " missing";
                        }
                    }
                }
                break;
            }
            case Dimension::Environment: {
                if (pkg && s.scene != pkg->major_scene) {
                    m = 1;
                    note = "scene is " + s.scene + ", anchor is " + pkg->major_scene;
                }
                break;
            }
            case Dimension::Plot:
                break;  // handled above
        }
        int score = score_from_mismatches(m);
        if (score < worst_score) {
            worst_score = score;
            worst_note = "sample " + std::to_string(i) + ": " + note;
        }
    }

    v.score = worst_score;
    v.pass = v.score >= threshold;
    v.rationale = worst_score == 10 ? to_string(dim) + " consistent with anchors" : worst_note;
    return v;
}

JudgeVerdict MockJudge::judge_region_match(const Region& region, const std::string& reference,
                                           double threshold) {
    JudgeVerdict v;
    v.dimension = Dimension::Identity;
    v.score = 10.0 * jaccard(region_tags(region), region_tags(Region::whole(reference)));
    v.pass = v.score >= threshold;
    v.rationale = "tag overlap with reference";
    return v;
}

JudgeVerdict MockJudge::judge_text(const std::string& reference, const std::string& candidate,
                                   double threshold) {
    JudgeVerdict v;
    v.dimension = Dimension::Plot;
    v.score = score_from_mismatches(missing_token_count(reference, candidate));
    v.pass = v.score >= threshold;
    v.rationale = "token containment against the reference description";
    return v;
}

JudgeVerdict MockJudge::judge_group(const std::vector<std::string>& images,
                                    const json& expectations, Dimension dim, double threshold) {
    JudgeVerdict v;
    v.dimension = dim;
    if (images.empty()) {
        v.score = 0;
        v.pass = false;
        v.rationale = "no images";
        return v;
    }
    int good = 0;
    for (std::size_t i = 0; i < images.size(); ++i) {
        auto cells = read_tags(images[i]);
        std::set<std::string> chars;
        std::set<std::string> scenes;
        for (const auto& c : cells) {
            for (const auto& ch : c.characters) chars.insert(ch);
            if (!c.scene.empty()) scenes.insert(c.scene);
        }
        json exp = i < expectations.size() ? expectations[int(i)] : json::object();
        std::set<std::string> want_chars;
        for (const auto& c : exp.value("characters", std::vector<std::string>{}))
            want_chars.insert(c);
        std::string want_scene = exp.value("scene", "");

        bool scene_ok = want_scene.empty() || (scenes.size() == 1 && *scenes.begin() == want_scene);
        bool chars_ok = std::includes(chars.begin(), chars.end(), want_chars.begin(),
                                      want_chars.end());
        bool ok = false;
        switch (dim) {
            case Dimension::Identity: ok = chars_ok; break;
            case Dimension::Environment: ok = scene_ok; break;
            case Dimension::Plot:
            case Dimension::Quality: ok = chars_ok && scene_ok && chars == want_chars; break;
        }
        if (ok) ++good;
    }
    v.score = 10.0 * double(good) / double(images.size());
    v.pass = v.score >= threshold;
    v.rationale = std::to_string(good) + "/" + std::to_string(images.size()) +
                  " keyframes consistent across the scene group";
    return v;
}

double MockEmbed::embed_similarity(const Region& a, const Region& b) {
    return jaccard(region_tags(a), region_tags(b));
}

BackendSet make_mock_backends(const MockWorld& world) {
    BackendSet set;
    set.understanding = std::make_shared<MockUnderstanding>(world);
    set.image_gen = std::make_shared<MockImageGen>(world);
    set.video_gen = std::make_shared<MockVideoGen>(world);
    set.judge = std::make_shared<MockJudge>(world);
    set.embed = std::make_shared<MockEmbed>(world);
    return set;
}

}  // namespace cine
