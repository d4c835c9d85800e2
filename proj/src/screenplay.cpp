#include "cine/screenplay.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>

#include "cine/errors.hpp"

namespace cine {

namespace {

constexpr double kRatioTolerance = 1e-4;
constexpr double kLabelTolerance = 1e-3;
constexpr double kDurationTolerance = 1e-3;

std::string idx_path(const std::string& base, std::size_t i, const std::string& field = {}) {
    std::string p = base + "/" + std::to_string(i);
    if (!field.empty()) p += "/" + field;
    return p;
}

const json* get_field(const json& obj, const std::string& key) {
    auto it = obj.find(key);
    return it == obj.end() ? nullptr : &*it;
}

const json& require_field(const json& obj, const std::string& key, const std::string& path) {
    const json* v = get_field(obj, key);
    if (!v) throw SchemaViolation(path + "/" + key, "required field absent");
    return *v;
}

std::string require_string(const json& obj, const std::string& key, const std::string& path) {
    const json& v = require_field(obj, key, path);
    if (!v.is_string()) throw SchemaViolation(path + "/" + key, "expected string");
    return v.get<std::string>();
}

double require_number(const json& obj, const std::string& key, const std::string& path) {
    const json& v = require_field(obj, key, path);
    if (!v.is_number()) throw SchemaViolation(path + "/" + key, "expected number");
    return v.get<double>();
}

int require_positive_int(const json& obj, const std::string& key, const std::string& path) {
    const json& v = require_field(obj, key, path);
    if (!v.is_number()) throw SchemaViolation(path + "/" + key, "expected positive integer");
    double d = v.get<double>();
    if (d <= 0 || d != std::floor(d))
        throw SchemaViolation(path + "/" + key, "expected positive integer");
    return static_cast<int>(d);
}

int require_int(const json& obj, const std::string& key, const std::string& path) {
    const json& v = require_field(obj, key, path);
    if (!v.is_number()) throw SchemaViolation(path + "/" + key, "expected integer");
    double d = v.get<double>();
    if (d != std::floor(d)) throw SchemaViolation(path + "/" + key, "expected integer");
    return static_cast<int>(d);
}

std::string optional_string(const json& obj, const std::string& key, const std::string& path,
                            const std::string& def = {}) {
    const json* v = get_field(obj, key);
    if (!v) return def;
    if (!v->is_string()) throw SchemaViolation(path + "/" + key, "expected string");
    return v->get<std::string>();
}

std::vector<std::string> optional_string_list(const json& obj, const std::string& key,
                                              const std::string& path) {
    std::vector<std::string> out;
    const json* v = get_field(obj, key);
    if (!v) return out;
    if (!v->is_array()) throw SchemaViolation(path + "/" + key, "expected array");
    for (std::size_t i = 0; i < v->size(); ++i) {
        const json& e = (*v)[i];
        if (!e.is_string()) throw SchemaViolation(idx_path(path + "/" + key, i), "expected string");
        out.push_back(e.get<std::string>());
    }
    return out;
}

// Collects keys of `obj` that are not in `known` into an extras object.
json collect_extras(const json& obj, std::initializer_list<const char*> known) {
    json extra = json::object();
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool is_known = false;
        for (const char* k : known)
            if (it.key() == k) { is_known = true; break; }
        if (!is_known) extra[it.key()] = it.value();
    }
    return extra;
}

void merge_extras(json& obj, const json& extra) {
    for (auto it = extra.begin(); it != extra.end(); ++it) obj[it.key()] = it.value();
}

VideoMetadata parse_metadata(const json& root) {
    const json& meta = require_field(root, "video_metadata", "");
    if (!meta.is_object()) throw SchemaViolation("/video_metadata", "expected object");
    const json* ar = get_field(meta, "aspect_ratio");
    if (!ar) throw SchemaViolation("/video_metadata/aspect_ratio", "required field absent");
    if (!ar->is_object()) throw SchemaViolation("/video_metadata/aspect_ratio", "expected object");

    VideoMetadata m;
    const std::string p = "/video_metadata/aspect_ratio";
    m.width = require_positive_int(*ar, "width", p);
    m.height = require_positive_int(*ar, "height", p);
    m.aspect_ratio_label = require_string(*ar, "aspect_ratio", p);
    m.ratio_decimal = require_number(*ar, "ratio_decimal", p);
    m.aspect_extra = collect_extras(*ar, {"width", "height", "aspect_ratio", "ratio_decimal"});
    m.metadata_extra = collect_extras(meta, {"aspect_ratio"});
    return m;
}

CharacterProfile parse_character(const json& c, std::size_t i) {
    const std::string p = idx_path("/characters", i);
    if (!c.is_object()) throw SchemaViolation(p, "expected object");
    CharacterProfile out;
    out.character_id = require_string(c, "character_id", p);

    if (const json* names = get_field(c, "names")) {
        if (!names->is_object()) throw SchemaViolation(p + "/names", "expected object");
        const std::string np = p + "/names";
        out.primary_name = optional_string(*names, "primary_name", np);
        out.primary_source = optional_string(*names, "primary_source", np, "on_screen_label");
        if (out.primary_source != "on_screen_label" && out.primary_source != "dialogue" &&
            out.primary_source != "visual")
            throw SchemaViolation(np + "/primary_source",
                                  "expected one of on_screen_label|dialogue|visual");
        out.aliases = optional_string_list(*names, "aliases", np);
        out.titles = optional_string_list(*names, "titles", np);
        out.roles = optional_string_list(*names, "roles", np);
        out.names_extra =
            collect_extras(*names, {"primary_name", "primary_source", "aliases", "titles", "roles"});
    }

    out.physical_attributes = optional_string(c, "physical_attributes", p);
    out.hair = optional_string(c, "hair", p);
    out.face = optional_string(c, "face", p);

    if (const json* cv = get_field(c, "clothing_variations")) {
        if (!cv->is_array()) throw SchemaViolation(p + "/clothing_variations", "expected array");
        for (std::size_t k = 0; k < cv->size(); ++k) {
            const json& e = (*cv)[k];
            const std::string ep = idx_path(p + "/clothing_variations", k);
            if (!e.is_object()) throw SchemaViolation(ep, "expected object");
            ClothingVariation v;
            v.scene = optional_string(e, "scene", ep);
            v.description = optional_string(e, "description", ep);
            v.extra = collect_extras(e, {"scene", "description"});
            out.clothing_variations.push_back(std::move(v));
        }
    }

    if (const json* fa = get_field(c, "first_appearance")) {
        out.first_appearance_raw = *fa;
        if (fa->is_number()) {
            out.first_appearance_seconds = fa->get<double>();
        } else if (fa->is_string()) {
            std::string s = fa->get<std::string>();
            if (!s.empty() && s.back() == 's') s.pop_back();
            try {
                std::size_t used = 0;
                out.first_appearance_seconds = std::stod(s, &used);
                if (used != s.size()) throw std::invalid_argument("trailing junk");
            } catch (const std::exception&) {
                throw SchemaViolation(p + "/first_appearance", "expected seconds, e.g. \"0.0s\"");
            }
        } else {
            throw SchemaViolation(p + "/first_appearance", "expected number or \"<seconds>s\" string");
        }
    }

    out.role_classification = optional_string(c, "role_classification", p, "supporting");
    if (out.role_classification != "main" && out.role_classification != "supporting" &&
        out.role_classification != "background")
        throw SchemaViolation(p + "/role_classification",
                              "expected one of main|supporting|background");

    out.extra = collect_extras(c, {"character_id", "names", "physical_attributes", "hair", "face",
                                   "clothing_variations", "first_appearance", "role_classification"});
    return out;
}

MajorScene parse_scene(const json& s, std::size_t i) {
    const std::string p = idx_path("/major_scenes", i);
    if (!s.is_object()) throw SchemaViolation(p, "expected object");
    MajorScene out;
    out.scene_id = require_string(s, "scene_id", p);
    out.start_time = require_number(s, "start_time", p);
    out.end_time = require_number(s, "end_time", p);
    if (const json* d = get_field(s, "duration")) {
        if (!d->is_number()) throw SchemaViolation(p + "/duration", "expected number");
        out.duration = d->get<double>();
    } else {
        out.duration = out.end_time - out.start_time;
    }
    out.location_type = optional_string(s, "location_type", p);
    out.setting_description = optional_string(s, "setting_description", p);
    out.lighting_style = optional_string(s, "lighting_style", p);
    out.color_palette = optional_string(s, "color_palette", p);
    out.environment_description = optional_string(s, "environment_description", p);
    out.extra = collect_extras(s, {"scene_id", "start_time", "end_time", "duration", "location_type",
                                   "setting_description", "lighting_style", "color_palette",
                                   "environment_description"});
    return out;
}

Shot parse_shot(const json& s, std::size_t i) {
    const std::string p = idx_path("/shots", i);
    if (!s.is_object()) throw SchemaViolation(p, "expected object");
    Shot out;
    out.shot_id = require_string(s, "shot_id", p);
    out.scene_id = require_string(s, "scene_id", p);

    if (const json* chars = get_field(s, "characters")) {
        if (!chars->is_array()) throw SchemaViolation(p + "/characters", "expected array");
        out.characters = optional_string_list(s, "characters", p);
        out.characters_present = true;
    } else {
        out.characters_present = false;
    }

    out.lighting_setup = optional_string(s, "lighting_setup", p);
    out.color_grading = optional_string(s, "color_grading", p);
    out.composition = optional_string(s, "composition", p);
    out.mood_atmosphere = optional_string(s, "mood_atmosphere", p);
    out.shot_size = optional_string(s, "shot_size", p);
    out.camera_angle = optional_string(s, "camera_angle", p);
    out.camera_height = optional_string(s, "camera_height", p);
    out.horizontal_angle = optional_string(s, "horizontal_angle", p);
    out.focal_length = optional_string(s, "focal_length", p);
    out.depth_of_field = optional_string(s, "depth_of_field", p);
    out.tech_device = optional_string(s, "tech_device", p);
    out.camera_movement = optional_string(s, "camera_movement", p);

    if (const json* sm = get_field(s, "subject_movement")) {
        if (!sm->is_object()) throw SchemaViolation(p + "/subject_movement", "expected object");
        const std::string sp = p + "/subject_movement";
        out.subject_movement.action = optional_string(*sm, "action", sp);
        if (const json* d = get_field(*sm, "dialogue")) {
            if (!d->is_object()) throw SchemaViolation(sp + "/dialogue", "expected object");
            Dialogue dl;
            dl.timestamp = optional_string(*d, "timestamp", sp + "/dialogue");
            dl.text = optional_string(*d, "text", sp + "/dialogue");
            dl.extra = collect_extras(*d, {"timestamp", "text"});
            out.subject_movement.dialogue = std::move(dl);
        }
        out.subject_movement.extra = collect_extras(*sm, {"action", "dialogue"});
    }

    out.i2v_prompt = require_string(s, "I2V_Prompt", p);
    out.one_shot_prompt = require_string(s, "Language_to_One_Shot_Prompt", p);

    out.extra = collect_extras(
        s, {"shot_id", "scene_id", "characters", "lighting_setup", "color_grading", "composition",
            "mood_atmosphere", "shot_size", "camera_angle", "camera_height", "horizontal_angle",
            "focal_length", "depth_of_field", "tech_device", "camera_movement", "subject_movement",
            "I2V_Prompt", "Language_to_One_Shot_Prompt"});
    return out;
}

}  // namespace

const MajorScene* Screenplay::find_scene(const std::string& scene_id) const {
    for (const auto& s : major_scenes)
        if (s.scene_id == scene_id) return &s;
    return nullptr;
}

const Shot* Screenplay::find_shot(const std::string& shot_id) const {
    for (const auto& s : shots)
        if (s.shot_id == shot_id) return &s;
    return nullptr;
}

const CharacterProfile* Screenplay::find_character(const std::string& character_id) const {
    for (const auto& c : characters)
        if (c.character_id == character_id) return &c;
    return nullptr;
}

bool is_character_id(const std::string& id) {
    constexpr const char* prefix = "@character_";
    const std::size_t n = std::string(prefix).size();
    if (id.size() <= n || id.compare(0, n, prefix) != 0) return false;
    return std::all_of(id.begin() + n, id.end(),
                       [](unsigned char c) { return std::isdigit(c) != 0; });
}

std::optional<double> parse_dialogue_timestamp(const std::string& text) {
    int h = 0, m = 0, s = 0, ms = 0;
    char dot = 0;
    if (std::sscanf(text.c_str(), "%d:%d:%d%c%3d", &h, &m, &s, &dot, &ms) == 5 && dot == '.') {
        if (h < 0 || m < 0 || m > 59 || s < 0 || s > 59 || ms < 0) return std::nullopt;
        return h * 3600.0 + m * 60.0 + s + ms / 1000.0;
    }
    if (std::sscanf(text.c_str(), "%d:%d:%d", &h, &m, &s) == 3 && text.find('.') == std::string::npos) {
        if (h < 0 || m < 0 || m > 59 || s < 0 || s > 59) return std::nullopt;
        return h * 3600.0 + m * 60.0 + s;
    }
    return std::nullopt;
}

Screenplay parse_screenplay(const std::string& document) {
    json doc;
    try {
        doc = json::parse(document);
    } catch (const json::parse_error& e) {
        throw MalformedJson(e.what());
    }
    return parse_screenplay(doc);
}

Screenplay parse_screenplay(const json& doc) {
    if (!doc.is_object()) throw SchemaViolation("", "expected top-level object");

    Screenplay sp;
    // video_metadata is checked first so an empty document reports it as the
    // first offending field.
    sp.metadata = parse_metadata(doc);
    sp.video_file = require_string(doc, "video_file", "");
    sp.metadata.total_scenes = require_int(doc, "total_scenes", "");

    const json& chars = require_field(doc, "characters", "");
    if (!chars.is_array()) throw SchemaViolation("/characters", "expected array");
    for (std::size_t i = 0; i < chars.size(); ++i)
        sp.characters.push_back(parse_character(chars[i], i));

    const json& scenes = require_field(doc, "major_scenes", "");
    if (!scenes.is_array()) throw SchemaViolation("/major_scenes", "expected array");
    for (std::size_t i = 0; i < scenes.size(); ++i)
        sp.major_scenes.push_back(parse_scene(scenes[i], i));
    // Normalize scene order; stable so equal start times keep document order.
    std::stable_sort(sp.major_scenes.begin(), sp.major_scenes.end(),
                     [](const MajorScene& a, const MajorScene& b) { return a.start_time < b.start_time; });

    const json& shots = require_field(doc, "shots", "");
    if (!shots.is_array()) throw SchemaViolation("/shots", "expected array");
    for (std::size_t i = 0; i < shots.size(); ++i)
        sp.shots.push_back(parse_shot(shots[i], i));

    sp.extra = collect_extras(
        doc, {"video_file", "video_metadata", "total_scenes", "characters", "major_scenes", "shots"});
    return sp;
}

ValidationReport validate_screenplay(const Screenplay& sp) {
    ValidationReport report;
    const VideoMetadata& m = sp.metadata;

    if (std::abs(m.ratio_decimal - m.ratio()) > kRatioTolerance)
        report.add_error("/video_metadata/aspect_ratio/ratio_decimal", "ratio consistency",
                         "ratio_decimal differs from width/height by more than 1e-4");

    {
        double a = 0, b = 0;
        if (std::sscanf(m.aspect_ratio_label.c_str(), "%lf:%lf", &a, &b) == 2 && b > 0) {
            if (std::abs(a / b - m.ratio()) > kLabelTolerance)
                report.add_error("/video_metadata/aspect_ratio/aspect_ratio", "label consistency",
                                 "aspect_ratio label disagrees with width/height");
        }
    }

    if (m.total_scenes != static_cast<int>(sp.major_scenes.size()))
        report.add_warning("/total_scenes", "scene count",
                           "total_scenes says " + std::to_string(m.total_scenes) + " but " +
                               std::to_string(sp.major_scenes.size()) + " scenes present");

    std::set<std::string> char_ids;
    for (std::size_t i = 0; i < sp.characters.size(); ++i) {
        const auto& c = sp.characters[i];
        const std::string p = idx_path("/characters", i);
        if (!is_character_id(c.character_id))
            report.add_error(p + "/character_id", "character id pattern",
                             "expected \"@character_<digits>\", got \"" + c.character_id + "\"");
        if (!char_ids.insert(c.character_id).second)
            report.add_error(p + "/character_id", "character id uniqueness",
                             "duplicate character_id " + c.character_id);
        if (c.first_appearance_seconds < 0)
            report.add_error(p + "/first_appearance", "first appearance range",
                             "first_appearance must be >= 0");
    }

    std::set<std::string> scene_ids;
    for (std::size_t i = 0; i < sp.major_scenes.size(); ++i) {
        const auto& s = sp.major_scenes[i];
        const std::string p = idx_path("/major_scenes", i);
        if (!scene_ids.insert(s.scene_id).second)
            report.add_error(p + "/scene_id", "scene id uniqueness",
                             "duplicate scene_id " + s.scene_id);
        if (!(s.start_time < s.end_time))
            report.add_error(p, "scene time ordering", "start_time must be < end_time");
        if (std::abs(s.duration - (s.end_time - s.start_time)) > kDurationTolerance)
            report.add_error(p + "/duration", "scene duration",
                             "duration differs from end_time - start_time by more than 1e-3 s");
        if (i > 0) {
            const auto& prev = sp.major_scenes[i - 1];
            if (prev.end_time > s.start_time + 1e-9)
                report.add_error(p, "scene overlap",
                                 prev.scene_id + " overlaps " + s.scene_id);
        }
        if (s.environment_description.find("@character_") != std::string::npos)
            report.add_error(p + "/environment_description", "environment-only rule",
                             "environment_description must not mention character ids");
    }

    std::set<std::string> shot_ids;
    for (std::size_t i = 0; i < sp.shots.size(); ++i) {
        const auto& s = sp.shots[i];
        const std::string p = idx_path("/shots", i);
        if (!shot_ids.insert(s.shot_id).second)
            report.add_error(p + "/shot_id", "shot id uniqueness", "duplicate shot_id " + s.shot_id);
        if (!sp.find_scene(s.scene_id))
            report.add_error(p + "/scene_id", "dangling scene reference",
                             "shot " + s.shot_id + " references unknown scene " + s.scene_id);
        if (!s.characters_present)
            report.add_warning(p + "/characters", "missing characters field",
                               "shot " + s.shot_id + " has no characters field; treated as empty");
        for (std::size_t k = 0; k < s.characters.size(); ++k) {
            if (!sp.find_character(s.characters[k]))
                report.add_error(idx_path(p + "/characters", k), "dangling character reference",
                                 "shot " + s.shot_id + " references unknown character " +
                                     s.characters[k]);
        }
        if (s.i2v_prompt.empty())
            report.add_error(p + "/I2V_Prompt", "empty prompt", "I2V_Prompt must be non-empty");
        if (s.one_shot_prompt.empty())
            report.add_error(p + "/Language_to_One_Shot_Prompt", "empty prompt",
                             "Language_to_One_Shot_Prompt must be non-empty");
        if (s.subject_movement.dialogue) {
            auto secs = parse_dialogue_timestamp(s.subject_movement.dialogue->timestamp);
            if (!secs || *secs < 0)
                report.add_error(p + "/subject_movement/dialogue/timestamp", "dialogue timestamp",
                                 "expected non-negative \"HH:MM:SS.mmm\", got \"" +
                                     s.subject_movement.dialogue->timestamp + "\"");
        }
    }

    return report;
}

json screenplay_to_json(const Screenplay& sp) {
    json doc = json::object();
    doc["video_file"] = sp.video_file;

    json ar = json::object();
    ar["width"] = sp.metadata.width;
    ar["height"] = sp.metadata.height;
    ar["aspect_ratio"] = sp.metadata.aspect_ratio_label;
    ar["ratio_decimal"] = sp.metadata.ratio_decimal;
    merge_extras(ar, sp.metadata.aspect_extra);
    json meta = json::object();
    meta["aspect_ratio"] = std::move(ar);
    merge_extras(meta, sp.metadata.metadata_extra);
    doc["video_metadata"] = std::move(meta);
    doc["total_scenes"] = sp.metadata.total_scenes;

    json chars = json::array();
    for (const auto& c : sp.characters) {
        json names = json::object();
        names["primary_name"] = c.primary_name;
        names["primary_source"] = c.primary_source;
        names["aliases"] = c.aliases;
        names["titles"] = c.titles;
        names["roles"] = c.roles;
        merge_extras(names, c.names_extra);

        json jc = json::object();
        jc["character_id"] = c.character_id;
        jc["names"] = std::move(names);
        jc["physical_attributes"] = c.physical_attributes;
        jc["hair"] = c.hair;
        jc["face"] = c.face;
        json cvs = json::array();
        for (const auto& v : c.clothing_variations) {
            json jv = json::object();
            jv["scene"] = v.scene;
            jv["description"] = v.description;
            merge_extras(jv, v.extra);
            cvs.push_back(std::move(jv));
        }
        jc["clothing_variations"] = std::move(cvs);
        jc["first_appearance"] = c.first_appearance_raw;
        jc["role_classification"] = c.role_classification;
        merge_extras(jc, c.extra);
        chars.push_back(std::move(jc));
    }
    doc["characters"] = std::move(chars);

    json scenes = json::array();
    for (const auto& s : sp.major_scenes) {
        json js = json::object();
        js["scene_id"] = s.scene_id;
        js["start_time"] = s.start_time;
        js["end_time"] = s.end_time;
        js["duration"] = s.duration;
        js["location_type"] = s.location_type;
        js["setting_description"] = s.setting_description;
        js["lighting_style"] = s.lighting_style;
        js["color_palette"] = s.color_palette;
        js["environment_description"] = s.environment_description;
        merge_extras(js, s.extra);
        scenes.push_back(std::move(js));
    }
    doc["major_scenes"] = std::move(scenes);

    json shots = json::array();
    for (const auto& s : sp.shots) {
        json js = json::object();
        js["shot_id"] = s.shot_id;
        js["scene_id"] = s.scene_id;
        js["characters"] = s.characters;
        js["lighting_setup"] = s.lighting_setup;
        js["color_grading"] = s.color_grading;
        js["composition"] = s.composition;
        js["mood_atmosphere"] = s.mood_atmosphere;
        js["shot_size"] = s.shot_size;
        js["camera_angle"] = s.camera_angle;
        js["camera_height"] = s.camera_height;
        js["horizontal_angle"] = s.horizontal_angle;
        js["focal_length"] = s.focal_length;
        js["depth_of_field"] = s.depth_of_field;
        js["tech_device"] = s.tech_device;
        js["camera_movement"] = s.camera_movement;
        json sm = json::object();
        sm["action"] = s.subject_movement.action;
        if (s.subject_movement.dialogue) {
            json d = json::object();
            d["timestamp"] = s.subject_movement.dialogue->timestamp;
            d["text"] = s.subject_movement.dialogue->text;
            merge_extras(d, s.subject_movement.dialogue->extra);
            sm["dialogue"] = std::move(d);
        }
        merge_extras(sm, s.subject_movement.extra);
        js["subject_movement"] = std::move(sm);
        js["I2V_Prompt"] = s.i2v_prompt;
        js["Language_to_One_Shot_Prompt"] = s.one_shot_prompt;
        merge_extras(js, s.extra);
        shots.push_back(std::move(js));
    }
    doc["shots"] = std::move(shots);

    merge_extras(doc, sp.extra);
    return doc;
}

std::string serialize_screenplay(const Screenplay& sp) {
    return screenplay_to_json(sp).dump(2);
}

bool structurally_equal(const Screenplay& a, const Screenplay& b) {
    return screenplay_to_json(a) == screenplay_to_json(b);
}

std::vector<const Shot*> shots_of_scene(const Screenplay& sp, const std::string& scene_id) {
    if (!sp.find_scene(scene_id)) throw UnknownScene(scene_id);
    std::vector<const Shot*> out;
    for (const auto& s : sp.shots)
        if (s.scene_id == scene_id) out.push_back(&s);
    return out;
}

std::set<std::string> characters_in_shot(const Screenplay& sp, const std::string& shot_id) {
    const Shot* s = sp.find_shot(shot_id);
    if (!s) throw UnknownShot(shot_id);
    return s->character_set();
}

}  // namespace cine
