#include "cine/visual_memory.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "cine/errors.hpp"

namespace cine {

namespace {

constexpr double kAnchorRatioTolerance = 1e-3;

std::string strip_at(const std::string& id) {
    return (!id.empty() && id.front() == '@') ? id.substr(1) : id;
}

std::string get_str(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || !it->is_string()) throw InvalidDNA(std::string("missing field ") + key);
    return it->get<std::string>();
}

}  // namespace

bool is_hex_color(const std::string& s) {
    std::size_t start = (!s.empty() && s.front() == '#') ? 1 : 0;
    if (s.size() - start != 6) return false;
    return std::all_of(s.begin() + start, s.end(),
                       [](unsigned char c) { return std::isxdigit(c) != 0; });
}

bool WardrobeDNA::hex_valid() const { return is_hex_color(color.hex); }

void WardrobeDNA::validate() const {
    if (!hex_valid()) throw InvalidDNA("hex color must match #RRGGBB, got \"" + color.hex + "\"");
}

json WardrobeDNA::to_json() const {
    json j = json::object();
    j["color"] = {{"pantone_tcx", color.pantone_tcx}, {"hex", color.hex}};
    j["fabric"] = {{"material", fabric.material}, {"weave", fabric.weave},
                   {"weight", fabric.weight},     {"opacity", fabric.opacity},
                   {"finish", fabric.finish},     {"stretch", fabric.stretch},
                   {"texture", fabric.texture},   {"drape", fabric.drape}};
    j["cut_fit"] = {{"top", cut_fit.top}, {"bottom", cut_fit.bottom}};
    j["details"] = details;
    j["pattern"] = {{"type", pattern.type},
                    {"size", pattern.size},
                    {"arrangement", pattern.arrangement},
                    {"direction", pattern.direction},
                    {"density", pattern.density}};
    j["accessories"] = {{"footwear", accessories.footwear},
                        {"jewelry", accessories.jewelry},
                        {"bags", accessories.bags}};
    j["styling"] = {{"layering", styling.layering},
                    {"tucking", styling.tucking},
                    {"sleeve_state", styling.sleeve_state},
                    {"overall_style", styling.overall_style}};
    return j;
}

WardrobeDNA WardrobeDNA::from_json(const json& j) {
    static const char* dims[] = {"color",   "fabric",      "cut_fit", "details",
                                 "pattern", "accessories", "styling"};
    for (const char* d : dims)
        if (!j.contains(d)) throw InvalidDNA(std::string("missing dimension ") + d);

    WardrobeDNA dna;
    dna.color.pantone_tcx = get_str(j["color"], "pantone_tcx");
    dna.color.hex = get_str(j["color"], "hex");
    const json& f = j["fabric"];
    dna.fabric = {get_str(f, "material"), get_str(f, "weave"),   get_str(f, "weight"),
                  get_str(f, "opacity"),  get_str(f, "finish"),  get_str(f, "stretch"),
                  get_str(f, "texture"),  get_str(f, "drape")};
    dna.cut_fit = {get_str(j["cut_fit"], "top"), get_str(j["cut_fit"], "bottom")};
    if (!j["details"].is_array()) throw InvalidDNA("details must be an array");
    for (const auto& d : j["details"]) dna.details.push_back(d.get<std::string>());
    const json& p = j["pattern"];
    dna.pattern = {get_str(p, "type"), get_str(p, "size"), get_str(p, "arrangement"),
                   get_str(p, "direction"), get_str(p, "density")};
    const json& a = j["accessories"];
    dna.accessories = {get_str(a, "footwear"), get_str(a, "jewelry"), get_str(a, "bags")};
    const json& s = j["styling"];
    dna.styling = {get_str(s, "layering"), get_str(s, "tucking"), get_str(s, "sleeve_state"),
                   get_str(s, "overall_style")};
    dna.validate();
    return dna;
}

std::string wardrobe_to_prompt(const WardrobeDNA& dna) {
    std::string out;
    out += "color: Pantone " + dna.color.pantone_tcx + ", hex " + dna.color.hex;
    out += "; fabric: material=" + dna.fabric.material + ", weave=" + dna.fabric.weave +
           ", weight=" + dna.fabric.weight + ", opacity=" + dna.fabric.opacity +
           ", finish=" + dna.fabric.finish + ", stretch=" + dna.fabric.stretch +
           ", texture=" + dna.fabric.texture + ", drape=" + dna.fabric.drape;
    out += "; cut&fit: top=" + dna.cut_fit.top + ", bottom=" + dna.cut_fit.bottom;
    out += "; details: ";
    for (std::size_t i = 0; i < dna.details.size(); ++i) {
        if (i) out += ", ";
        out += dna.details[i];
    }
    out += "; pattern: type=" + dna.pattern.type + ", size=" + dna.pattern.size +
           ", arrangement=" + dna.pattern.arrangement + ", direction=" + dna.pattern.direction +
           ", density=" + dna.pattern.density;
    out += "; accessories: footwear=" + dna.accessories.footwear +
           ", jewelry=" + dna.accessories.jewelry + ", bags=" + dna.accessories.bags;
    out += "; styling: layering=" + dna.styling.layering + ", tucking=" + dna.styling.tucking +
           ", sleeve_state=" + dna.styling.sleeve_state +
           ", overall_style=" + dna.styling.overall_style;
    return out;
}

std::string wardrobe_summary(const WardrobeDNA& dna) {
    return dna.color.hex + " (" + dna.color.pantone_tcx + "), " + dna.cut_fit.top + " / " +
           dna.cut_fit.bottom + ", " + dna.styling.overall_style;
}

std::string environment_image_path(const std::string& scene_id) {
    return "reference_images/" + scene_id + "_environment.png";
}

std::string clothing_image_path(const std::string& scene_id, const std::string& character_id) {
    return "reference_images/" + scene_id + "_" + strip_at(character_id) + "_clothing.png";
}

std::string portrait_image_path(const std::string& character_id, int n) {
    return "reference_images/" + strip_at(character_id) + "_portrait_" + std::to_string(n) + ".png";
}

std::string ReferenceRegistry::register_environment(const std::string& scene_id,
                                                    const ImageHandle& image,
                                                    const std::string& style_label) {
    if (!sp_->find_scene(scene_id)) throw UnknownScene(scene_id);
    if (image.width <= 0 || image.height <= 0) throw UnreadableImage(image.path);
    if (std::abs(image.ratio() - sp_->metadata.ratio()) > kAnchorRatioTolerance)
        throw AspectRatioMismatch(image.path + " is " + std::to_string(image.width) + "x" +
                                  std::to_string(image.height) + ", screenplay is " +
                                  sp_->metadata.aspect_ratio_label);

    const std::string id = "env:" + scene_id + ":" + style_label;
    for (auto& e : environments_) {
        if (e.scene_id == scene_id && e.style_label == style_label) {
            e.image = image;
            return e.id;
        }
    }
    environments_.push_back({id, scene_id, image, style_label});
    return id;
}

std::string ReferenceRegistry::register_portrait(const std::string& character_id,
                                                 const ImageHandle& image,
                                                 const std::string& target_name) {
    if (!sp_->find_character(character_id)) throw UnknownCharacter(character_id);
    if (image.width <= 0 || image.height <= 0) throw UnreadableImage(image.path);
    int n = 1;
    for (const auto& p : portraits_)
        if (p.character_id == character_id) ++n;
    const std::string id = "portrait:" + character_id + ":" + std::to_string(n);
    portraits_.push_back({id, character_id, image, target_name});
    return id;
}

std::string ReferenceRegistry::register_clothing(const std::string& character_id,
                                                 const std::string& scene_id,
                                                 const WardrobeDNA& dna, const ImageHandle& image) {
    if (!sp_->find_character(character_id)) throw UnknownCharacter(character_id);
    if (!sp_->find_scene(scene_id)) throw UnknownScene(scene_id);
    dna.validate();
    if (image.width <= 0 || image.height <= 0) throw UnreadableImage(image.path);

    const std::string id = "clothing:" + character_id + ":" + scene_id;
    for (auto& c : clothing_) {
        if (c.character_id == character_id && c.scene_id == scene_id) {
            c.dna = dna;
            c.image = image;
            return c.id;
        }
    }
    clothing_.push_back({id, character_id, scene_id, dna, image});
    return id;
}

const EnvironmentRef* ReferenceRegistry::environment_for(const std::string& scene_id) const {
    const EnvironmentRef* found = nullptr;
    for (const auto& e : environments_)
        if (e.scene_id == scene_id) found = &e;  // last registration wins
    return found;
}

std::vector<const PortraitRef*> ReferenceRegistry::portraits_of(
    const std::string& character_id) const {
    std::vector<const PortraitRef*> out;
    for (const auto& p : portraits_)
        if (p.character_id == character_id) out.push_back(&p);
    return out;
}

const ClothingRef* ReferenceRegistry::clothing_for(const std::string& character_id,
                                                   const std::string& scene_id) const {
    for (const auto& c : clothing_)
        if (c.character_id == character_id && c.scene_id == scene_id) return &c;
    return nullptr;
}

json ReferenceRegistry::index_json() const {
    json j = json::object();
    j["copy_mode"] = copy_mode_;
    json envs = json::array();
    for (const auto& e : environments_)
        envs.push_back({{"id", e.id},
                        {"scene_id", e.scene_id},
                        {"style_label", e.style_label},
                        {"path", e.image.path},
                        {"width", e.image.width},
                        {"height", e.image.height}});
    j["environments"] = std::move(envs);
    json pors = json::array();
    for (const auto& p : portraits_)
        pors.push_back({{"id", p.id},
                        {"character_id", p.character_id},
                        {"target_name", p.target_name},
                        {"path", p.image.path},
                        {"width", p.image.width},
                        {"height", p.image.height}});
    j["portraits"] = std::move(pors);
    json clos = json::array();
    for (const auto& c : clothing_)
        clos.push_back({{"id", c.id},
                        {"character_id", c.character_id},
                        {"scene_id", c.scene_id},
                        {"dna", c.dna.to_json()},
                        {"path", c.image.path},
                        {"width", c.image.width},
                        {"height", c.image.height}});
    j["clothing"] = std::move(clos);
    return j;
}

void ReferenceRegistry::save(const std::string& dir) const {
    std::filesystem::create_directories(dir);
    std::ofstream out(dir + "/index.json");
    if (!out) throw IoFailure("cannot write " + dir + "/index.json");
    out << index_json().dump(2) << "\n";
}

ReferenceRegistry ReferenceRegistry::load(const Screenplay& sp, const std::string& dir) {
    std::ifstream in(dir + "/index.json");
    if (!in) throw IoFailure("cannot read " + dir + "/index.json");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw MalformedJson(e.what());
    }
    ReferenceRegistry reg(sp, j.value("copy_mode", false));
    for (const auto& e : j.value("environments", json::array()))
        reg.register_environment(e.at("scene_id"),
                                 {e.at("path"), e.at("width"), e.at("height")},
                                 e.value("style_label", ""));
    for (const auto& p : j.value("portraits", json::array()))
        reg.register_portrait(p.at("character_id"),
                              {p.at("path"), p.at("width"), p.at("height")},
                              p.value("target_name", ""));
    for (const auto& c : j.value("clothing", json::array()))
        reg.register_clothing(c.at("character_id"), c.at("scene_id"),
                              WardrobeDNA::from_json(c.at("dna")),
                              {c.at("path"), c.at("width"), c.at("height")});
    return reg;
}

int role_rank(const std::string& role_classification) {
    if (role_classification == "main") return 0;
    if (role_classification == "supporting") return 1;
    if (role_classification == "background") return 2;
    return 1;
}

json MemoryPackage::to_json() const {
    json j = json::object();
    j["shot_id"] = shot_id;
    j["major_scene"] = major_scene;
    j["characters"] = characters;
    j["environment_ref"] = environment_ref ? json(*environment_ref) : json(nullptr);
    j["clothing_refs"] = clothing_refs;
    j["character_refs"] = character_refs;
    j["visual_dna"] = {{"lighting", visual_dna.lighting},
                       {"color", visual_dna.color},
                       {"mood", visual_dna.mood}};
    j["narrative"] = {{"action", narrative.action},
                      {"camera_movement", narrative.camera_movement},
                      {"language_prompt", narrative.language_prompt},
                      {"i2v_prompt", narrative.i2v_prompt}};
    json mappings = json::object();
    for (const auto& [id, m] : character_mappings)
        mappings[id] = {{"target_name", m.target_name},
                        {"clothing", m.clothing},
                        {"portraits", m.portraits}};
    j["character_mappings"] = std::move(mappings);
    j["style_prompt"] = style_prompt;
    j["generation_feedback"] = generation_feedback;
    j["language_base"] = language_base;
    j["i2v_base"] = i2v_base;
    j["corrections"] = corrections;
    return j;
}

MemoryPackage MemoryPackage::from_json(const json& j) {
    MemoryPackage p;
    p.shot_id = j.at("shot_id");
    p.major_scene = j.at("major_scene");
    p.characters = j.at("characters").get<std::vector<std::string>>();
    if (!j.at("environment_ref").is_null()) p.environment_ref = j.at("environment_ref");
    p.clothing_refs = j.at("clothing_refs").get<std::vector<std::string>>();
    p.character_refs = j.at("character_refs").get<std::vector<std::string>>();
    const json& vd = j.at("visual_dna");
    p.visual_dna = {vd.value("lighting", ""), vd.value("color", ""), vd.value("mood", "")};
    const json& n = j.at("narrative");
    p.narrative = {n.value("action", ""), n.value("camera_movement", ""),
                   n.value("language_prompt", ""), n.value("i2v_prompt", "")};
    for (auto it = j.at("character_mappings").begin(); it != j.at("character_mappings").end(); ++it) {
        CharacterMapping m;
        m.target_name = it.value().value("target_name", "");
        m.clothing = it.value().value("clothing", "");
        m.portraits = it.value().value("portraits", std::vector<std::string>{});
        p.character_mappings[it.key()] = std::move(m);
    }
    p.style_prompt = j.value("style_prompt", "");
    p.generation_feedback = j.value("generation_feedback", std::vector<std::string>{});
    p.language_base = j.value("language_base", p.narrative.language_prompt);
    p.i2v_base = j.value("i2v_base", p.narrative.i2v_prompt);
    p.corrections = j.value("corrections", std::vector<std::string>{});
    return p;
}

MemoryPackage allocate(const Screenplay& sp, const std::string& shot_id,
                       const ReferenceRegistry& registry, const std::string& style_prompt,
                       ValidationReport* findings) {
    const Shot* shot = sp.find_shot(shot_id);
    if (!shot) throw UnknownShot(shot_id);
    if (!sp.find_scene(shot->scene_id)) throw UnknownScene(shot->scene_id);

    MemoryPackage pkg;
    pkg.shot_id = shot->shot_id;
    pkg.major_scene = shot->scene_id;
    pkg.style_prompt = style_prompt;

    // Deduplicate while keeping first-occurrence order.
    for (const auto& c : shot->characters)
        if (std::find(pkg.characters.begin(), pkg.characters.end(), c) == pkg.characters.end())
            pkg.characters.push_back(c);

    const EnvironmentRef* env = registry.environment_for(shot->scene_id);
    if (!env) throw MissingAnchor("environment", shot->scene_id);
    pkg.environment_ref = env->image.path;

    // Portrait candidates ordered by role rank then lexicographic id; each
    // character's portraits keep registration order. Capped at kPortraitCap.
    std::vector<std::string> ordered_chars = pkg.characters;
    std::sort(ordered_chars.begin(), ordered_chars.end(),
              [&](const std::string& a, const std::string& b) {
                  const CharacterProfile* ca = sp.find_character(a);
                  const CharacterProfile* cb = sp.find_character(b);
                  int ra = ca ? role_rank(ca->role_classification) : 1;
                  int rb = cb ? role_rank(cb->role_classification) : 1;
                  if (ra != rb) return ra < rb;
                  return a < b;
              });

    for (const auto& cid : ordered_chars) {
        const CharacterProfile* profile = sp.find_character(cid);
        if (!profile) throw UnknownCharacter(cid);
        auto portraits = registry.portraits_of(cid);

        CharacterMapping mapping;
        if (portraits.empty()) {
            // Target references are mandatory for main characters only; the
            // remaining roles keep their source look when no portrait exists.
            if (profile->role_classification == "main") throw MissingAnchor("portrait", cid);
            if (findings)
                findings->add_warning("/shots/" + shot_id, "missing portrait anchor",
                                      "no portrait registered for " + cid);
        }
        for (const auto* p : portraits) {
            mapping.portraits.push_back(p->image.path);
            if (mapping.target_name.empty()) mapping.target_name = p->target_name;
            if (pkg.character_refs.size() < kPortraitCap)
                pkg.character_refs.push_back(p->image.path);
        }
        pkg.character_mappings[cid] = std::move(mapping);
    }

    // Clothing anchors; in copy mode the portraits already carry the designs.
    if (!registry.copy_mode()) {
        for (const auto& cid : pkg.characters) {
            const ClothingRef* c = registry.clothing_for(cid, shot->scene_id);
            if (c) {
                pkg.clothing_refs.push_back(c->image.path);
                pkg.character_mappings[cid].clothing = wardrobe_summary(c->dna);
            } else if (findings) {
                findings->add_warning("/shots/" + shot_id, "missing clothing anchor",
                                      "no clothing ref for " + cid + " in " + shot->scene_id);
            }
        }
    }

    pkg.visual_dna = {shot->lighting_setup, shot->color_grading, shot->mood_atmosphere};
    pkg.narrative = {shot->subject_movement.action, shot->camera_movement, shot->one_shot_prompt,
                     shot->i2v_prompt};
    pkg.language_base = shot->one_shot_prompt;
    pkg.i2v_base = shot->i2v_prompt;
    return pkg;
}

std::vector<std::string> order_references(const MemoryPackage& pkg) {
    std::vector<std::string> out;
    if (pkg.environment_ref) out.push_back(*pkg.environment_ref);
    out.insert(out.end(), pkg.clothing_refs.begin(), pkg.clothing_refs.end());
    out.insert(out.end(), pkg.character_refs.begin(), pkg.character_refs.end());
    return out;
}

ValidationReport validate_package(const MemoryPackage& pkg, const Screenplay& sp) {
    ValidationReport report;
    const Shot* shot = sp.find_shot(pkg.shot_id);
    if (!shot) {
        report.add_error("/shot_id", "unknown shot", "package shot " + pkg.shot_id + " not in screenplay");
        return report;
    }

    std::set<std::string> have(pkg.characters.begin(), pkg.characters.end());
    if (have != shot->character_set())
        report.add_error("/characters", "non-minimal context",
                         "package characters differ from the shot's character set");

    if (pkg.character_refs.size() > kPortraitCap)
        report.add_error("/character_refs", "portrait cap",
                         "package carries " + std::to_string(pkg.character_refs.size()) +
                             " portraits, cap is " + std::to_string(kPortraitCap));

    if (pkg.major_scene != shot->scene_id)
        report.add_error("/major_scene", "scene mismatch",
                         "package scene " + pkg.major_scene + " but shot belongs to " + shot->scene_id);

    if (pkg.environment_ref) {
        // Conventional names embed the owning scene; flag refs naming another scene.
        const std::string& path = *pkg.environment_ref;
        auto pos = path.rfind("_environment.png");
        if (pos != std::string::npos) {
            auto slash = path.rfind('/', pos);
            std::string scene = path.substr(slash == std::string::npos ? 0 : slash + 1,
                                            pos - (slash == std::string::npos ? 0 : slash + 1));
            if (scene != pkg.major_scene)
                report.add_error("/environment_ref", "environment scene mismatch",
                                 "environment ref belongs to " + scene + ", package scene is " +
                                     pkg.major_scene);
        }
    }
    return report;
}

}  // namespace cine
