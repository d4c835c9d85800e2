#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cine/image.hpp"
#include "cine/screenplay.hpp"
#include "cine/validation.hpp"

namespace cine {

// 7-dimension clothing specification. The struct is the structural guarantee
// that all seven dimensions are present; hex validity is checked separately.
struct WardrobeDNA {
    struct Color {
        std::string pantone_tcx;  // e.g. "19-4052 TCX"
        std::string hex;          // "#RRGGBB" (leading '#' optional)
    } color;
    struct Fabric {
        std::string material, weave, weight, opacity, finish, stretch, texture, drape;
    } fabric;
    struct CutFit {
        std::string top, bottom;
    } cut_fit;
    std::vector<std::string> details;
    struct Pattern {
        std::string type, size, arrangement, direction, density;
    } pattern;
    struct Accessories {
        std::string footwear, jewelry, bags;
    } accessories;
    struct Styling {
        std::string layering, tucking, sleeve_state, overall_style;
    } styling;

    bool hex_valid() const;
    void validate() const;  // throws InvalidDNA

    json to_json() const;
    static WardrobeDNA from_json(const json& j);  // throws InvalidDNA on shape/hex problems
};

bool is_hex_color(const std::string& s);

// Deterministic prose covering all 7 dimensions in fixed order
// (color, fabric, cut&fit, details, pattern, accessories, styling).
std::string wardrobe_to_prompt(const WardrobeDNA& dna);
// One-line digest used in character mappings.
std::string wardrobe_summary(const WardrobeDNA& dna);

struct EnvironmentRef {
    std::string id;
    std::string scene_id;
    ImageHandle image;
    std::string style_label;
};

struct PortraitRef {
    std::string id;
    std::string character_id;
    ImageHandle image;
    std::string target_name;  // the replacement identity
};

struct ClothingRef {
    std::string id;
    std::string character_id;
    std::string scene_id;
    WardrobeDNA dna;
    ImageHandle image;
};

// Canonical on-disk names under the registry directory.
std::string environment_image_path(const std::string& scene_id);
std::string clothing_image_path(const std::string& scene_id, const std::string& character_id);
std::string portrait_image_path(const std::string& character_id, int n);

// The visual anchor store. Environment refs are unique per (scene, style),
// clothing refs per (character, scene); portraits accumulate in registration
// order. Reads are safe from any thread; registrations must be serialized by
// the caller (single-writer contract).
class ReferenceRegistry {
public:
    explicit ReferenceRegistry(const Screenplay& sp, bool copy_mode = false)
        : sp_(&sp), copy_mode_(copy_mode) {}

    bool copy_mode() const { return copy_mode_; }
    void set_copy_mode(bool v) { copy_mode_ = v; }

    // Throw UnknownScene / UnknownCharacter / AspectRatioMismatch /
    // UnreadableImage / InvalidDNA; return a stable reference id.
    std::string register_environment(const std::string& scene_id, const ImageHandle& image,
                                     const std::string& style_label);
    std::string register_portrait(const std::string& character_id, const ImageHandle& image,
                                  const std::string& target_name);
    std::string register_clothing(const std::string& character_id, const std::string& scene_id,
                                  const WardrobeDNA& dna, const ImageHandle& image);

    // Last registered environment for the scene (any style); null when none.
    const EnvironmentRef* environment_for(const std::string& scene_id) const;
    std::vector<const PortraitRef*> portraits_of(const std::string& character_id) const;
    const ClothingRef* clothing_for(const std::string& character_id,
                                    const std::string& scene_id) const;

    const std::vector<EnvironmentRef>& environments() const { return environments_; }
    const std::vector<PortraitRef>& portraits() const { return portraits_; }
    const std::vector<ClothingRef>& clothing() const { return clothing_; }

    // index.json persistence. Paths inside the index stay exactly as
    // registered (run-directory relative by convention).
    void save(const std::string& dir) const;
    static ReferenceRegistry load(const Screenplay& sp, const std::string& dir);

    json index_json() const;

private:
    const Screenplay* sp_;
    bool copy_mode_ = false;
    std::vector<EnvironmentRef> environments_;
    std::vector<PortraitRef> portraits_;
    std::vector<ClothingRef> clothing_;
};

struct CharacterMapping {
    std::string target_name;
    std::string clothing;                // one-line wardrobe digest
    std::vector<std::string> portraits;  // this character's portrait paths, registration order
};

struct PackageVisualDna {
    std::string lighting;
    std::string color;
    std::string mood;
};

struct PackageNarrative {
    std::string action;
    std::string camera_movement;
    std::string language_prompt;
    std::string i2v_prompt;
};

// Per-shot minimal conditioning context: the shot's semantic instructions
// plus the ordered visual anchors generation must be conditioned on.
struct MemoryPackage {
    std::string shot_id;
    std::string major_scene;
    std::vector<std::string> characters;
    std::optional<std::string> environment_ref;
    std::vector<std::string> clothing_refs;
    std::vector<std::string> character_refs;  // portrait paths, capped at 5
    PackageVisualDna visual_dna;
    PackageNarrative narrative;
    std::map<std::string, CharacterMapping> character_mappings;
    std::string style_prompt;
    std::vector<std::string> generation_feedback;  // append-only

    // Canonical prompt bases and the accumulated correction clauses; the
    // rendered narrative prompts are base + clauses (see verifier refine).
    std::string language_base;
    std::string i2v_base;
    std::vector<std::string> corrections;

    json to_json() const;
    static MemoryPackage from_json(const json& j);
};

inline constexpr std::size_t kPortraitCap = 5;

// Contextual memory allocation: the minimal sufficient package for one shot.
// Character portraits are capped at kPortraitCap; candidates are ordered by
// role rank (main < supporting < background) then lexicographic character id,
// each character's portraits in registration order. Missing environment
// anchors and missing portraits for main characters throw MissingAnchor;
// other gaps are findings. Pure function of its inputs.
MemoryPackage allocate(const Screenplay& sp, const std::string& shot_id,
                       const ReferenceRegistry& registry, const std::string& style_prompt,
                       ValidationReport* findings = nullptr);

// Priority order every backend receives: environment, clothing, portraits.
std::vector<std::string> order_references(const MemoryPackage& pkg);

ValidationReport validate_package(const MemoryPackage& pkg, const Screenplay& sp);

int role_rank(const std::string& role_classification);

}  // namespace cine
