#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cine/validation.hpp"

namespace cine {

using json = nlohmann::json;

// The screenplay is the persistent semantic backbone of a remake run: one
// JSON document carrying video metadata, the character roster, major scenes,
// and per-shot cinematic/narrative records. Values are immutable after parse
// and safe to share across workers.

struct VideoMetadata {
    int width = 0;
    int height = 0;
    std::string aspect_ratio_label;  // e.g. "16:9"
    double ratio_decimal = 0.0;
    int total_scenes = 0;

    json aspect_extra = json::object();    // unknown keys inside "aspect_ratio"
    json metadata_extra = json::object();  // unknown keys inside "video_metadata"

    double ratio() const { return height > 0 ? double(width) / double(height) : 0.0; }
};

struct ClothingVariation {
    std::string scene;
    std::string description;
    json extra = json::object();
};

struct CharacterProfile {
    std::string character_id;  // "@character_NN"
    std::string primary_name;
    std::string primary_source = "on_screen_label";  // on_screen_label | dialogue | visual
    std::vector<std::string> aliases;
    std::vector<std::string> titles;
    std::vector<std::string> roles;
    std::string physical_attributes;
    std::string hair;
    std::string face;
    std::vector<ClothingVariation> clothing_variations;
    double first_appearance_seconds = 0.0;
    json first_appearance_raw = 0.0;  // original value, e.g. "0.0s", kept for round-trip
    std::string role_classification = "supporting";  // main | supporting | background

    json names_extra = json::object();
    json extra = json::object();
};

struct MajorScene {
    std::string scene_id;  // "major_scene_NN"
    double start_time = 0.0;
    double end_time = 0.0;
    double duration = 0.0;
    std::string location_type;
    std::string setting_description;
    std::string lighting_style;
    std::string color_palette;
    std::string environment_description;
    json extra = json::object();
};

struct Dialogue {
    std::string timestamp;  // "HH:MM:SS.mmm"
    std::string text;
    json extra = json::object();
};

struct SubjectMovement {
    std::string action;
    std::optional<Dialogue> dialogue;
    json extra = json::object();
};

struct Shot {
    std::string shot_id;   // numeric string, ordered by screenplay position
    std::string scene_id;  // MajorScene reference
    std::vector<std::string> characters;
    bool characters_present = true;  // false when the field was absent in the document
    std::string lighting_setup;
    std::string color_grading;
    std::string composition;
    std::string mood_atmosphere;
    std::string shot_size;
    std::string camera_angle;
    std::string camera_height;
    std::string horizontal_angle;
    std::string focal_length;
    std::string depth_of_field;
    std::string tech_device;
    std::string camera_movement;
    SubjectMovement subject_movement;
    std::string i2v_prompt;       // "I2V_Prompt"
    std::string one_shot_prompt;  // "Language_to_One_Shot_Prompt"
    json extra = json::object();

    // Declared character set, deduplicated, first occurrence order dropped.
    std::set<std::string> character_set() const {
        return {characters.begin(), characters.end()};
    }
};

struct Screenplay {
    std::string video_file;
    VideoMetadata metadata;
    std::vector<CharacterProfile> characters;
    std::vector<MajorScene> major_scenes;  // normalized to start_time order on parse
    std::vector<Shot> shots;               // presentation order, never re-sorted
    json extra = json::object();

    const MajorScene* find_scene(const std::string& scene_id) const;
    const Shot* find_shot(const std::string& shot_id) const;
    const CharacterProfile* find_character(const std::string& character_id) const;
};

// Parses a screenplay document. Throws MalformedJson on syntax errors and
// SchemaViolation (with the JSON pointer of the first offending field) on
// missing/mistyped required fields. Semantic problems (dangling references,
// inverted intervals, ...) are NOT parse errors; validate_screenplay reports
// them as findings.
Screenplay parse_screenplay(const std::string& document);
Screenplay parse_screenplay(const json& document);

// Checks every type invariant and cross-reference; findings are data, never
// exceptions. A structurally parseable screenplay with zero error findings is
// fit for allocation and generation.
ValidationReport validate_screenplay(const Screenplay& sp);

// Emits UTF-8 JSON with the exact on-disk field names, including preserved
// unknown fields. parse(serialize(sp)) is structurally identical to sp.
std::string serialize_screenplay(const Screenplay& sp);
json screenplay_to_json(const Screenplay& sp);

bool structurally_equal(const Screenplay& a, const Screenplay& b);

// Shots of one scene in screenplay order. Throws UnknownScene.
std::vector<const Shot*> shots_of_scene(const Screenplay& sp, const std::string& scene_id);

// Declared character set of a shot, deduplicated. Throws UnknownShot.
std::set<std::string> characters_in_shot(const Screenplay& sp, const std::string& shot_id);

// "HH:MM:SS.mmm" -> seconds; nullopt when the text does not parse.
std::optional<double> parse_dialogue_timestamp(const std::string& text);

bool is_character_id(const std::string& id);

}  // namespace cine
