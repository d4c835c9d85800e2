#pragma once

#include <atomic>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

// Shared fixtures for the test suites.

namespace testsup {

// Creates a unique scratch directory, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "cine") {
        static std::atomic<int> counter{0};
        path_ = (std::filesystem::temp_directory_path() /
                 (tag + "-" + std::to_string(::getpid()) + "-" +
                  std::to_string(counter.fetch_add(1))))
                    .string();
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::string& path() const { return path_; }
    std::string sub(const std::string& rel) const { return path_ + "/" + rel; }

private:
    std::string path_;
};

// The documented screenplay fragments assembled into one document: metadata,
// the character roster entry, the major scene and the shot record, verbatim
// field names and values.
inline std::string gold_document() {
    return R"JSON({
  "video_file": "video.mp4",
  "video_metadata": {
    "aspect_ratio": {
      "width": 1920,
      "height": 1080,
      "aspect_ratio": "16:9",
      "ratio_decimal": 1.777778
    }
  },
  "total_scenes": 20,
  "characters": [
    {
      "character_id": "@character_01",
      "names": {
        "primary_name": "Emma Smith",
        "primary_source": "on_screen_label",
        "aliases": ["Emma", "Em"],
        "titles": ["Ms. Smith"],
        "roles": ["Protagonist"]
      },
      "physical_attributes": "Female, young adult (20s)",
      "hair": "Red, curly, long",
      "face": "Fair complexion, red lips",
      "clothing_variations": [
        {"scene": "Scene 1", "description": "White lace dress"}
      ],
      "first_appearance": "0.0s",
      "role_classification": "main"
    }
  ],
  "major_scenes": [
    {
      "scene_id": "major_scene_01",
      "start_time": 0.0,
      "end_time": 25.0,
      "duration": 25.0,
      "location_type": "Military Hospital Ward",
      "setting_description": "Daytime hospital ward with rows of beds and mosquito nets",
      "lighting_style": "Bright natural daylight through blinds, high key",
      "color_palette": "Institutional green, white, pale yellow",
      "environment_description": "A spacious, utilitarian hospital ward characterized by rows of white metal-framed beds lining both sides of a central aisle. Each bed is draped with sheer white mosquito netting hanging from tall metal frames attached to the headboards and footboards. The walls are painted a pale, institutional green, and the ceiling is high and white. On the right side, a wall of large windows featuring horizontal blinds allows bright, diffuse natural daylight to flood the room, creating a pattern of light and shadow on the light-colored tiled floor. Small metal bedside cabinets and medical stands are positioned next to each bed. The atmosphere is airy and clinical."
    }
  ],
  "shots": [
    {
      "shot_id": "9",
      "scene_id": "major_scene_01",
      "lighting_setup": "Three-point lighting with soft key light from camera left",
      "color_grading": "Warm tones, high contrast, cinematic LUT",
      "composition": "Rule of thirds, subject positioned left",
      "mood_atmosphere": "Tense, dramatic atmosphere",
      "shot_size": "Medium close-up",
      "camera_angle": "Eye level",
      "camera_height": "1.5m from ground",
      "horizontal_angle": "15 degrees to subject's left",
      "focal_length": "50mm lens",
      "depth_of_field": "Shallow DOF, background blurred",
      "tech_device": "ARRI Alexa, Cooke S4/i lenses",
      "camera_movement": "Slow push-in, tracking forward",
      "subject_movement": {
        "action": "Character turns head to look at door",
        "dialogue": {
          "timestamp": "00:02:15.500",
          "text": "What was that sound?"
        }
      },
      "I2V_Prompt": "Dynamic sequence: character slowly turns head toward door, expression shifts from neutral to concerned, subtle hand movement, camera pushes forward slightly, 4-second duration",
      "Language_to_One_Shot_Prompt": "Medium close-up of character with concerned expression, looking toward door on frame right, warm lighting from left, shallow depth of field"
    }
  ]
})JSON";
}

// gold_document extended with a second character and an explicit character
// list on the shot, mirroring the documented memory-package example for
// shot "9".
inline nlohmann::json package_example_document() {
    nlohmann::json doc = nlohmann::json::parse(gold_document());
    doc["shots"][0]["characters"] = {"@character_01", "@character_02"};
    nlohmann::json second = doc["characters"][0];
    second["character_id"] = "@character_02";
    second["names"]["primary_name"] = "Tom Hardy Jr.";
    second["names"]["aliases"] = nlohmann::json::array();
    second["names"]["titles"] = nlohmann::json::array();
    second["role_classification"] = "supporting";
    doc["characters"].push_back(second);
    return doc;
}

}  // namespace testsup
