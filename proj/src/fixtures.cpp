#include "cine/fixtures.hpp"

#include <algorithm>
#include <cstdio>

#include "cine/hashing.hpp"

namespace cine {

namespace {

std::string two_digits(int n) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%02d", n);
    return buf;
}

const char* kFirstNames[] = {"Ada", "Bruno", "Clara", "Dmitri", "Elena", "Felix", "Greta", "Hugo"};
const char* kActions[] = {
    "crosses the room and pauses by the window",
    "leans forward and lowers their voice",
    "turns sharply toward the doorway",
    "sets a glass down and studies the map",
    "steps into the light and waits",
    "paces along the aisle, counting beds",
};
const char* kCameraMoves[] = {"Slow push-in", "Static tripod", "Handheld drift left",
                              "Dolly right, easing out", "Crane down to eye level"};

}  // namespace

std::string fixture_character_id(int n) { return "@character_" + two_digits(n); }
std::string fixture_scene_id(int n) { return "major_scene_" + two_digits(n); }

Screenplay synth_screenplay(const FixtureParams& params) {
    Screenplay sp;
    sp.video_file = "fixture_" + std::to_string(params.seed) + ".mp4";
    sp.metadata.width = params.width;
    sp.metadata.height = params.height;
    sp.metadata.aspect_ratio_label =
        params.width * 9 == params.height * 16 ? "16:9" : std::to_string(params.width) + ":" +
                                                              std::to_string(params.height);
    sp.metadata.ratio_decimal = double(params.width) / double(params.height);
    sp.metadata.total_scenes = params.scenes;

    for (int c = 1; c <= params.characters; ++c) {
        CharacterProfile p;
        p.character_id = fixture_character_id(c);
        p.primary_name = kFirstNames[(c - 1) % 8] + std::string(" ") +
                         std::string(1, char('A' + (c - 1) % 26)) + ".";
        p.primary_source = "on_screen_label";
        p.aliases = {kFirstNames[(c - 1) % 8]};
        p.roles = {c <= params.mains ? "Protagonist" : "Support"};
        p.physical_attributes = "Adult, medium build";
        p.hair = c % 2 ? "Dark, short" : "Light, shoulder length";
        p.face = "Distinct features, steady gaze";
        p.clothing_variations.push_back(
            {"Scene 1", std::string(c % 2 ? "Charcoal wool coat over a white shirt"
                                          : "Olive field jacket with a knit scarf")});
        p.first_appearance_seconds = 0.0;
        p.first_appearance_raw = "0.0s";
        p.role_classification = c <= params.mains ? "main" : "supporting";
        sp.characters.push_back(std::move(p));
    }

    const double scene_len = 30.0;
    for (int s = 1; s <= params.scenes; ++s) {
        MajorScene scene;
        scene.scene_id = fixture_scene_id(s);
        scene.start_time = (s - 1) * scene_len;
        scene.end_time = s * scene_len;
        scene.duration = scene_len;
        scene.location_type = s % 2 ? "Hospital Ward" : "Train Platform";
        scene.setting_description = s % 2 ? "Daytime ward with rows of beds"
                                          : "Evening platform under iron arches";
        scene.lighting_style = s % 2 ? "Bright natural daylight, high key" : "Sodium lamps, low key";
        scene.color_palette = s % 2 ? "Institutional green, white" : "Amber, slate grey";
        scene.environment_description =
            s % 2 ? "A spacious utilitarian ward with white metal-framed beds along a central "
                    "aisle, sheer netting over tall frames, pale green walls and bright diffuse "
                    "daylight through slatted blinds."
                  : "A long outdoor platform beneath riveted iron arches, wet flagstones "
                    "reflecting amber lamps, rolling fog past the signal box and empty benches "
                    "along the edge.";
        sp.major_scenes.push_back(std::move(scene));
    }

    // Shots are spread over scenes in contiguous blocks so same-scene runs
    // exist for the batch planner.
    const int per_scene = std::max(1, params.shots / params.scenes);
    auto subset_for = [&](int scene_idx, int block) {
        std::vector<std::string> chars;
        std::uint64_t h = hash_combine(params.seed, "cast");
        h = hash_combine(h, std::to_string(scene_idx));
        h = hash_combine(h, std::to_string(block));
        int count = 1 + int(h % std::uint64_t(params.characters));
        for (int k = 0; k < count; ++k) {
            int idx = 1 + int(hash_combine(h, std::to_string(k)) % std::uint64_t(params.characters));
            std::string id = fixture_character_id(idx);
            if (std::find(chars.begin(), chars.end(), id) == chars.end()) chars.push_back(id);
        }
        std::sort(chars.begin(), chars.end());
        return chars;
    };

    for (int n = 1; n <= params.shots; ++n) {
        int scene_idx = std::min(params.scenes, 1 + (n - 1) / per_scene);
        Shot shot;
        shot.shot_id = std::to_string(n);
        shot.scene_id = fixture_scene_id(scene_idx);
        int block = params.char_churn > 0 ? (n - 1) / params.char_churn : 0;
        shot.characters = subset_for(scene_idx, block);

        const CharacterProfile& lead = *sp.find_character(shot.characters.front());
        std::uint64_t h = hash_combine(params.seed, "shot" + shot.shot_id);
        shot.lighting_setup = "Three-point lighting, soft key from camera left";
        shot.color_grading = "Warm tones, cinematic contrast";
        shot.composition = "Rule of thirds, subject weighted left";
        shot.mood_atmosphere = n % 3 ? "Quiet tension" : "Guarded relief";
        shot.shot_size = n % 2 ? "Medium close-up" : "Wide establishing";
        shot.camera_angle = "Eye level";
        shot.camera_height = "1.5m from ground";
        shot.horizontal_angle = "15 degrees off axis";
        shot.focal_length = n % 2 ? "50mm lens" : "35mm lens";
        shot.depth_of_field = "Shallow, background softened";
        shot.tech_device = "Digital cinema camera, spherical primes";
        shot.camera_movement = kCameraMoves[h % 5];
        shot.subject_movement.action =
            lead.primary_name + " " + kActions[hash_combine(h, "act") % 6];
        if (n % 4 == 1) {
            Dialogue d;
            int secs = (n - 1) * 6;
            char ts[32];
            std::snprintf(ts, sizeof(ts), "00:%02d:%02d.%03d", secs / 60, secs % 60, 0);
            d.timestamp = ts;
            d.text = "Hold the line at shot " + shot.shot_id + ".";
            shot.subject_movement.dialogue = d;
        }
        shot.one_shot_prompt = shot.shot_size + " of " + lead.primary_name + " who " +
                               kActions[hash_combine(h, "act") % 6] + ", shot " + shot.shot_id +
                               ", " + shot.lighting_setup;
        shot.i2v_prompt = "Dynamic sequence for shot " + shot.shot_id + ": " +
                          shot.subject_movement.action + ", " + shot.camera_movement +
                          ", 6 second duration";
        sp.shots.push_back(std::move(shot));
    }

    return sp;
}

WardrobeDNA derive_wardrobe_dna(const std::string& description) {
    WardrobeDNA dna;
    std::uint64_t h = fnv1a64(description);
    char hex[8];
    std::snprintf(hex, sizeof(hex), "#%06X", unsigned(h % 0x1000000u));
    dna.color.hex = hex;
    char pantone[24];
    std::snprintf(pantone, sizeof(pantone), "%02u-%04u TCX", unsigned(11 + h % 9),
                  unsigned(h % 10000u));
    dna.color.pantone_tcx = pantone;
    dna.fabric = {"woven blend", "plain",   "midweight", "opaque",
                  "matte",       "limited", "smooth",    "structured"};
    dna.cut_fit = {"fitted top", "straight bottom"};
    dna.details = {description.empty() ? std::string("unspecified") : description};
    dna.pattern = {"solid", "none", "uniform", "none", "none"};
    dna.accessories = {"leather shoes", "none", "none"};
    dna.styling = {"single layer", "untucked", "full sleeves", "period drama"};
    return dna;
}

}  // namespace cine
