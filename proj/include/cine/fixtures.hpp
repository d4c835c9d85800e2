#pragma once

#include <cstdint>
#include <string>

#include "cine/screenplay.hpp"
#include "cine/visual_memory.hpp"

namespace cine {

// Deterministic synthetic screenplays. The mock understanding backend and the
// offline demo both speak through these, so runs are reproducible end to end
// without any source footage.
struct FixtureParams {
    int scenes = 2;
    int shots = 6;
    int characters = 2;
    int mains = 2;  // first N characters classified "main"
    std::uint64_t seed = 1;
    // Desk-scale 16:9 default keeps mock grid canvases cheap to encode.
    int width = 640;
    int height = 360;
    // 0: every shot of a scene shares the scene's character subset (long
    // grid runs). k > 0: redraw the subset every k shots (shorter runs,
    // exercises batching boundaries and the portrait cap).
    int char_churn = 0;
};

std::string fixture_character_id(int n);  // 1 -> "@character_01"
std::string fixture_scene_id(int n);      // 1 -> "major_scene_01"

Screenplay synth_screenplay(const FixtureParams& params);

// Fills the 7-dimension record deterministically from a free-text clothing
// description (hex from a content hash); used when references are generated
// straight from the roster's clothing_variations text.
WardrobeDNA derive_wardrobe_dna(const std::string& description);

}  // namespace cine
