#include "cine/gridsynth.hpp"

#include <algorithm>
#include <cstring>

#include "cine/errors.hpp"

namespace cine {

namespace {

int order_for_size(std::size_t n) {
    if (n == 9) return 3;
    if (n == 4) return 2;
    return 1;
}

void append_unique(std::vector<std::string>& out, const std::vector<std::string>& in) {
    for (const auto& s : in)
        if (std::find(out.begin(), out.end(), s) == out.end()) out.push_back(s);
}

std::string join(const std::vector<std::string>& parts, const char* sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

}  // namespace

std::vector<GridBatch> plan_batches(const std::vector<const Shot*>& shots) {
    std::vector<GridBatch> batches;
    std::size_t i = 0;
    int next_id = 1;
    while (i < shots.size()) {
        // Extend the run while scene and character set stay equal.
        std::size_t j = i + 1;
        const auto key_scene = shots[i]->scene_id;
        const auto key_chars = shots[i]->character_set();
        while (j < shots.size() && shots[j]->scene_id == key_scene &&
               shots[j]->character_set() == key_chars)
            ++j;

        std::size_t remaining = j - i;
        std::size_t pos = i;
        while (remaining > 0) {
            std::size_t take = remaining >= 9 ? 9 : remaining >= 4 ? 4 : 1;
            GridBatch b;
            b.batch_id = "batch_" + std::to_string(next_id++);
            b.order = order_for_size(take);
            b.scene_id = key_scene;
            b.character_set = key_chars;
            for (std::size_t k = 0; k < take; ++k) b.shot_ids.push_back(shots[pos + k]->shot_id);
            batches.push_back(std::move(b));
            pos += take;
            remaining -= take;
        }
        i = j;
    }
    return batches;
}

GridPrompt compose_grid_prompt(const GridBatch& batch, const std::vector<MemoryPackage>& packages,
                               const std::string& environment_description, int attempt) {
    if (packages.size() != batch.shot_ids.size())
        throw WrongCount("batch " + batch.batch_id + " has " + std::to_string(batch.shot_ids.size()) +
                         " shots but " + std::to_string(packages.size()) + " packages");

    const auto& first = packages.front();
    std::set<std::string> first_chars(first.characters.begin(), first.characters.end());
    for (const auto& pkg : packages) {
        if (pkg.environment_ref != first.environment_ref)
            throw HeterogeneousBatch("packages disagree on environment_ref");
        std::set<std::string> chars(pkg.characters.begin(), pkg.characters.end());
        if (chars != first_chars)
            throw HeterogeneousBatch("packages disagree on character set");
    }

    GridPrompt out;
    std::string& p = out.prompt;
    if (!first.style_prompt.empty()) p += first.style_prompt + "\n";
    p += "ENVIRONMENT " + batch.scene_id + ": " + environment_description;
    p += " Match the environment reference image exactly.\n";
    p += "GRID " + std::to_string(batch.order) + "x" + std::to_string(batch.order) +
         ", render cells row-major, one shot per cell, identical characters and environment in "
         "every cell.\n";

    for (std::size_t i = 0; i < packages.size(); ++i) {
        const auto& pkg = packages[i];
        int row = static_cast<int>(i) / batch.order;
        int col = static_cast<int>(i) % batch.order;
        p += "CELL (" + std::to_string(row) + "," + std::to_string(col) + ") [scene=" +
             batch.scene_id + "; characters=" + join(pkg.characters, ",") + "; attempt=" +
             std::to_string(attempt) + "]: " + pkg.narrative.language_prompt +
             " | camera: " + pkg.narrative.camera_movement +
             " | lighting: " + pkg.visual_dna.lighting + " | color: " + pkg.visual_dna.color +
             " | mood: " + pkg.visual_dna.mood + "\n";
    }
    p += "Constraints: no subtitles, no watermarks, no text overlays";

    if (first.environment_ref) out.references.push_back(*first.environment_ref);
    std::vector<std::string> clothing;
    std::vector<std::string> portraits;
    for (const auto& pkg : packages) {
        append_unique(clothing, pkg.clothing_refs);
        append_unique(portraits, pkg.character_refs);
    }
    if (portraits.size() > kPortraitCap) portraits.resize(kPortraitCap);
    out.references.insert(out.references.end(), clothing.begin(), clothing.end());
    out.references.insert(out.references.end(), portraits.begin(), portraits.end());
    return out;
}

std::vector<Keyframe> split_grid(const Image& canvas, const GridSpec& spec) {
    if (spec.canvas_width != spec.order * spec.tile_width ||
        spec.canvas_height != spec.order * spec.tile_height)
        throw DimensionMismatch("grid spec canvas is not order x tile exactly");
    if (canvas.width != spec.canvas_width || canvas.height != spec.canvas_height)
        throw DimensionMismatch("canvas " + std::to_string(canvas.width) + "x" +
                                std::to_string(canvas.height) + " does not match spec " +
                                std::to_string(spec.canvas_width) + "x" +
                                std::to_string(spec.canvas_height));

    std::vector<Keyframe> tiles;
    tiles.reserve(std::size_t(spec.order) * spec.order);
    for (int r = 0; r < spec.order; ++r) {
        for (int c = 0; c < spec.order; ++c) {
            Keyframe kf;
            kf.provenance.row = r;
            kf.provenance.col = c;
            kf.image = Image(spec.tile_width, spec.tile_height);
            for (int y = 0; y < spec.tile_height; ++y) {
                const std::uint8_t* src = canvas.at(c * spec.tile_width, r * spec.tile_height + y);
                std::memcpy(kf.image.at(0, y), src, std::size_t(spec.tile_width) * 3);
            }
            tiles.push_back(std::move(kf));
        }
    }
    return tiles;
}

Image recompose(const std::vector<Keyframe>& keyframes, const GridSpec& spec) {
    const std::size_t expected = std::size_t(spec.order) * spec.order;
    if (keyframes.size() != expected)
        throw WrongCount("expected " + std::to_string(expected) + " keyframes, got " +
                         std::to_string(keyframes.size()));
    if (spec.canvas_width != spec.order * spec.tile_width ||
        spec.canvas_height != spec.order * spec.tile_height)
        throw DimensionMismatch("grid spec canvas is not order x tile exactly");

    Image canvas(spec.canvas_width, spec.canvas_height);
    for (std::size_t i = 0; i < keyframes.size(); ++i) {
        const Image& tile = keyframes[i].image;
        if (tile.width != spec.tile_width || tile.height != spec.tile_height)
            throw DimensionMismatch("keyframe " + std::to_string(i) + " is " +
                                    std::to_string(tile.width) + "x" + std::to_string(tile.height) +
                                    ", spec tile is " + std::to_string(spec.tile_width) + "x" +
                                    std::to_string(spec.tile_height));
        int r = static_cast<int>(i) / spec.order;
        int c = static_cast<int>(i) % spec.order;
        for (int y = 0; y < spec.tile_height; ++y)
            std::memcpy(canvas.at(c * spec.tile_width, r * spec.tile_height + y), tile.at(0, y),
                        std::size_t(spec.tile_width) * 3);
    }
    return canvas;
}

}  // namespace cine
