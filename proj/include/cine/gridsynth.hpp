#pragma once

#include <set>
#include <string>
#include <vector>

#include "cine/image.hpp"
#include "cine/screenplay.hpp"
#include "cine/visual_memory.hpp"

namespace cine {

// A group of consecutive shots sharing (scene, character set), rendered as
// one canvas so the cells share a single generation context. order 1 marks a
// singleton that goes through plain one-shot synthesis.
struct GridBatch {
    std::string batch_id;
    std::vector<std::string> shot_ids;  // screenplay order
    int order = 1;                      // 1, 2 or 3; |shot_ids| == order^2
    std::string scene_id;
    std::set<std::string> character_set;
};

struct GridSpec {
    int canvas_width = 0;
    int canvas_height = 0;
    int order = 2;  // 2 or 3
    int tile_width = 0;
    int tile_height = 0;

    // Canvas as order x order tiles at the screenplay resolution, so
    // divisibility holds by construction.
    static GridSpec for_tiles(int order, int tile_width, int tile_height) {
        return {order * tile_width, order * tile_height, order, tile_width, tile_height};
    }
};

struct KeyframeProvenance {
    std::string batch_id;
    int row = 0;
    int col = 0;
    int attempt = 1;
};

struct Keyframe {
    std::string shot_id;
    Image image;       // tile pixels
    std::string path;  // where the tile was persisted, if it was
    KeyframeProvenance provenance;
};

// Partitions shots into maximal consecutive runs with equal
// (scene_id, character set), then chunks each run greedily: 9s while nine or
// more remain, then 4s, then singletons. Flattened output preserves shot order.
std::vector<GridBatch> plan_batches(const std::vector<const Shot*>& shots);

struct GridPrompt {
    std::string prompt;
    std::vector<std::string> references;
};

// One joint synthesis prompt per batch: shared style and environment header,
// then row-major "CELL (r,c) [...]" clauses, closed by the text-suppression
// constraint clause. References are the shared anchors in priority order
// (environment once, union of clothing, union of portraits capped at 5).
// Throws HeterogeneousBatch when packages disagree on environment or
// character set. Pure function of its inputs.
GridPrompt compose_grid_prompt(const GridBatch& batch, const std::vector<MemoryPackage>& packages,
                               const std::string& environment_description, int attempt = 1);

// Splits a canvas into order^2 tiles, row-major. Tiles partition the canvas
// exactly; pixel (x, y) of tile (r, c) equals canvas pixel
// (c*tile_w + x, r*tile_h + y). Throws DimensionMismatch when the canvas does
// not equal the spec dimensions (non-divisible sizes are spec violations).
std::vector<Keyframe> split_grid(const Image& canvas, const GridSpec& spec);

// Inverse of split_grid. Throws WrongCount / DimensionMismatch.
Image recompose(const std::vector<Keyframe>& keyframes, const GridSpec& spec);

}  // namespace cine
