#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "skyseg/backends.hpp"
#include "skyseg/tensor.hpp"
#include "skyseg/world.hpp"

namespace skyseg {

// Stage weighting for the attention fusion. Must sum to 1.
struct SelectionWeights {
    float w1 = 0.1f, w2 = 0.2f, w3 = 0.3f, w4 = 0.4f;

    std::array<float, 4> values() const { return {w1, w2, w3, w4}; }
    void validate() const;
};

struct RankedPatch {
    size_t index;   // quadrant index, row-major over the 2×2 grid
    float score;
    GeoRect rect;
};

struct PatchRanking {
    Tensor final_map;               // 2×2
    std::vector<RankedPatch> ranked;  // descending score, ties by index
};

// Mean of the two per-block attention maps of one stage.
Tensor channel_merge(const Tensor& a1, const Tensor& a2);

// Pools the four stage maps (128², 64², 32², 16²) down to 16×16 each with
// windows 8, 4, 2 and identity.
std::array<Tensor, 4> patch_merge(const std::array<Tensor, 4>& stages);

// Weighted elementwise sum of the four 16×16 maps.
Tensor weighted_fuse(const std::array<Tensor, 4>& maps, const SelectionWeights& w);

// 8×8 average window: 16×16 fused map down to the final 2×2 map.
Tensor finalize(const Tensor& fused);

// Splits leader_rect into quadrants at its midpoints and ranks them by the
// final map's scores, returning the top k.
PatchRanking select_patches(const Tensor& final_map, size_t k, const GeoRect& leader_rect);

// Quadrant rects of a region, row-major (TL, TR, BL, BR).
std::array<GeoRect, 4> quadrant_rects(const GeoRect& rect);

// Whole pipeline: per-stage channel merge, patch merge, weighted fusion,
// final pooling, top-k ranking.
PatchRanking select_from_attention(const AttentionStack& stack, const SelectionWeights& w, size_t k,
                                   const GeoRect& leader_rect);

}  // namespace skyseg
