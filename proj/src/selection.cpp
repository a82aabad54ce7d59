#include "skyseg/selection.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace skyseg {

void SelectionWeights::validate() const {
    for (float v : values()) {
        if (!(v >= 0.0f)) throw ParamError("selection weights must be non-negative");
    }
    double sum = static_cast<double>(w1) + w2 + w3 + w4;
    if (std::abs(sum - 1.0) > 1e-9) {
        throw ParamError("selection weights must sum to 1, got " + std::to_string(sum));
    }
}

Tensor channel_merge(const Tensor& a1, const Tensor& a2) {
    if (!a1.same_shape(a2)) throw ShapeError("channel_merge: map dims differ");
    Tensor out(a1.shape());
    for (size_t i = 0; i < out.size(); ++i) out.data()[i] = 0.5f * (a1.data()[i] + a2.data()[i]);
    return out;
}

std::array<Tensor, 4> patch_merge(const std::array<Tensor, 4>& stages) {
    constexpr std::array<size_t, 4> expected{128, 64, 32, 16};
    constexpr std::array<size_t, 4> windows{8, 4, 2, 1};
    std::array<Tensor, 4> out;
    for (size_t s = 0; s < 4; ++s) {
        stages[s].require_rank(2, "patch_merge");
        if (stages[s].dim(0) != expected[s] || stages[s].dim(1) != expected[s]) {
            throw ShapeError("patch_merge: stage " + std::to_string(s + 1) + " map must be " +
                             std::to_string(expected[s]) + "x" + std::to_string(expected[s]));
        }
        out[s] = windows[s] == 1 ? stages[s] : avg_pool2d(stages[s], windows[s]);
    }
    return out;
}

Tensor weighted_fuse(const std::array<Tensor, 4>& maps, const SelectionWeights& w) {
    w.validate();
    auto weights = w.values();
    for (size_t s = 0; s < 4; ++s) {
        maps[s].require_rank(2, "weighted_fuse");
        if (!maps[s].same_shape(maps[0])) throw ShapeError("weighted_fuse: map dims differ");
    }
    Tensor out(maps[0].shape());
    for (size_t s = 0; s < 4; ++s) {
        for (size_t i = 0; i < out.size(); ++i) out.data()[i] += weights[s] * maps[s].data()[i];
    }
    return out;
}

Tensor finalize(const Tensor& fused) {
    fused.require_rank(2, "finalize");
    if (fused.dim(0) != 16 || fused.dim(1) != 16) {
        throw ShapeError("finalize: fused map must be 16x16");
    }
    return avg_pool2d(fused, 8);
}

std::array<GeoRect, 4> quadrant_rects(const GeoRect& rect) {
    if (rect.width() < 2 || rect.height() < 2) {
        throw ParamError("quadrant split needs a rect of at least 2x2 pixels");
    }
    size_t xm = rect.x0 + rect.width() / 2;
    size_t ym = rect.y0 + rect.height() / 2;
    return {GeoRect{rect.x0, rect.y0, xm, ym}, GeoRect{xm, rect.y0, rect.x1, ym},
            GeoRect{rect.x0, ym, xm, rect.y1}, GeoRect{xm, ym, rect.x1, rect.y1}};
}

PatchRanking select_patches(const Tensor& final_map, size_t k, const GeoRect& leader_rect) {
    final_map.require_rank(2, "select_patches");
    if (final_map.dim(0) != 2 || final_map.dim(1) != 2) {
        throw ShapeError("select_patches: final map must be 2x2");
    }
    if (k < 1 || k > 4) throw ParamError("select_patches: k must be in [1,4]");

    auto rects = quadrant_rects(leader_rect);
    PatchRanking ranking;
    ranking.final_map = final_map;
    std::array<RankedPatch, 4> all;
    for (size_t i = 0; i < 4; ++i) {
        all[i] = RankedPatch{i, final_map.data()[i], rects[i]};
    }
    std::stable_sort(all.begin(), all.end(), [](const RankedPatch& a, const RankedPatch& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.index < b.index;
    });
    ranking.ranked.assign(all.begin(), all.begin() + k);
    return ranking;
}

PatchRanking select_from_attention(const AttentionStack& stack, const SelectionWeights& w, size_t k,
                                   const GeoRect& leader_rect) {
    std::array<Tensor, 4> merged;
    for (size_t s = 0; s < 4; ++s) merged[s] = channel_merge(stack.map(s, 0), stack.map(s, 1));
    return select_patches(finalize(weighted_fuse(patch_merge(merged), w)), k, leader_rect);
}

}  // namespace skyseg
