#include "skyseg/fusion.hpp"

#include <string>

namespace skyseg {

namespace {

void check_refinement(const SegPrediction& coarse, const GeoRect& rect, const SegPrediction& ref) {
    if (rect.x0 >= rect.x1 || rect.y0 >= rect.y1 || rect.x1 > coarse.width || rect.y1 > coarse.height) {
        throw ShapeError("fusion: rect outside the coarse prediction");
    }
    if (ref.height != rect.height() || ref.width != rect.width()) {
        throw ShapeError("fusion: refinement " + std::to_string(ref.width) + "x" +
                         std::to_string(ref.height) + " does not match its rect");
    }
    if (ref.labels.size() != ref.size() || ref.probs.size() != ref.size()) {
        throw ShapeError("fusion: refinement grids inconsistent");
    }
}

SegPrediction fuse(const SegPrediction& coarse, const Refinements& refinements, bool compare_probs) {
    if (coarse.labels.size() != coarse.height * coarse.width ||
        coarse.probs.size() != coarse.labels.size()) {
        throw ShapeError("fusion: coarse prediction grids inconsistent");
    }
    SegPrediction out;
    out.height = coarse.height;
    out.width = coarse.width;
    out.labels = coarse.labels;
    out.probs = coarse.probs;
    for (const auto& [rect, ref] : refinements) {
        check_refinement(coarse, rect, ref);
        for (size_t y = 0; y < rect.height(); ++y) {
            size_t dst = (rect.y0 + y) * out.width + rect.x0;
            size_t src = y * ref.width;
            for (size_t x = 0; x < rect.width(); ++x) {
                if (!compare_probs || ref.probs[src + x] > out.probs[dst + x]) {
                    out.labels[dst + x] = ref.labels[src + x];
                    out.probs[dst + x] = ref.probs[src + x];
                }
            }
        }
    }
    return out;
}

}  // namespace

SegPrediction replacement_fusion(const SegPrediction& coarse, const Refinements& refinements) {
    return fuse(coarse, refinements, false);
}

SegPrediction probability_fusion(const SegPrediction& coarse, const Refinements& refinements) {
    return fuse(coarse, refinements, true);
}

}  // namespace skyseg
