#include "skyseg/metrics.hpp"

#include <string>
#include <vector>

namespace skyseg {

double miou(const LabelMap& pred, const LabelMap& truth, size_t num_classes) {
    if (pred.height != truth.height || pred.width != truth.width) {
        throw ShapeError("miou: prediction and ground truth dims differ");
    }
    if (num_classes == 0) throw ParamError("miou: num_classes must be positive");
    std::vector<uint64_t> tp(num_classes, 0), fp(num_classes, 0), fn(num_classes, 0);
    for (size_t i = 0; i < pred.size(); ++i) {
        uint16_t p = pred.labels[i];
        uint16_t g = truth.labels[i];
        if (p >= num_classes || g >= num_classes) {
            throw ParamError("miou: label " + std::to_string(std::max(p, g)) +
                             " out of range for " + std::to_string(num_classes) + " classes");
        }
        if (p == g) {
            ++tp[p];
        } else {
            ++fp[p];
            ++fn[g];
        }
    }
    double sum = 0.0;
    size_t present = 0;
    for (size_t c = 0; c < num_classes; ++c) {
        uint64_t denom = tp[c] + fp[c] + fn[c];
        if (denom == 0) continue;
        sum += static_cast<double>(tp[c]) / static_cast<double>(denom);
        ++present;
    }
    if (present == 0) return 0.0;
    return 100.0 * sum / static_cast<double>(present);
}

uint64_t volume_refinement(size_t h, size_t w) {
    if (h == 0 || w == 0) throw ParamError("volume_refinement: dims must be positive");
    return static_cast<uint64_t>(h) * w * 6;
}

uint64_t volume_stats(size_t total_channels) {
    if (total_channels == 0) throw ParamError("volume_stats: channel count must be positive");
    return static_cast<uint64_t>(total_channels) * 4;
}

}  // namespace skyseg
