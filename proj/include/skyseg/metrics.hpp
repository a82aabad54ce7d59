#pragma once

#include <cstdint>

#include "skyseg/tensor.hpp"

namespace skyseg {

// Mean intersection-over-union in percent. Classes absent from both inputs
// are excluded from the mean.
double miou(const LabelMap& pred, const LabelMap& truth, size_t num_classes);

// Bytes transmitted for an h×w refinement grid: u16 label + f32 probability
// per pixel.
uint64_t volume_refinement(size_t h, size_t w);

// Bytes transmitted for a set of normalization statistics: two binary16
// values per channel.
uint64_t volume_stats(size_t total_channels);

}  // namespace skyseg
