#pragma once

#include <filesystem>
#include <utility>
#include <vector>

#include "skyseg/backends.hpp"
#include "skyseg/rng.hpp"

namespace skyseg::detail {

// Fills a weight span with uniform draws in [-1/sqrt(fan_in), +1/sqrt(fan_in)].
void init_uniform(Rng& rng, float* data, size_t n, size_t fan_in);

LinearLayer make_linear(Rng& rng, size_t in, size_t out);

// Flat f32 weight container ("SKYWGT1"): magic then the given arrays in order.
void save_params(const std::filesystem::path& path,
                 const std::vector<std::pair<float*, size_t>>& views);
void load_params(const std::filesystem::path& path,
                 const std::vector<std::pair<float*, size_t>>& views);

// y = x·W + b for row-major x (rows × in), W (in × out).
Tensor linear_apply(const Tensor& x, const LinearLayer& layer);

}  // namespace skyseg::detail
