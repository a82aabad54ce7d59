#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "skyseg/errors.hpp"

namespace skyseg {

// Dense row-major array of 32-bit reals. Values are immutable through the
// public operation surface; operations return fresh tensors.
class Tensor {
public:
    Tensor() = default;

    // Zero-filled tensor of the given shape.
    explicit Tensor(std::vector<size_t> shape);

    // Takes ownership of values; validates element count and finiteness.
    Tensor(std::vector<size_t> shape, std::vector<float> values);

    static Tensor full(std::vector<size_t> shape, float value);

    size_t rank() const { return shape_.size(); }
    const std::vector<size_t>& shape() const { return shape_; }
    size_t dim(size_t i) const;
    size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::span<const float> values() const { return data_; }
    std::span<float> values() { return data_; }
    const float* data() const { return data_.data(); }
    float* data() { return data_.data(); }

    float operator()(size_t i, size_t j) const { return data_[i * shape_[1] + j]; }
    float& operator()(size_t i, size_t j) { return data_[i * shape_[1] + j]; }
    float operator()(size_t i, size_t j, size_t k) const {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    float& operator()(size_t i, size_t j, size_t k) {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    // Throws ShapeError unless rank matches (and, where given, dims match).
    void require_rank(size_t r, const char* what) const;

private:
    std::vector<size_t> shape_;
    std::vector<float> data_;
};

// Row-major grid of class ids. Class ids fit u16 by construction, which is
// also their wire width.
struct LabelMap {
    size_t height = 0;
    size_t width = 0;
    std::vector<uint16_t> labels;

    LabelMap() = default;
    LabelMap(size_t h, size_t w) : height(h), width(w), labels(h * w, 0) {}
    LabelMap(size_t h, size_t w, std::vector<uint16_t> v);

    uint16_t operator()(size_t y, size_t x) const { return labels[y * width + x]; }
    uint16_t& operator()(size_t y, size_t x) { return labels[y * width + x]; }
    size_t size() const { return labels.size(); }
};

// Row-wise softmax of a rank-2 tensor, max-stabilized.
Tensor softmax_rows(const Tensor& m);

// Non-overlapping window mean over a rank-2 tensor. Both dims must divide
// by window.
Tensor avg_pool2d(const Tensor& m, size_t window);

// Nearest-neighbour upsampling by integer block replication. Target dims
// must be integer multiples of the source dims.
Tensor upsample_nearest(const Tensor& m, size_t target_h, size_t target_w);
LabelMap upsample_nearest(const LabelMap& m, size_t target_h, size_t target_w);

// Standard rank-2 product.
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor transpose(const Tensor& m);

// Window-majority label downsampling; ties resolve to the lowest class id.
LabelMap downsample_majority(const LabelMap& m, size_t factor);
LabelMap downsample_majority(const LabelMap& m, size_t factor_y, size_t factor_x);

// Box-filter resize of an H×W or H×W×C tensor to arbitrary target dims,
// with fractional source coverage. Preserves the global mean.
Tensor area_resize(const Tensor& m, size_t target_h, size_t target_w);

namespace detail {

// expf accurate to a couple of float ulps, branch-free in the hot range so
// the compiler can vectorize softmax loops.
float fast_expf(float x);

}  // namespace detail

}  // namespace skyseg
