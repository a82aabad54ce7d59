#include "skyseg/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <string>

namespace skyseg {

namespace {

std::string shape_str(const std::vector<size_t>& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

size_t shape_product(const std::vector<size_t>& s) {
    size_t n = 1;
    for (size_t d : s) {
        if (d == 0) throw ShapeError("tensor dims must be positive, got " + shape_str(s));
        n *= d;
    }
    return n;
}

}  // namespace

Tensor::Tensor(std::vector<size_t> shape)
    : shape_(std::move(shape)), data_(shape_product(shape_), 0.0f) {}

Tensor::Tensor(std::vector<size_t> shape, std::vector<float> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
    if (shape_product(shape_) != data_.size()) {
        throw ShapeError("tensor shape " + shape_str(shape_) + " does not match " +
                         std::to_string(data_.size()) + " values");
    }
    for (float v : data_) {
        if (!std::isfinite(v)) throw ParamError("tensor values must be finite");
    }
}

Tensor Tensor::full(std::vector<size_t> shape, float value) {
    if (!std::isfinite(value)) throw ParamError("tensor values must be finite");
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
}

size_t Tensor::dim(size_t i) const {
    if (i >= shape_.size()) throw ShapeError("dim index out of range");
    return shape_[i];
}

void Tensor::require_rank(size_t r, const char* what) const {
    if (rank() != r) {
        throw ShapeError(std::string(what) + ": expected rank-" + std::to_string(r) +
                         " tensor, got " + shape_str(shape_));
    }
}

LabelMap::LabelMap(size_t h, size_t w, std::vector<uint16_t> v)
    : height(h), width(w), labels(std::move(v)) {
    if (labels.size() != h * w) {
        throw ShapeError("label grid " + std::to_string(h) + "x" + std::to_string(w) +
                         " does not match " + std::to_string(labels.size()) + " labels");
    }
}

namespace detail {

float fast_expf(float x) {
    // Cephes-style: range-reduce to r in [-ln2/2, ln2/2], degree-5 poly,
    // exact power-of-two rescale. Accurate to ~2 ulp over the full range.
    x = std::min(x, 88.3762626647949f);
    x = std::max(x, -87.3365478515625f);
    float n = std::floor(x * 1.44269504088896341f + 0.5f);
    float r = x - n * 0.693359375f;
    r -= n * -2.12194440e-4f;
    float p = 1.9875691500e-4f;
    p = p * r + 1.3981999507e-3f;
    p = p * r + 8.3334519073e-3f;
    p = p * r + 4.1665795894e-2f;
    p = p * r + 1.6666665459e-1f;
    p = p * r + 5.0000001201e-1f;
    p = p * r * r + r + 1.0f;
    uint32_t bits = static_cast<uint32_t>(static_cast<int32_t>(n) + 127) << 23;
    return p * std::bit_cast<float>(bits);
}

}  // namespace detail

Tensor softmax_rows(const Tensor& m) {
    m.require_rank(2, "softmax_rows");
    size_t rows = m.dim(0), cols = m.dim(1);
    Tensor out({rows, cols});
    const float* src = m.data();
    float* dst = out.data();
    for (size_t i = 0; i < rows; ++i) {
        const float* row = src + i * cols;
        float* orow = dst + i * cols;
        float mx = row[0];
        for (size_t j = 1; j < cols; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (size_t j = 0; j < cols; ++j) {
            float e = detail::fast_expf(row[j] - mx);
            orow[j] = e;
            sum += e;
        }
        float inv = static_cast<float>(1.0 / sum);
        for (size_t j = 0; j < cols; ++j) orow[j] *= inv;
    }
    return out;
}

Tensor avg_pool2d(const Tensor& m, size_t window) {
    m.require_rank(2, "avg_pool2d");
    if (window == 0) throw ParamError("avg_pool2d: window must be positive");
    size_t h = m.dim(0), w = m.dim(1);
    if (h % window != 0 || w % window != 0) {
        throw ShapeError("avg_pool2d: dims " + std::to_string(h) + "x" + std::to_string(w) +
                         " not divisible by window " + std::to_string(window));
    }
    size_t oh = h / window, ow = w / window;
    Tensor out({oh, ow});
    double inv = 1.0 / static_cast<double>(window * window);
    for (size_t oy = 0; oy < oh; ++oy) {
        for (size_t ox = 0; ox < ow; ++ox) {
            double sum = 0.0;
            for (size_t dy = 0; dy < window; ++dy) {
                const float* row = m.data() + (oy * window + dy) * w + ox * window;
                for (size_t dx = 0; dx < window; ++dx) sum += row[dx];
            }
            out(oy, ox) = static_cast<float>(sum * inv);
        }
    }
    return out;
}

namespace {

void check_upsample_dims(size_t h, size_t w, size_t th, size_t tw) {
    if (th == 0 || tw == 0 || th % h != 0 || tw % w != 0) {
        throw ShapeError("upsample_nearest: target " + std::to_string(th) + "x" +
                         std::to_string(tw) + " is not an integer multiple of " +
                         std::to_string(h) + "x" + std::to_string(w));
    }
}

}  // namespace

Tensor upsample_nearest(const Tensor& m, size_t target_h, size_t target_w) {
    m.require_rank(2, "upsample_nearest");
    size_t h = m.dim(0), w = m.dim(1);
    check_upsample_dims(h, w, target_h, target_w);
    size_t fy = target_h / h, fx = target_w / w;
    Tensor out({target_h, target_w});
    for (size_t y = 0; y < target_h; ++y) {
        const float* src = m.data() + (y / fy) * w;
        float* dst = out.data() + y * target_w;
        for (size_t x = 0; x < target_w; ++x) dst[x] = src[x / fx];
    }
    return out;
}

LabelMap upsample_nearest(const LabelMap& m, size_t target_h, size_t target_w) {
    if (m.size() == 0) throw ShapeError("upsample_nearest: empty label grid");
    check_upsample_dims(m.height, m.width, target_h, target_w);
    size_t fy = target_h / m.height, fx = target_w / m.width;
    LabelMap out(target_h, target_w);
    for (size_t y = 0; y < target_h; ++y) {
        const uint16_t* src = m.labels.data() + (y / fy) * m.width;
        uint16_t* dst = out.labels.data() + y * target_w;
        for (size_t x = 0; x < target_w; ++x) dst[x] = src[x / fx];
    }
    return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    a.require_rank(2, "matmul");
    b.require_rank(2, "matmul");
    size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k) {
        throw ShapeError("matmul: inner dims disagree, " + std::to_string(k) + " vs " +
                         std::to_string(b.dim(0)));
    }
    Tensor out({m, n});
    const float* pa = a.data();
    const float* pb = b.data();
    float* pc = out.data();
    for (size_t i = 0; i < m; ++i) {
        float* crow = pc + i * n;
        for (size_t kk = 0; kk < k; ++kk) {
            float aik = pa[i * k + kk];
            const float* brow = pb + kk * n;
            for (size_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
        }
    }
    for (float v : out.values()) {
        if (!std::isfinite(v)) throw Error("matmul: non-finite result");
    }
    return out;
}

Tensor transpose(const Tensor& m) {
    m.require_rank(2, "transpose");
    size_t h = m.dim(0), w = m.dim(1);
    Tensor out({w, h});
    for (size_t i = 0; i < h; ++i)
        for (size_t j = 0; j < w; ++j) out(j, i) = m(i, j);
    return out;
}

LabelMap downsample_majority(const LabelMap& m, size_t factor) {
    return downsample_majority(m, factor, factor);
}

LabelMap downsample_majority(const LabelMap& m, size_t factor_y, size_t factor_x) {
    if (factor_y == 0 || factor_x == 0) throw ParamError("downsample_majority: factor must be positive");
    if (m.height % factor_y != 0 || m.width % factor_x != 0) {
        throw ShapeError("downsample_majority: dims not divisible by factor");
    }
    size_t oh = m.height / factor_y, ow = m.width / factor_x;
    LabelMap out(oh, ow);
    std::vector<uint16_t> window(factor_y * factor_x);
    for (size_t oy = 0; oy < oh; ++oy) {
        for (size_t ox = 0; ox < ow; ++ox) {
            size_t idx = 0;
            for (size_t dy = 0; dy < factor_y; ++dy)
                for (size_t dx = 0; dx < factor_x; ++dx)
                    window[idx++] = m(oy * factor_y + dy, ox * factor_x + dx);
            uint16_t best = window[0];
            size_t best_count = 0;
            for (uint16_t cand : window) {
                size_t count = 0;
                for (uint16_t v : window) count += (v == cand);
                if (count > best_count || (count == best_count && cand < best)) {
                    best = cand;
                    best_count = count;
                }
            }
            out(oy, ox) = best;
        }
    }
    return out;
}

Tensor area_resize(const Tensor& m, size_t target_h, size_t target_w) {
    if (m.rank() != 2 && m.rank() != 3) {
        throw ShapeError("area_resize: expected rank-2 or rank-3 tensor");
    }
    if (target_h == 0 || target_w == 0) throw ParamError("area_resize: target dims must be positive");
    size_t h = m.dim(0), w = m.dim(1);
    size_t c = m.rank() == 3 ? m.dim(2) : 1;
    std::vector<size_t> out_shape =
        m.rank() == 3 ? std::vector<size_t>{target_h, target_w, c} : std::vector<size_t>{target_h, target_w};
    Tensor out(std::move(out_shape));
    double sy = static_cast<double>(h) / target_h;
    double sx = static_cast<double>(w) / target_w;
    double inv_area = 1.0 / (sy * sx);
    std::vector<double> acc(c);
    for (size_t ty = 0; ty < target_h; ++ty) {
        double y0 = ty * sy, y1 = (ty + 1) * sy;
        size_t ry0 = static_cast<size_t>(y0);
        size_t ry1 = std::min(h, static_cast<size_t>(std::ceil(y1)));
        for (size_t tx = 0; tx < target_w; ++tx) {
            double x0 = tx * sx, x1 = (tx + 1) * sx;
            size_t rx0 = static_cast<size_t>(x0);
            size_t rx1 = std::min(w, static_cast<size_t>(std::ceil(x1)));
            std::fill(acc.begin(), acc.end(), 0.0);
            for (size_t yy = ry0; yy < ry1; ++yy) {
                double wy = std::min<double>(yy + 1, y1) - std::max<double>(yy, y0);
                const float* row = m.data() + (yy * w + rx0) * c;
                for (size_t xx = rx0; xx < rx1; ++xx) {
                    double wx = std::min<double>(xx + 1, x1) - std::max<double>(xx, x0);
                    double wgt = wy * wx;
                    for (size_t ch = 0; ch < c; ++ch) acc[ch] += wgt * row[(xx - rx0) * c + ch];
                }
            }
            float* dst = out.data() + (ty * target_w + tx) * c;
            for (size_t ch = 0; ch < c; ++ch) dst[ch] = static_cast<float>(acc[ch] * inv_area);
        }
    }
    return out;
}

}  // namespace skyseg
