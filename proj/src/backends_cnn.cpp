#include <cmath>
#include <string>

#include "backend_detail.hpp"
#include "skyseg/backends.hpp"

namespace skyseg {

std::vector<CnnLayerSpec> CnnConfig::default_layers() {
    // Strided 3×3 stem, then a pointwise tail at the smallest grid. Totals
    // 60 BN layers and 17872 BN channels.
    std::vector<CnnLayerSpec> layers;
    layers.push_back({32, 3, 2});
    layers.push_back({64, 3, 2});
    layers.push_back({128, 3, 2});
    layers.push_back({256, 3, 2});
    for (int i = 0; i < 23; ++i) layers.push_back({320, 1, 1});
    for (int i = 0; i < 33; ++i) layers.push_back({304, 1, 1});
    return layers;
}

size_t CnnConfig::total_bn_channels() const {
    size_t n = 0;
    for (const auto& l : layers) n += l.out_channels;
    return n;
}

size_t CnnConfig::final_grid() const {
    size_t g = input_size;
    for (const auto& l : layers) {
        if (l.stride == 2) g /= 2;
    }
    return g;
}

void CnnConfig::validate() const {
    if (input_size == 0) throw ConfigError("cnn input size must be positive");
    if (num_classes < 2 || num_classes > 65536) throw ConfigError("num_classes must be in [2, 65536]");
    if (layers.empty()) throw ConfigError("cnn needs at least one layer");
    size_t g = input_size;
    for (const auto& l : layers) {
        if (l.out_channels == 0) throw ConfigError("cnn layer channels must be positive");
        if (l.kernel != 1 && l.kernel != 3) throw ConfigError("cnn kernel must be 1 or 3");
        if (l.stride != 1 && l.stride != 2) throw ConfigError("cnn stride must be 1 or 2");
        if (l.stride == 2) {
            if (g % 2 != 0) throw ConfigError("cnn input size does not divide by the stride chain");
            g /= 2;
        }
        if (g == 0) throw ConfigError("cnn stride chain exhausts the input");
    }
}

CnnBackend::CnnBackend(CnnConfig cfg, uint64_t weight_seed) : cfg_(std::move(cfg)), seed_(weight_seed) {
    cfg_.validate();
    Rng rng(splitmix64(weight_seed ^ 0xc4417e5ULL));
    size_t in_ch = 3;
    layers_.reserve(cfg_.layers.size());
    for (const auto& spec : cfg_.layers) {
        CnnLayer layer;
        layer.spec = spec;
        layer.in_channels = in_ch;
        layer.w = Tensor({spec.out_channels, in_ch, spec.kernel, spec.kernel});
        layer.bias.resize(spec.out_channels);
        size_t fan_in = in_ch * spec.kernel * spec.kernel;
        detail::init_uniform(rng, layer.w.data(), layer.w.size(), fan_in);
        detail::init_uniform(rng, layer.bias.data(), layer.bias.size(), fan_in);
        layer.gamma.assign(spec.out_channels, 1.0f);
        layer.beta.assign(spec.out_channels, 0.0f);
        layer.running = NormStats(std::vector<float>(spec.out_channels, 0.0f),
                                  std::vector<float>(spec.out_channels, 1.0f));
        layers_.push_back(std::move(layer));
        in_ch = spec.out_channels;
    }
    head_ = detail::make_linear(rng, in_ch, cfg_.num_classes);
}

StatsSet CnnBackend::running_stats() const {
    StatsSet out;
    out.reserve(layers_.size());
    for (const auto& l : layers_) out.push_back(l.running);
    return out;
}

void CnnBackend::set_running_stats(const StatsSet& stats) {
    if (stats.size() != layers_.size()) throw ConfigError("running stats layer count mismatch");
    for (size_t i = 0; i < stats.size(); ++i) {
        if (stats[i].channels() != layers_[i].spec.out_channels) {
            throw ConfigError("running stats channel mismatch at layer " + std::to_string(i));
        }
        layers_[i].running = stats[i];
    }
}

std::vector<std::pair<float*, size_t>> CnnBackend::param_views() {
    std::vector<std::pair<float*, size_t>> v;
    for (auto& l : layers_) {
        v.emplace_back(l.w.data(), l.w.size());
        v.emplace_back(l.bias.data(), l.bias.size());
        v.emplace_back(l.gamma.data(), l.gamma.size());
        v.emplace_back(l.beta.data(), l.beta.size());
        v.emplace_back(l.running.mean.data(), l.running.mean.size());
        v.emplace_back(l.running.var.data(), l.running.var.size());
    }
    v.emplace_back(head_.w.data(), head_.w.size());
    v.emplace_back(head_.b.data(), head_.b.size());
    return v;
}

void CnnBackend::save_weights(const std::filesystem::path& path) const {
    auto views = const_cast<CnnBackend*>(this)->param_views();
    detail::save_params(path, views);
}

void CnnBackend::load_weights(const std::filesystem::path& path) {
    detail::load_params(path, param_views());
}

uint64_t CnnBackend::flop_estimate() const {
    uint64_t total = 0;
    size_t g = cfg_.input_size;
    for (const auto& l : layers_) {
        if (l.spec.stride == 2) g /= 2;
        total += 2ull * g * g * l.in_channels * l.spec.out_channels * l.spec.kernel * l.spec.kernel;
    }
    size_t fg = cfg_.final_grid();
    total += 2ull * fg * fg * layers_.back().spec.out_channels * cfg_.num_classes;
    return total;
}

namespace {

constexpr float kBnEps = 1e-5f;

// Direct convolution on channel-major planes with zero padding k/2.
Tensor conv2d(const Tensor& in, const CnnLayer& layer) {
    size_t ic = in.dim(0), h = in.dim(1), w = in.dim(2);
    size_t k = layer.spec.kernel, stride = layer.spec.stride, oc = layer.spec.out_channels;
    size_t oh = (stride == 2) ? h / 2 : h;
    size_t ow = (stride == 2) ? w / 2 : w;
    int pad = static_cast<int>(k / 2);
    Tensor out({oc, oh, ow});
    for (size_t o = 0; o < oc; ++o) {
        float* plane = out.data() + o * oh * ow;
        for (size_t i = 0; i < oh * ow; ++i) plane[i] = layer.bias[o];
        for (size_t c = 0; c < ic; ++c) {
            const float* src = in.data() + c * h * w;
            const float* wk = layer.w.data() + (o * ic + c) * k * k;
            for (size_t oy = 0; oy < oh; ++oy) {
                for (size_t ox = 0; ox < ow; ++ox) {
                    float acc = 0.0f;
                    for (size_t ky = 0; ky < k; ++ky) {
                        int iy = static_cast<int>(oy * stride + ky) - pad;
                        if (iy < 0 || iy >= static_cast<int>(h)) continue;
                        for (size_t kx = 0; kx < k; ++kx) {
                            int ix = static_cast<int>(ox * stride + kx) - pad;
                            if (ix < 0 || ix >= static_cast<int>(w)) continue;
                            acc += wk[ky * k + kx] * src[iy * w + ix];
                        }
                    }
                    plane[oy * ow + ox] += acc;
                }
            }
        }
    }
    return out;
}

void bn_relu_inplace(Tensor& x, const CnnLayer& layer, const NormStats& stats) {
    size_t c = x.dim(0), spatial = x.dim(1) * x.dim(2);
    for (size_t ch = 0; ch < c; ++ch) {
        float inv = 1.0f / std::sqrt(stats.var[ch] + kBnEps);
        float scale = layer.gamma[ch] * inv;
        float shift = layer.beta[ch] - stats.mean[ch] * scale;
        float* plane = x.data() + ch * spatial;
        for (size_t i = 0; i < spatial; ++i) {
            plane[i] = std::max(plane[i] * scale + shift, 0.0f);
        }
    }
}

}  // namespace

FollowerForward cnn_forward(const CnnBackend& b, const Tensor& image, CnnMode mode,
                            const StatsSet* adapted_bn) {
    const CnnConfig& cfg = b.config();
    if (image.rank() != 3 || image.dim(0) != cfg.input_size || image.dim(1) != cfg.input_size ||
        image.dim(2) != 3) {
        throw ShapeError("cnn_forward: expected " + std::to_string(cfg.input_size) + "x" +
                         std::to_string(cfg.input_size) + "x3 input");
    }
    if (adapted_bn) {
        if (adapted_bn->size() != b.bn_layer_count()) {
            throw ConfigError("adapted BN stats layer count mismatch");
        }
        for (size_t i = 0; i < adapted_bn->size(); ++i) {
            if ((*adapted_bn)[i].channels() != b.layer(i).spec.out_channels) {
                throw ConfigError("adapted BN stats channel mismatch at layer " + std::to_string(i));
            }
        }
    }

    // Channel-major copy of the H×W×3 input.
    size_t hw = cfg.input_size;
    Tensor x({3, hw, hw});
    for (size_t y = 0; y < hw; ++y)
        for (size_t xx = 0; xx < hw; ++xx)
            for (size_t c = 0; c < 3; ++c) x(c, y, xx) = image(y, xx, c);

    FollowerForward fwd;
    bool collect = mode == CnnMode::Collecting;
    if (collect) fwd.batch_stats.reserve(b.bn_layer_count());

    for (size_t i = 0; i < b.bn_layer_count(); ++i) {
        const CnnLayer& layer = b.layer(i);
        x = conv2d(x, layer);
        NormStats batch;
        if (collect) {
            batch = bn_batch_stats(x);
            fwd.batch_stats.push_back(batch);
        }
        const NormStats& use = adapted_bn   ? (*adapted_bn)[i]
                               : collect    ? fwd.batch_stats.back()
                                            : layer.running;
        bn_relu_inplace(x, layer, use);
    }

    // 1×1 head over the final grid, class softmax, nearest upsample back to
    // the input resolution.
    size_t fg = x.dim(1);
    size_t fc = x.dim(0);
    Tensor feats({fg * fg, fc});
    for (size_t c = 0; c < fc; ++c)
        for (size_t i = 0; i < fg * fg; ++i) feats(i, c) = x.data()[c * fg * fg + i];
    Tensor logits = detail::linear_apply(feats, b.head());
    Tensor probs = softmax_rows(logits);
    Tensor class_grid({fg, fg, cfg.num_classes});
    std::copy(probs.values().begin(), probs.values().end(), class_grid.values().begin());
    SegPrediction coarse = SegPrediction::from_class_probs(class_grid);

    LabelMap grid_labels(fg, fg, coarse.labels);
    LabelMap full_labels = upsample_nearest(grid_labels, hw, hw);
    Tensor grid_probs({fg, fg}, coarse.probs);
    Tensor full_probs = upsample_nearest(grid_probs, hw, hw);
    fwd.prediction.height = hw;
    fwd.prediction.width = hw;
    fwd.prediction.labels = std::move(full_labels.labels);
    fwd.prediction.probs.assign(full_probs.values().begin(), full_probs.values().end());
    return fwd;
}

}  // namespace skyseg
