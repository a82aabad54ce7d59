#include <cmath>
#include <string>

#include "backend_detail.hpp"
#include "skyseg/backends.hpp"
#include "skyseg/parallel.hpp"

namespace skyseg {

std::array<size_t, 4> TransformerConfig::dims() const {
    std::array<size_t, 4> out{};
    for (size_t i = 0; i < 4; ++i) out[i] = base_dims[i] / dim_divisor;
    return out;
}

std::array<size_t, 4> TransformerConfig::stage_grid() const {
    std::array<size_t, 4> out{};
    out[0] = input_size / patch_size;
    for (size_t i = 1; i < 4; ++i) out[i] = out[i - 1] / 2;
    return out;
}

void TransformerConfig::validate() const {
    if (input_size == 0 || patch_size == 0 || input_size % patch_size != 0) {
        throw ConfigError("transformer input must divide by patch size");
    }
    size_t g = input_size / patch_size;
    if (g % 8 != 0 || g / 8 == 0) throw ConfigError("transformer token grid must divide by 8");
    if (dim_divisor == 0) throw ConfigError("dim divisor must be positive");
    for (size_t d : base_dims) {
        if (d == 0 || d % dim_divisor != 0) throw ConfigError("stage dims must divide by dim divisor");
    }
    if (mlp_ratio == 0) throw ConfigError("mlp ratio must be positive");
    if (num_classes < 2 || num_classes > 65536) throw ConfigError("num_classes must be in [2, 65536]");
}

TransformerBackend::TransformerBackend(TransformerConfig cfg, uint64_t weight_seed)
    : cfg_(cfg), seed_(weight_seed) {
    cfg_.validate();
    Rng rng(splitmix64(weight_seed ^ 0x5ce5a1ULL));
    auto d = cfg_.dims();
    size_t in_dim = cfg_.patch_size * cfg_.patch_size * 3;
    for (size_t s = 0; s < 4; ++s) {
        TransformerStageWeights& stage = stages_[s];
        stage.embed = detail::make_linear(rng, in_dim, d[s]);
        for (auto& blk : stage.blocks) {
            blk.ln1.gamma.assign(d[s], 1.0f);
            blk.ln1.beta.assign(d[s], 0.0f);
            blk.q = detail::make_linear(rng, d[s], d[s]);
            blk.k = detail::make_linear(rng, d[s], d[s]);
            blk.v = detail::make_linear(rng, d[s], d[s]);
            blk.o = detail::make_linear(rng, d[s], d[s]);
            blk.ln2.gamma.assign(d[s], 1.0f);
            blk.ln2.beta.assign(d[s], 0.0f);
            blk.mlp1 = detail::make_linear(rng, d[s], cfg_.mlp_ratio * d[s]);
            blk.mlp2 = detail::make_linear(rng, cfg_.mlp_ratio * d[s], d[s]);
        }
        in_dim = 4 * d[s];  // 2×2 token merge feeds the next stage
    }
    head_ = detail::make_linear(rng, d[3], cfg_.num_classes);
}

std::vector<std::pair<float*, size_t>> TransformerBackend::param_views() {
    std::vector<std::pair<float*, size_t>> v;
    auto add = [&v](std::vector<float>& vec) { v.emplace_back(vec.data(), vec.size()); };
    auto add_t = [&v](Tensor& t) { v.emplace_back(t.data(), t.size()); };
    auto add_lin = [&](LinearLayer& l) {
        add_t(l.w);
        add(l.b);
    };
    for (auto& stage : stages_) {
        add_lin(stage.embed);
        for (auto& blk : stage.blocks) {
            add(blk.ln1.gamma);
            add(blk.ln1.beta);
            add_lin(blk.q);
            add_lin(blk.k);
            add_lin(blk.v);
            add_lin(blk.o);
            add(blk.ln2.gamma);
            add(blk.ln2.beta);
            add_lin(blk.mlp1);
            add_lin(blk.mlp2);
        }
    }
    add_lin(head_);
    return v;
}

void TransformerBackend::save_weights(const std::filesystem::path& path) const {
    auto views = const_cast<TransformerBackend*>(this)->param_views();
    detail::save_params(path, views);
}

void TransformerBackend::load_weights(const std::filesystem::path& path) {
    detail::load_params(path, param_views());
}

uint64_t TransformerBackend::flop_estimate() const {
    auto d = cfg_.dims();
    auto grid = cfg_.stage_grid();
    uint64_t total = 0;
    uint64_t in_dim = cfg_.patch_size * cfg_.patch_size * 3;
    for (size_t s = 0; s < 4; ++s) {
        uint64_t n = grid[s] * grid[s];
        uint64_t dd = d[s];
        total += 2 * n * in_dim * dd;                       // embed
        total += 2 * (4 * 2 * n * dd * dd                   // q,k,v,o
                      + 2 * 2 * n * n * dd                  // scores + weighted sum
                      + 8 * n * n                           // softmax
                      + 2 * 2 * n * dd * cfg_.mlp_ratio * dd);  // mlp
        in_dim = 4 * dd;
    }
    total += 2 * grid[3] * grid[3] * d[3] * cfg_.num_classes;
    return total;
}

namespace {

constexpr float kLnEps = 1e-5f;

// Scalar-statistic layer norm over the whole token matrix. Returns the
// normalized copy; records the per-sample statistics so adaptation can
// replace them on later calls.
Tensor ln_apply(const Tensor& x, const LnLayer& ln, const NormStats* adapted, NormStats& batch_out) {
    batch_out = ln_batch_stats(x);
    const NormStats& use = adapted ? *adapted : batch_out;
    if (use.channels() != 1) throw ConfigError("LN statistics must be scalar");
    float m = use.mean[0];
    float inv = 1.0f / std::sqrt(use.var[0] + kLnEps);
    size_t rows = x.dim(0), cols = x.dim(1);
    Tensor out({rows, cols});
    for (size_t i = 0; i < rows; ++i) {
        const float* src = x.data() + i * cols;
        float* dst = out.data() + i * cols;
        for (size_t j = 0; j < cols; ++j) {
            dst[j] = (src[j] - m) * inv * ln.gamma[j] + ln.beta[j];
        }
    }
    return out;
}

struct AttentionPass {
    Tensor out;   // n × d, softmax(q·kᵀ/√d)·v
    Tensor map;   // side × side, mean over queries of the score matrix
};

AttentionPass attention_pass(const Tensor& q, const Tensor& k, const Tensor& v, size_t side) {
    size_t n = q.dim(0), d = q.dim(1);
    float scale = 1.0f / std::sqrt(static_cast<float>(d));

    // Pre-scaled queries and a d×n key layout keep the score loop a plain
    // row-major accumulation the compiler vectorizes.
    Tensor qs({n, d});
    for (size_t i = 0; i < n * d; ++i) qs.data()[i] = q.data()[i] * scale;
    Tensor kt = transpose(k);

    AttentionPass result;
    result.out = Tensor({n, d});
    constexpr size_t kRows = 128;
    size_t nblocks = (n + kRows - 1) / kRows;
    std::vector<std::vector<float>> partial_colsum(nblocks);

    detail::parallel_blocks(nblocks, [&](size_t blk) {
        size_t r0 = blk * kRows;
        size_t r1 = std::min(n, r0 + kRows);
        std::vector<float> scores((r1 - r0) * n);
        std::vector<float>& colsum = partial_colsum[blk];
        colsum.assign(n, 0.0f);
        for (size_t i = r0; i < r1; ++i) {
            float* srow = scores.data() + (i - r0) * n;
            std::fill(srow, srow + n, 0.0f);
            const float* qrow = qs.data() + i * d;
            for (size_t dd = 0; dd < d; ++dd) {
                float qv = qrow[dd];
                const float* krow = kt.data() + dd * n;
                for (size_t j = 0; j < n; ++j) srow[j] += qv * krow[j];
            }
            float mx = srow[0];
            for (size_t j = 1; j < n; ++j) mx = std::max(mx, srow[j]);
            double sum = 0.0;
            for (size_t j = 0; j < n; ++j) {
                float e = skyseg::detail::fast_expf(srow[j] - mx);
                srow[j] = e;
                sum += e;
            }
            float norm = static_cast<float>(1.0 / sum);
            float* orow = result.out.data() + i * d;
            for (size_t j = 0; j < n; ++j) {
                float a = srow[j] * norm;
                srow[j] = a;
                colsum[j] += a;
                const float* vrow = v.data() + j * d;
                for (size_t dd = 0; dd < d; ++dd) orow[dd] += a * vrow[dd];
            }
        }
    });

    result.map = Tensor({side, side});
    double inv_n = 1.0 / static_cast<double>(n);
    for (size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (size_t blk = 0; blk < nblocks; ++blk) s += partial_colsum[blk][j];
        result.map.data()[j] = static_cast<float>(s * inv_n);
    }
    return result;
}

Tensor extract_patches(const Tensor& image, size_t patch) {
    size_t h = image.dim(0), w = image.dim(1);
    size_t gy = h / patch, gx = w / patch;
    Tensor out({gy * gx, patch * patch * 3});
    for (size_t ty = 0; ty < gy; ++ty) {
        for (size_t tx = 0; tx < gx; ++tx) {
            float* dst = out.data() + (ty * gx + tx) * patch * patch * 3;
            for (size_t py = 0; py < patch; ++py) {
                const float* src = image.data() + ((ty * patch + py) * w + tx * patch) * 3;
                std::copy(src, src + patch * 3, dst);
                dst += patch * 3;
            }
        }
    }
    return out;
}

// Concatenates each 2×2 token neighbourhood into one token of 4d features.
Tensor merge_tokens(const Tensor& x, size_t side) {
    size_t d = x.dim(1);
    size_t half = side / 2;
    Tensor out({half * half, 4 * d});
    for (size_t y = 0; y < half; ++y) {
        for (size_t xx = 0; xx < half; ++xx) {
            float* dst = out.data() + (y * half + xx) * 4 * d;
            const size_t src_idx[4] = {
                (2 * y) * side + 2 * xx,
                (2 * y) * side + 2 * xx + 1,
                (2 * y + 1) * side + 2 * xx,
                (2 * y + 1) * side + 2 * xx + 1,
            };
            for (size_t t = 0; t < 4; ++t) {
                const float* src = x.data() + src_idx[t] * d;
                std::copy(src, src + d, dst + t * d);
            }
        }
    }
    return out;
}

}  // namespace

LeaderForward transformer_forward(const TransformerBackend& b, const Tensor& image,
                                  const StatsSet* adapted_ln) {
    const TransformerConfig& cfg = b.config();
    if (image.rank() != 3 || image.dim(0) != cfg.input_size || image.dim(1) != cfg.input_size ||
        image.dim(2) != 3) {
        throw ShapeError("transformer_forward: expected " + std::to_string(cfg.input_size) + "x" +
                         std::to_string(cfg.input_size) + "x3 input");
    }
    if (adapted_ln && adapted_ln->size() != b.ln_layer_count()) {
        throw ConfigError("adapted LN stats must hold " + std::to_string(b.ln_layer_count()) +
                          " entries, got " + std::to_string(adapted_ln->size()));
    }

    auto grid = cfg.stage_grid();
    LeaderForward fwd;
    fwd.ln_stats.resize(b.ln_layer_count());

    Tensor x = extract_patches(image, cfg.patch_size);
    size_t slot = 0;
    for (size_t s = 0; s < 4; ++s) {
        const TransformerStageWeights& stage = b.stage(s);
        x = detail::linear_apply(x, stage.embed);
        size_t side = grid[s];
        for (size_t blk = 0; blk < 2; ++blk) {
            const TransformerBlockWeights& w = stage.blocks[blk];
            const NormStats* a1 = adapted_ln ? &(*adapted_ln)[slot] : nullptr;
            Tensor xn = ln_apply(x, w.ln1, a1, fwd.ln_stats[slot]);
            ++slot;
            Tensor q = detail::linear_apply(xn, w.q);
            Tensor k = detail::linear_apply(xn, w.k);
            Tensor v = detail::linear_apply(xn, w.v);
            AttentionPass attn = attention_pass(q, k, v, side);
            fwd.attention.blocks[s][blk] = std::move(attn.map);
            Tensor proj = detail::linear_apply(attn.out, w.o);
            for (size_t i = 0; i < x.size(); ++i) x.data()[i] += proj.data()[i];

            const NormStats* a2 = adapted_ln ? &(*adapted_ln)[slot] : nullptr;
            Tensor xn2 = ln_apply(x, w.ln2, a2, fwd.ln_stats[slot]);
            ++slot;
            Tensor h = detail::linear_apply(xn2, w.mlp1);
            for (float& hv : h.values()) hv = std::max(hv, 0.0f);
            Tensor m = detail::linear_apply(h, w.mlp2);
            for (size_t i = 0; i < x.size(); ++i) x.data()[i] += m.data()[i];
        }
        if (s < 3) x = merge_tokens(x, side);
    }

    Tensor logits = detail::linear_apply(x, b.head());
    Tensor probs = softmax_rows(logits);
    size_t g4 = grid[3];
    Tensor class_grid({g4, g4, cfg.num_classes});
    std::copy(probs.values().begin(), probs.values().end(), class_grid.values().begin());
    SegPrediction token_pred = SegPrediction::from_class_probs(class_grid);

    LabelMap token_labels(g4, g4, token_pred.labels);
    LabelMap full_labels = upsample_nearest(token_labels, cfg.input_size, cfg.input_size);
    Tensor token_probs({g4, g4}, token_pred.probs);
    Tensor full_probs = upsample_nearest(token_probs, cfg.input_size, cfg.input_size);

    fwd.prediction.height = cfg.input_size;
    fwd.prediction.width = cfg.input_size;
    fwd.prediction.labels = std::move(full_labels.labels);
    fwd.prediction.probs.assign(full_probs.values().begin(), full_probs.values().end());
    return fwd;
}

}  // namespace skyseg
