#include <cmath>
#include <cstring>
#include <fstream>

#include "backend_detail.hpp"
#include "skyseg/backends.hpp"

namespace skyseg {

SegPrediction SegPrediction::from_class_probs(const Tensor& hwc, bool keep_class_probs) {
    hwc.require_rank(3, "from_class_probs");
    size_t h = hwc.dim(0), w = hwc.dim(1), c = hwc.dim(2);
    if (c == 0 || c > 65536) throw ShapeError("from_class_probs: class axis out of range");
    SegPrediction out;
    out.height = h;
    out.width = w;
    out.labels.resize(h * w);
    out.probs.resize(h * w);
    for (size_t i = 0; i < h * w; ++i) {
        const float* row = hwc.data() + i * c;
        size_t best = 0;
        for (size_t k = 1; k < c; ++k) {
            if (row[k] > row[best]) best = k;
        }
        out.labels[i] = static_cast<uint16_t>(best);
        out.probs[i] = row[best];
    }
    if (keep_class_probs) out.class_probs = hwc;
    return out;
}

void SegPrediction::validate(size_t num_classes) const {
    if (labels.size() != height * width || probs.size() != height * width) {
        throw ShapeError("prediction label/prob grids do not match dims");
    }
    for (size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= num_classes) throw ParamError("prediction label out of range");
        if (!(probs[i] >= 0.0f && probs[i] <= 1.0f)) throw ParamError("prediction prob outside [0,1]");
    }
    if (class_probs.has_value()) {
        const Tensor& cp = *class_probs;
        if (cp.rank() != 3 || cp.dim(0) != height || cp.dim(1) != width) {
            throw ShapeError("class_probs dims do not match prediction");
        }
        size_t c = cp.dim(2);
        for (size_t i = 0; i < labels.size(); ++i) {
            const float* row = cp.data() + i * c;
            size_t best = 0;
            for (size_t k = 1; k < c; ++k)
                if (row[k] > row[best]) best = k;
            if (labels[i] != best || probs[i] != row[best]) {
                throw ParamError("class_probs inconsistent with labels/probs");
            }
        }
    }
}

Tensor attention_scores(const Tensor& q, const Tensor& k, size_t d) {
    q.require_rank(2, "attention_scores");
    k.require_rank(2, "attention_scores");
    if (d == 0) throw ParamError("attention_scores: d must be positive");
    if (q.dim(1) != d || k.dim(1) != d) {
        throw ShapeError("attention_scores: q/k column dim must equal d");
    }
    Tensor scores = matmul(q, transpose(k));
    float inv = 1.0f / std::sqrt(static_cast<float>(d));
    for (float& v : scores.values()) v *= inv;
    return softmax_rows(scores);
}

SegPrediction oracle_forward(const Scene& scene, const GeoRect& rect, float accuracy,
                             float confidence, uint64_t seed) {
    if (!(accuracy >= 0.0f && accuracy <= 1.0f)) throw ParamError("oracle accuracy must be in [0,1]");
    if (!(confidence >= 0.0f && confidence <= 1.0f)) throw ParamError("oracle confidence must be in [0,1]");
    if (rect.x0 >= rect.x1 || rect.y0 >= rect.y1 || rect.x1 > scene.width || rect.y1 > scene.height) {
        throw BoundsError("oracle_forward: rect outside scene");
    }
    size_t h = rect.height(), w = rect.width();
    size_t nc = scene.num_classes;
    SegPrediction out;
    out.height = h;
    out.width = w;
    out.labels.resize(h * w);
    out.probs.assign(h * w, confidence);
    uint64_t key = splitmix64(seed);
    for (size_t y = 0; y < h; ++y) {
        for (size_t x = 0; x < w; ++x) {
            // Hash over scene coordinates so disjoint rects draw independent
            // errors and the same rect always reproduces.
            uint64_t px = (rect.y0 + y) * scene.width + (rect.x0 + x);
            uint16_t gt = scene.labels(rect.y0 + y, rect.x0 + x);
            uint16_t lab = gt;
            if (hash_unit(hash_mix(key, px, 1)) >= accuracy) {
                uint64_t off = nc > 1 ? 1 + hash_mix(key, px, 2) % (nc - 1) : 0;
                lab = static_cast<uint16_t>((gt + off) % nc);
            }
            out.labels[y * w + x] = lab;
        }
    }
    return out;
}

namespace detail {

void init_uniform(Rng& rng, float* data, size_t n, size_t fan_in) {
    float bound = 1.0f / std::sqrt(static_cast<float>(fan_in));
    for (size_t i = 0; i < n; ++i) data[i] = rng.uniform(-bound, bound);
}

LinearLayer make_linear(Rng& rng, size_t in, size_t out) {
    LinearLayer layer;
    layer.w = Tensor({in, out});
    layer.b.resize(out);
    init_uniform(rng, layer.w.data(), layer.w.size(), in);
    init_uniform(rng, layer.b.data(), layer.b.size(), in);
    return layer;
}

namespace {
constexpr char kWeightMagic[7] = {'S', 'K', 'Y', 'W', 'G', 'T', '1'};
}

void save_params(const std::filesystem::path& path,
                 const std::vector<std::pair<float*, size_t>>& views) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot open " + path.string() + " for writing");
    os.write(kWeightMagic, sizeof(kWeightMagic));
    for (const auto& [ptr, n] : views) {
        static_assert(sizeof(float) == 4);
        os.write(reinterpret_cast<const char*>(ptr), static_cast<std::streamsize>(n * 4));
    }
    if (!os) throw Error("write failed for " + path.string());
}

void load_params(const std::filesystem::path& path,
                 const std::vector<std::pair<float*, size_t>>& views) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot open " + path.string());
    char magic[sizeof(kWeightMagic)];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kWeightMagic, sizeof(magic)) != 0) {
        throw FrameError("not a weight file: " + path.string());
    }
    size_t expected = 0;
    for (const auto& [ptr, n] : views) expected += n;
    is.seekg(0, std::ios::end);
    size_t bytes = static_cast<size_t>(is.tellg()) - sizeof(kWeightMagic);
    if (bytes != expected * 4) {
        throw FrameError("weight file holds " + std::to_string(bytes / 4) + " values, expected " +
                         std::to_string(expected));
    }
    is.seekg(sizeof(kWeightMagic), std::ios::beg);
    for (const auto& [ptr, n] : views) {
        is.read(reinterpret_cast<char*>(ptr), static_cast<std::streamsize>(n * 4));
    }
    if (!is) throw FrameError("weight file truncated: " + path.string());
}

Tensor linear_apply(const Tensor& x, const LinearLayer& layer) {
    Tensor out = matmul(x, layer.w);
    size_t rows = out.dim(0), cols = out.dim(1);
    for (size_t i = 0; i < rows; ++i) {
        float* row = out.data() + i * cols;
        for (size_t j = 0; j < cols; ++j) row[j] += layer.b[j];
    }
    return out;
}

}  // namespace detail

}  // namespace skyseg
