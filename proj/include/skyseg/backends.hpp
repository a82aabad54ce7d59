#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "skyseg/tensor.hpp"
#include "skyseg/tta.hpp"
#include "skyseg/world.hpp"

namespace skyseg {

// Per-pixel class labels plus the winning-class probability; the unit every
// backend emits and the protocol exchanges.
struct SegPrediction {
    size_t height = 0;
    size_t width = 0;
    std::vector<uint16_t> labels;   // row-major
    std::vector<float> probs;       // row-major, in [0,1]
    std::optional<Tensor> class_probs;  // H×W×C, when retained

    // Argmax/max over the class axis of an H×W×C probability tensor; ties
    // resolve to the lowest class id.
    static SegPrediction from_class_probs(const Tensor& hwc, bool keep_class_probs = false);

    uint16_t label_at(size_t y, size_t x) const { return labels[y * width + x]; }
    float prob_at(size_t y, size_t x) const { return probs[y * width + x]; }
    size_t size() const { return labels.size(); }

    // Checks the structural invariants; throws on violation.
    void validate(size_t num_classes) const;
};

// Spatial attention maps per stage and per block. Each map is the mean over
// queries of that block's softmaxed score matrix, reshaped onto the stage's
// token grid, so every map sums to 1.
struct AttentionStack {
    static constexpr std::array<size_t, 4> kStageSizes{128, 64, 32, 16};
    std::array<std::array<Tensor, 2>, 4> blocks;  // [stage][block], each S×S

    const Tensor& map(size_t stage, size_t block) const { return blocks[stage][block]; }
};

struct LinearLayer {
    Tensor w;               // in × out
    std::vector<float> b;   // out
};

// Scaled dot-product attention scores: softmax over keys of q·kᵀ/√d.
Tensor attention_scores(const Tensor& q, const Tensor& k, size_t d);

// ---------------------------------------------------------------------------
// Hierarchical attention segmenter (leader). Four stages of two blocks each
// over a 4× patch-embedded pyramid; scalar-statistic LN layers expose
// adaptation slots.

struct TransformerConfig {
    size_t input_size = 512;
    size_t patch_size = 4;
    std::array<size_t, 4> base_dims{64, 128, 160, 256};
    size_t dim_divisor = 4;
    size_t mlp_ratio = 2;
    size_t num_classes = 6;

    std::array<size_t, 4> dims() const;
    std::array<size_t, 4> stage_grid() const;  // tokens per side, per stage
    void validate() const;
};

struct LnLayer {
    std::vector<float> gamma, beta;
};

struct TransformerBlockWeights {
    LnLayer ln1;
    LinearLayer q, k, v, o;
    LnLayer ln2;
    LinearLayer mlp1, mlp2;
};

struct TransformerStageWeights {
    LinearLayer embed;
    std::array<TransformerBlockWeights, 2> blocks;
};

class TransformerBackend {
public:
    TransformerBackend(TransformerConfig cfg, uint64_t weight_seed);

    const TransformerConfig& config() const { return cfg_; }
    uint64_t weight_seed() const { return seed_; }
    const TransformerStageWeights& stage(size_t i) const { return stages_[i]; }
    const LinearLayer& head() const { return head_; }

    // Two LN layers per block, two blocks per stage: 16 slots, ordered
    // stage-major then block-major, ln1 before ln2.
    size_t ln_layer_count() const { return 16; }

    uint64_t flop_estimate() const;

    void save_weights(const std::filesystem::path& path) const;
    void load_weights(const std::filesystem::path& path);

private:
    std::vector<std::pair<float*, size_t>> param_views();

    TransformerConfig cfg_;
    uint64_t seed_;
    std::array<TransformerStageWeights, 4> stages_;
    LinearLayer head_;
};

struct LeaderForward {
    SegPrediction prediction;   // at input resolution
    AttentionStack attention;
    StatsSet ln_stats;          // per-sample scalar stats, one per LN slot
};

// Forward pass; when adapted_ln is given it must hold one scalar entry per
// LN slot and replaces the per-sample statistics.
LeaderForward transformer_forward(const TransformerBackend& b, const Tensor& image,
                                  const StatsSet* adapted_ln = nullptr);

// ---------------------------------------------------------------------------
// Convolutional segmenter (follower). Every conv layer carries a BN layer
// with per-channel statistics; the default configuration totals 60 BN layers
// and 17872 channels.

struct CnnLayerSpec {
    size_t out_channels;
    size_t kernel;   // 1 or 3
    size_t stride;   // 1 or 2
};

struct CnnConfig {
    size_t input_size = 128;
    size_t num_classes = 6;
    std::vector<CnnLayerSpec> layers = default_layers();

    static std::vector<CnnLayerSpec> default_layers();
    size_t total_bn_channels() const;
    size_t final_grid() const;  // spatial side after all strides
    void validate() const;
};

struct CnnLayer {
    CnnLayerSpec spec;
    size_t in_channels = 0;
    Tensor w;                    // out × in × k × k
    std::vector<float> bias;
    std::vector<float> gamma, beta;
    NormStats running;           // training-time statistics
};

class CnnBackend {
public:
    CnnBackend(CnnConfig cfg, uint64_t weight_seed);

    const CnnConfig& config() const { return cfg_; }
    uint64_t weight_seed() const { return seed_; }
    size_t bn_layer_count() const { return layers_.size(); }
    size_t total_bn_channels() const { return cfg_.total_bn_channels(); }
    const CnnLayer& layer(size_t i) const { return layers_[i]; }
    const LinearLayer& head() const { return head_; }

    StatsSet running_stats() const;
    void set_running_stats(const StatsSet& stats);

    uint64_t flop_estimate() const;

    void save_weights(const std::filesystem::path& path) const;
    void load_weights(const std::filesystem::path& path);

private:
    std::vector<std::pair<float*, size_t>> param_views();

    CnnConfig cfg_;
    uint64_t seed_;
    std::vector<CnnLayer> layers_;
    LinearLayer head_;
};

enum class CnnMode { Frozen, Collecting };

struct FollowerForward {
    SegPrediction prediction;   // at input resolution
    StatsSet batch_stats;       // one entry per BN layer; empty in Frozen mode
};

// Forward pass. Normalization statistics come from adapted_bn when given;
// otherwise Collecting mode normalizes each layer with its own batch
// statistics and Frozen mode with the stored running statistics.
FollowerForward cnn_forward(const CnnBackend& b, const Tensor& image, CnnMode mode,
                            const StatsSet* adapted_bn = nullptr);

// ---------------------------------------------------------------------------
// Oracle backend: ground truth corrupted by an independent per-pixel error
// probability, with a constant reported confidence. Used to study protocol
// behaviour with controlled accuracy.

SegPrediction oracle_forward(const Scene& scene, const GeoRect& rect, float accuracy,
                             float confidence, uint64_t seed);

}  // namespace skyseg
