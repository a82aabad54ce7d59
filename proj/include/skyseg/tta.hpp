#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "skyseg/tensor.hpp"

namespace skyseg {

// Running mean/variance pair for one normalization layer. Length 1 for the
// scalar LN case, per-channel for BN.
struct NormStats {
    std::vector<float> mean;
    std::vector<float> var;
    uint64_t t = 0;

    NormStats() = default;
    NormStats(std::vector<float> m, std::vector<float> v, uint64_t step = 0);
    static NormStats scalar(float m, float v, uint64_t step = 0);

    size_t channels() const { return mean.size(); }
    bool same_layout(const NormStats& other) const { return mean.size() == other.mean.size(); }
};

// One entry per normalization layer of a model.
using StatsSet = std::vector<NormStats>;

bool same_layout(const StatsSet& a, const StatsSet& b);
size_t total_channels(const StatsSet& s);

enum class AggregateMode { Mean, Sum };

// Per-device store of the latest statistics received from peers, plus this
// device's running EMA state.
struct MemoryBank {
    uint8_t own_id = 0;
    float alpha = 0.05f;
    AggregateMode aggregate = AggregateMode::Mean;
    StatsSet running;
    std::map<uint8_t, StatsSet> peers;

    // Records a peer's current-round statistics; ConfigError on layout
    // mismatch with the running state.
    void store(uint8_t peer_id, StatsSet stats);
    void clear_round() { peers.clear(); }
};

// Scalar mean/population-variance over every element of the tensor.
NormStats ln_batch_stats(const Tensor& x);

// Per-channel spatial mean/population-variance of a single C×H×W sample
// (given as rank-3 C,H,W or rank-4 1,C,H,W).
NormStats bn_batch_stats(const Tensor& x);

// Convex blend of running and incoming statistics; increments the counter.
NormStats ema_update(const NormStats& prev, const NormStats& incoming, float alpha);
StatsSet ema_update(const StatsSet& prev, const StatsSet& incoming, float alpha);

// Combines this round's local statistics with every stored peer entry,
// summing in ascending device-id order so all devices produce bit-identical
// aggregates. Mean mode divides by the entry count; Sum mode keeps the raw
// per-channel sums.
StatsSet aggregate_peers(const MemoryBank& bank, const StatsSet& local_batch);
NormStats aggregate_peers(const MemoryBank& bank, const NormStats& local_batch);

// One leader adaptation step: EMA of the model's running LN statistics
// toward this observation's batch statistics.
StatsSet adapt_step_leader(const std::optional<StatsSet>& running, const StatsSet& batch, float alpha);
NormStats adapt_step_leader(const std::optional<NormStats>& running, const NormStats& batch, float alpha);

// One follower adaptation step: aggregate across devices, then EMA against
// the bank's running state. Updates bank.running in place and returns it.
const StatsSet& adapt_step_follower(MemoryBank& bank, const StatsSet& local_batch);

}  // namespace skyseg
