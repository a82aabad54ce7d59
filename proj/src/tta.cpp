#include "skyseg/tta.hpp"

#include <cmath>
#include <string>

namespace skyseg {

NormStats::NormStats(std::vector<float> m, std::vector<float> v, uint64_t step)
    : mean(std::move(m)), var(std::move(v)), t(step) {
    if (mean.size() != var.size()) throw ConfigError("norm stats mean/var length mismatch");
    for (float x : var) {
        if (!(x >= 0.0f)) throw ParamError("norm stats variance must be non-negative");
    }
}

NormStats NormStats::scalar(float m, float v, uint64_t step) {
    return NormStats({m}, {v}, step);
}

bool same_layout(const StatsSet& a, const StatsSet& b) {
    if (a.size() != b.size()) return false;
    for (size_t i = 0; i < a.size(); ++i) {
        if (!a[i].same_layout(b[i])) return false;
    }
    return true;
}

size_t total_channels(const StatsSet& s) {
    size_t n = 0;
    for (const auto& layer : s) n += layer.channels();
    return n;
}

void MemoryBank::store(uint8_t peer_id, StatsSet stats) {
    if (!running.empty() && !same_layout(running, stats)) {
        throw ConfigError("peer " + std::to_string(peer_id) + " stats layout mismatch");
    }
    if (!peers.empty() && !same_layout(peers.begin()->second, stats)) {
        throw ConfigError("peer " + std::to_string(peer_id) + " stats layout mismatch");
    }
    peers[peer_id] = std::move(stats);
}

NormStats ln_batch_stats(const Tensor& x) {
    if (x.size() == 0) throw ShapeError("ln_batch_stats: empty tensor");
    double sum = 0.0;
    for (float v : x.values()) sum += v;
    double mean = sum / static_cast<double>(x.size());
    double sq = 0.0;
    for (float v : x.values()) {
        double d = v - mean;
        sq += d * d;
    }
    double var = sq / static_cast<double>(x.size());
    return NormStats::scalar(static_cast<float>(mean), static_cast<float>(var));
}

NormStats bn_batch_stats(const Tensor& x) {
    size_t c, h, w;
    const float* base = x.data();
    if (x.rank() == 4) {
        if (x.dim(0) != 1) throw ShapeError("bn_batch_stats: batch dim must be 1");
        c = x.dim(1);
        h = x.dim(2);
        w = x.dim(3);
    } else if (x.rank() == 3) {
        c = x.dim(0);
        h = x.dim(1);
        w = x.dim(2);
    } else {
        throw ShapeError("bn_batch_stats: expected 1×C×H×W or C×H×W tensor");
    }
    size_t spatial = h * w;
    std::vector<float> mean(c), var(c);
    for (size_t ch = 0; ch < c; ++ch) {
        const float* plane = base + ch * spatial;
        double sum = 0.0;
        for (size_t i = 0; i < spatial; ++i) sum += plane[i];
        double m = sum / static_cast<double>(spatial);
        double sq = 0.0;
        for (size_t i = 0; i < spatial; ++i) {
            double d = plane[i] - m;
            sq += d * d;
        }
        mean[ch] = static_cast<float>(m);
        var[ch] = static_cast<float>(sq / static_cast<double>(spatial));
    }
    return NormStats(std::move(mean), std::move(var));
}

NormStats ema_update(const NormStats& prev, const NormStats& incoming, float alpha) {
    if (!prev.same_layout(incoming)) throw ConfigError("ema_update: channel layout mismatch");
    if (!(alpha >= 0.0f && alpha <= 1.0f)) throw ParamError("ema_update: alpha must be in [0,1]");
    NormStats out;
    size_t n = prev.channels();
    out.mean.resize(n);
    out.var.resize(n);
    for (size_t i = 0; i < n; ++i) {
        out.mean[i] = (1.0f - alpha) * prev.mean[i] + alpha * incoming.mean[i];
        out.var[i] = (1.0f - alpha) * prev.var[i] + alpha * incoming.var[i];
    }
    out.t = prev.t + 1;
    return out;
}

StatsSet ema_update(const StatsSet& prev, const StatsSet& incoming, float alpha) {
    if (!same_layout(prev, incoming)) throw ConfigError("ema_update: stats set layout mismatch");
    StatsSet out;
    out.reserve(prev.size());
    for (size_t i = 0; i < prev.size(); ++i) out.push_back(ema_update(prev[i], incoming[i], alpha));
    return out;
}

namespace {

StatsSet combine_entries(const std::map<uint8_t, const StatsSet*>& ordered, AggregateMode mode) {
    const StatsSet& first = *ordered.begin()->second;
    size_t layers = first.size();
    StatsSet out;
    out.reserve(layers);
    float scale = mode == AggregateMode::Mean ? 1.0f / static_cast<float>(ordered.size()) : 1.0f;
    for (size_t l = 0; l < layers; ++l) {
        size_t n = first[l].channels();
        NormStats acc;
        acc.mean.assign(n, 0.0f);
        acc.var.assign(n, 0.0f);
        for (const auto& [id, set] : ordered) {
            if (set->size() != layers || (*set)[l].channels() != n) {
                throw ConfigError("aggregate_peers: stats layout mismatch");
            }
            for (size_t i = 0; i < n; ++i) {
                acc.mean[i] += (*set)[l].mean[i];
                acc.var[i] += (*set)[l].var[i];
            }
        }
        if (scale != 1.0f) {
            for (size_t i = 0; i < n; ++i) {
                acc.mean[i] *= scale;
                acc.var[i] *= scale;
            }
        }
        out.push_back(std::move(acc));
    }
    return out;
}

}  // namespace

StatsSet aggregate_peers(const MemoryBank& bank, const StatsSet& local_batch) {
    if (local_batch.empty()) throw ConfigError("aggregate_peers: local stats empty");
    std::map<uint8_t, const StatsSet*> ordered;
    ordered[bank.own_id] = &local_batch;
    for (const auto& [id, set] : bank.peers) {
        if (id == bank.own_id) continue;
        ordered[id] = &set;
    }
    return combine_entries(ordered, bank.aggregate);
}

NormStats aggregate_peers(const MemoryBank& bank, const NormStats& local_batch) {
    StatsSet wrapped{local_batch};
    return aggregate_peers(bank, wrapped)[0];
}

StatsSet adapt_step_leader(const std::optional<StatsSet>& running, const StatsSet& batch, float alpha) {
    if (!running.has_value() || running->empty()) {
        throw StateError("leader statistics not initialized");
    }
    return ema_update(*running, batch, alpha);
}

NormStats adapt_step_leader(const std::optional<NormStats>& running, const NormStats& batch, float alpha) {
    if (!running.has_value()) throw StateError("leader statistics not initialized");
    return ema_update(*running, batch, alpha);
}

const StatsSet& adapt_step_follower(MemoryBank& bank, const StatsSet& local_batch) {
    if (bank.running.empty()) throw StateError("follower statistics not initialized");
    StatsSet aggregate = aggregate_peers(bank, local_batch);
    bank.running = ema_update(bank.running, aggregate, bank.alpha);
    return bank.running;
}

}  // namespace skyseg
