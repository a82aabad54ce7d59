#include "skyseg/mission.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>

#include "skyseg/metrics.hpp"
#include "skyseg/rng.hpp"

namespace skyseg {

namespace {

// Seed-stream tags; every random decision in a mission derives from the
// config seed through one of these.
enum SeedTag : uint64_t {
    kTagScene = 1,
    kTagCalib = 2,
    kTagCorrupt = 3,
    kTagOracle = 4,
    kTagSelect = 5,
    kTagLeaderWeights = 6,
    kTagFollowerWeights = 7,
    kTagHotspot = 8,
};

StatsSet quantize_stats(const StatsSet& stats) {
    StatsSet out = stats;
    for (NormStats& layer : out) {
        for (float& v : layer.mean) v = wire::f16_to_f32(wire::f32_to_f16(v));
        for (float& v : layer.var) v = wire::f16_to_f32(wire::f32_to_f16(v));
    }
    return out;
}

SegPrediction upsample_prediction(const SegPrediction& pred, size_t target_h, size_t target_w) {
    if (pred.height == target_h && pred.width == target_w) return pred;
    LabelMap labels(pred.height, pred.width, pred.labels);
    Tensor probs({pred.height, pred.width}, pred.probs);
    SegPrediction out;
    out.height = target_h;
    out.width = target_w;
    out.labels = upsample_nearest(labels, target_h, target_w).labels;
    Tensor up = upsample_nearest(probs, target_h, target_w);
    out.probs.assign(up.values().begin(), up.values().end());
    return out;
}

}  // namespace

const char* to_string(FusionMode m) { return m == FusionMode::Replace ? "replace" : "prob"; }

const char* to_string(SelectionMethod m) {
    switch (m) {
        case SelectionMethod::Random: return "random";
        case SelectionMethod::Order: return "order";
        case SelectionMethod::Reorder: return "reorder";
        case SelectionMethod::Attention: return "attention";
    }
    return "?";
}

const char* to_string(TtaMode m) {
    switch (m) {
        case TtaMode::Off: return "off";
        case TtaMode::Local: return "local";
        case TtaMode::Cross: return "cross";
    }
    return "?";
}

const char* to_string(BackendKind k) {
    switch (k) {
        case BackendKind::Transformer: return "transformer";
        case BackendKind::Cnn: return "cnn";
        case BackendKind::Oracle: return "oracle";
    }
    return "?";
}

const char* to_string(AggregateMode m) { return m == AggregateMode::Mean ? "mean" : "sum"; }

void MissionConfig::validate() const {
    if (rounds == 0) throw ConfigError("mission needs at least one round");
    if (followers > 4) throw ConfigError("2x2 grid supports at most 4 followers");
    if (!(alpha >= 0.0f && alpha <= 1.0f)) throw ConfigError("alpha must be in [0,1]");
    if (severity < 0 || severity > 5) throw ConfigError("severity must be in [0,5]");
    for (const auto& step : schedule) {
        if (step.severity < 0 || step.severity > 5) throw ConfigError("schedule severity must be in [0,5]");
    }
    if (scene.width < 2 || scene.height < 2) throw ConfigError("scene dims must be at least 2");
    if (scene.num_classes < 2 || scene.num_classes > 65536) {
        throw ConfigError("scene num_classes must be in [2, 65536]");
    }
    if (capture_size == 0 || capture_size > scene.width || capture_size > scene.height) {
        throw ConfigError("capture size must be positive and at most the scene dims");
    }
    if (scene.width % capture_size != 0 || scene.height % capture_size != 0) {
        throw ConfigError("scene dims must be integer multiples of the capture size");
    }
    if (leader.kind == BackendKind::Cnn) throw ConfigError("leader backend must be transformer or oracle");
    if (follower.kind == BackendKind::Transformer) {
        throw ConfigError("follower backend must be cnn or oracle");
    }
    if (leader.kind == BackendKind::Transformer) {
        leader.transformer.validate();
        if (leader.transformer.input_size != capture_size) {
            throw ConfigError("transformer input size must equal the capture size");
        }
        if (leader.transformer.num_classes != scene.num_classes) {
            throw ConfigError("transformer num_classes must match the scene");
        }
    } else {
        if (!(leader.oracle.accuracy >= 0.0f && leader.oracle.accuracy <= 1.0f) ||
            !(leader.oracle.confidence >= 0.0f && leader.oracle.confidence <= 1.0f)) {
            throw ConfigError("leader oracle accuracy/confidence must be in [0,1]");
        }
        if (leader.hotspot) {
            const GeoRect& h = *leader.hotspot;
            if (h.x0 >= h.x1 || h.y0 >= h.y1 || h.x1 > scene.width || h.y1 > scene.height) {
                throw ConfigError("leader hotspot rect outside the scene");
            }
        }
    }
    if (followers > 0) {
        if (scene.width % 2 != 0 || scene.height % 2 != 0) {
            throw ConfigError("scene dims must be even to split into quadrants");
        }
        if (follower.kind == BackendKind::Cnn) {
            follower.cnn.validate();
            if (follower.cnn.num_classes != scene.num_classes) {
                throw ConfigError("cnn num_classes must match the scene");
            }
            if ((scene.width / 2) % follower.cnn.input_size != 0 ||
                (scene.height / 2) % follower.cnn.input_size != 0) {
                throw ConfigError("quadrant dims must be integer multiples of the cnn input size");
            }
        } else {
            if (!(follower.oracle.accuracy >= 0.0f && follower.oracle.accuracy <= 1.0f) ||
                !(follower.oracle.confidence >= 0.0f && follower.oracle.confidence <= 1.0f)) {
                throw ConfigError("follower oracle accuracy/confidence must be in [0,1]");
            }
        }
    }
    if (!(network.bandwidth_bytes_per_s > 0.0)) throw ConfigError("network bandwidth must be positive");
    if (network.rtt_s < 0.0) throw ConfigError("network rtt must be non-negative");
    if (!(network.loss_rate >= 0.0 && network.loss_rate <= 1.0)) {
        throw ConfigError("network loss rate must be in [0,1]");
    }
    if (!(compute.leader_flops_per_s > 0.0) || !(compute.follower_flops_per_s > 0.0)) {
        throw ConfigError("compute rates must be positive");
    }
    weights.validate();
}

std::pair<std::optional<Corruption>, int> MissionConfig::corruption_at(uint32_t round) const {
    std::optional<Corruption> kind = corruption;
    int sev = severity;
    std::vector<CorruptionStep> steps = schedule;
    std::stable_sort(steps.begin(), steps.end(),
                     [](const CorruptionStep& a, const CorruptionStep& b) { return a.from_round < b.from_round; });
    for (const auto& step : steps) {
        if (round >= step.from_round) {
            kind = step.kind;
            sev = step.severity;
        }
    }
    return {kind, sev};
}

Mission::Mission(MissionConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    if (cfg_.leader.kind == BackendKind::Transformer) {
        leader_model_ = std::make_unique<TransformerBackend>(cfg_.leader.transformer,
                                                             hash_mix(cfg_.seed, kTagLeaderWeights));
    }
    if (cfg_.followers > 0 && cfg_.follower.kind == BackendKind::Cnn) {
        // Followers run the same pretrained weights; one shared instance.
        follower_model_ = std::make_unique<CnnBackend>(cfg_.follower.cnn,
                                                       hash_mix(cfg_.seed, kTagFollowerWeights));
    }
    banks_.resize(cfg_.followers);
    for (size_t i = 0; i < banks_.size(); ++i) {
        banks_[i].own_id = static_cast<uint8_t>(1 + i);
        banks_[i].alpha = cfg_.alpha;
        banks_[i].aggregate = cfg_.aggregate;
    }
    calibrate();
}

Scene Mission::scene_for_round(uint32_t round) const {
    return generate_scene(hash_mix(cfg_.seed, kTagScene, round), cfg_.scene.width, cfg_.scene.height,
                          cfg_.scene.num_classes);
}

void Mission::calibrate() {
    Scene calib = generate_scene(hash_mix(cfg_.seed, kTagCalib), cfg_.scene.width, cfg_.scene.height,
                                 cfg_.scene.num_classes);
    Observation obs = leader_capture(calib, cfg_.capture_size, cfg_.capture_size);
    if (leader_model_) {
        LeaderForward fwd = transformer_forward(*leader_model_, obs.image, nullptr);
        leader_running_ = fwd.ln_stats;
    } else {
        leader_running_ = StatsSet{ln_batch_stats(obs.image)};
    }
    if (follower_model_) {
        size_t in = cfg_.follower.cnn.input_size;
        Tensor img = area_resize(calib.image, in, in);
        FollowerForward fwd = cnn_forward(*follower_model_, img, CnnMode::Collecting, nullptr);
        follower_model_->set_running_stats(fwd.batch_stats);
        for (auto& bank : banks_) bank.running = fwd.batch_stats;
    }
}

Mission::CoarseResult Mission::leader_infer(const Observation& obs, const Scene& scene,
                                            uint32_t round) {
    CoarseResult res;
    if (leader_model_) {
        const StatsSet* adapted =
            (cfg_.tta != TtaMode::Off && leader_running_) ? &*leader_running_ : nullptr;
        LeaderForward fwd = transformer_forward(*leader_model_, obs.image, adapted);
        res.at_capture = std::move(fwd.prediction);
        res.attention = std::move(fwd.attention);
        res.batch = std::move(fwd.ln_stats);
        res.flops = static_cast<double>(leader_model_->flop_estimate());
        return res;
    }

    // Oracle leader: draw the coarse prediction against majority-pooled
    // ground truth, then build the attention pyramid from its own error map
    // so attention mass tracks the regions that need refinement.
    size_t cap = cfg_.capture_size;
    size_t fy = scene.height / cap, fx = scene.width / cap;
    Scene coarse_scene;
    coarse_scene.width = cap;
    coarse_scene.height = cap;
    coarse_scene.num_classes = scene.num_classes;
    coarse_scene.labels =
        (fy == 1 && fx == 1) ? scene.labels : downsample_majority(scene.labels, fy, fx);

    const OracleParams& op = cfg_.leader.oracle;
    res.at_capture = oracle_forward(coarse_scene, coarse_scene.full_rect(), op.accuracy,
                                    op.confidence, hash_mix(cfg_.seed, kTagOracle, round, 0));
    if (cfg_.leader.hotspot) {
        const GeoRect& hs = *cfg_.leader.hotspot;
        GeoRect hrect{hs.x0 / fx, hs.y0 / fy, (hs.x1 + fx - 1) / fx, (hs.y1 + fy - 1) / fy};
        hrect.x1 = std::min(hrect.x1, cap);
        hrect.y1 = std::min(hrect.y1, cap);
        if (hrect.x0 < hrect.x1 && hrect.y0 < hrect.y1) {
            SegPrediction hot =
                oracle_forward(coarse_scene, hrect, cfg_.leader.hotspot_accuracy, op.confidence,
                               hash_mix(cfg_.seed, kTagHotspot, round, 0));
            for (size_t y = 0; y < hrect.height(); ++y) {
                for (size_t x = 0; x < hrect.width(); ++x) {
                    size_t dst = (hrect.y0 + y) * cap + hrect.x0 + x;
                    res.at_capture.labels[dst] = hot.labels[y * hrect.width() + x];
                    res.at_capture.probs[dst] = hot.probs[y * hrect.width() + x];
                }
            }
        }
    }

    Tensor err({cap, cap});
    for (size_t i = 0; i < cap * cap; ++i) {
        err.data()[i] = res.at_capture.labels[i] != coarse_scene.labels.labels[i] ? 1.0f : 0.0f;
    }
    Tensor base = (cap == 128) ? err : area_resize(err, 128, 128);
    constexpr std::array<size_t, 4> windows{1, 2, 4, 8};
    for (size_t s = 0; s < 4; ++s) {
        Tensor map = windows[s] == 1 ? base : avg_pool2d(base, windows[s]);
        res.attention.blocks[s][0] = map;
        res.attention.blocks[s][1] = std::move(map);
    }
    res.batch = StatsSet{ln_batch_stats(obs.image)};
    res.flops = static_cast<double>(cap) * cap * cfg_.compute.oracle_flops_per_pixel;
    return res;
}

std::vector<size_t> Mission::pick_patches(const AttentionStack& attention, const Scene& scene,
                                          uint32_t round, std::vector<GeoRect>& rects_out) {
    size_t k = cfg_.followers;
    auto quads = quadrant_rects(scene.full_rect());
    std::vector<size_t> chosen;
    switch (cfg_.selection) {
        case SelectionMethod::Attention: {
            PatchRanking ranking = select_from_attention(attention, cfg_.weights, k, scene.full_rect());
            for (const auto& p : ranking.ranked) chosen.push_back(p.index);
            break;
        }
        case SelectionMethod::Random: {
            std::array<size_t, 4> perm{0, 1, 2, 3};
            Rng rng(hash_mix(cfg_.seed, kTagSelect, round));
            for (size_t i = 3; i > 0; --i) std::swap(perm[i], perm[rng.index(i + 1)]);
            chosen.assign(perm.begin(), perm.begin() + k);
            break;
        }
        case SelectionMethod::Order: {
            for (size_t i = 0; i < k; ++i) chosen.push_back(i);
            break;
        }
        case SelectionMethod::Reorder: {
            for (size_t i = 0; i < k; ++i) chosen.push_back(3 - i);
            break;
        }
    }
    rects_out.clear();
    for (size_t idx : chosen) rects_out.push_back(quads[idx]);
    return chosen;
}

uint64_t Mission::send(wire::Message&& msg, uint32_t sequence, RoundReport& report,
                       std::optional<wire::Message>& delivered) {
    std::vector<uint8_t> frame = wire::encode(msg);
    if (message_log_) *message_log_ << wire::log_line(msg, frame) << '\n';
    report.links.push_back(LinkTraffic{msg.sender, msg.recipient, frame.size()});
    delivered.reset();
    if (!message_lost(cfg_.network, msg.round, msg.sender, msg.recipient, sequence)) {
        delivered = wire::decode(frame);
    }
    return frame.size();
}

RoundOutcome Mission::run_round(const Scene& scene, uint32_t round) {
    if (scene.width != cfg_.scene.width || scene.height != cfg_.scene.height ||
        scene.num_classes != cfg_.scene.num_classes) {
        throw ConfigError("scene does not match the mission's scene spec");
    }

    RoundOutcome out;
    RoundReport& rep = out.report;
    rep.round = round;
    auto [kind, sev] = cfg_.corruption_at(round);
    if (kind && sev > 0) {
        rep.corruption = corruption_name(*kind);
        rep.severity = sev;
    }

    Observation obs = leader_capture(scene, cfg_.capture_size, cfg_.capture_size);
    if (kind && sev > 0) obs = apply_corruption(obs, *kind, sev, hash_mix(cfg_.seed, kTagCorrupt, round, 0));

    CoarseResult coarse = leader_infer(obs, scene, round);
    rep.t_leader_inference = coarse.flops / cfg_.compute.leader_flops_per_s;

    SegPrediction coarse_up = upsample_prediction(coarse.at_capture, scene.height, scene.width);
    rep.miou_coarse = miou(LabelMap(scene.height, scene.width, coarse_up.labels), scene.labels,
                           scene.num_classes);

    size_t k = cfg_.followers;
    std::vector<GeoRect> rects;
    std::vector<size_t> chosen;
    if (k > 0) {
        chosen = pick_patches(coarse.attention, scene, round, rects);
        for (size_t idx : chosen) rep.selected.push_back(static_cast<uint8_t>(idx));
        rep.refinements_assigned = static_cast<uint32_t>(chosen.size());
    }

    Refinements received;
    std::vector<StatsSet> follower_batch(k);
    std::array<GeoRect, 4> quads{};
    if (k > 0) quads = quadrant_rects(scene.full_rect());
    double max_path = 0.0;
    uint32_t seq = 0;

    for (size_t i = 0; i < k; ++i) {
        uint8_t fid = static_cast<uint8_t>(1 + i);

        wire::Message assign;
        assign.sender = 0;
        assign.recipient = fid;
        assign.round = round;
        assign.body = wire::TaskAssign{{rects[i]}};
        rep.assign_volume += wire::volume_size(assign);
        rep.assign_framing += wire::framing_size(assign);
        std::optional<wire::Message> delivered;
        uint64_t assign_bytes = send(std::move(assign), seq++, rep, delivered);
        double t_assign = transmission_time(assign_bytes, cfg_.network);
        rep.t_assignment_tx = std::max(rep.t_assignment_tx, t_assign);
        double path = t_assign;

        if (delivered) {
            GeoRect rect = std::get<wire::TaskAssign>(delivered->body).rects.at(0);
            Observation fobs = follower_capture(scene, rect);
            if (kind && sev > 0) {
                fobs = apply_corruption(fobs, *kind, sev, hash_mix(cfg_.seed, kTagCorrupt, round, fid));
            }

            SegPrediction pred;
            double flops;
            if (follower_model_) {
                size_t in = cfg_.follower.cnn.input_size;
                Tensor img = area_resize(fobs.image, in, in);
                CnnMode mode = cfg_.tta == TtaMode::Off ? CnnMode::Frozen : CnnMode::Collecting;
                const StatsSet* adapted =
                    cfg_.tta == TtaMode::Off ? nullptr : &banks_[i].running;
                FollowerForward fwd = cnn_forward(*follower_model_, img, mode, adapted);
                pred = upsample_prediction(fwd.prediction, rect.height(), rect.width());
                follower_batch[i] = std::move(fwd.batch_stats);
                flops = static_cast<double>(follower_model_->flop_estimate());
            } else {
                pred = oracle_forward(scene, rect, cfg_.follower.oracle.accuracy,
                                      cfg_.follower.oracle.confidence,
                                      hash_mix(cfg_.seed, kTagOracle, round, fid));
                flops = static_cast<double>(rect.width()) * rect.height() *
                        cfg_.compute.oracle_flops_per_pixel;
            }
            double t_inf = flops / cfg_.compute.follower_flops_per_s;
            rep.t_follower_inference = std::max(rep.t_follower_inference, t_inf);
            path += t_inf;

            wire::Message refine;
            refine.sender = fid;
            refine.recipient = 0;
            refine.round = round;
            refine.body = wire::Refinement::from_prediction(static_cast<uint8_t>(chosen[i]), pred);
            rep.refinement_volume += wire::volume_size(refine);
            rep.refinement_framing += wire::framing_size(refine);
            std::optional<wire::Message> refine_rx;
            uint64_t refine_bytes = send(std::move(refine), seq++, rep, refine_rx);
            double t_refine = transmission_time(refine_bytes, cfg_.network);
            rep.t_refinement_tx = std::max(rep.t_refinement_tx, t_refine);
            path += t_refine;

            if (refine_rx) {
                const auto& body = std::get<wire::Refinement>(refine_rx->body);
                SegPrediction rx;
                rx.height = body.height;
                rx.width = body.width;
                rx.labels = body.labels;
                rx.probs = body.probs;
                received.emplace_back(quads[body.patch_index & 3], std::move(rx));
                ++rep.refinements_received;
            }
        }
        max_path = std::max(max_path, path);
    }

    SegPrediction fused = cfg_.fusion == FusionMode::Replace
                              ? replacement_fusion(coarse_up, received)
                              : probability_fusion(coarse_up, received);
    if (!received.empty()) {
        rep.t_fusion = static_cast<double>(scene.width) * scene.height *
                       cfg_.compute.fusion_flops_per_pixel / cfg_.compute.leader_flops_per_s;
    }
    rep.miou_fused =
        miou(LabelMap(scene.height, scene.width, fused.labels), scene.labels, scene.num_classes);

    // Statistics adaptation: the leader updates locally; in Cross mode the
    // followers exchange their batch statistics first. Each device also
    // consumes its own statistics as broadcast (binary16 round-tripped) so
    // a full exchange leaves every device with identical state.
    if (cfg_.tta != TtaMode::Off) {
        if (leader_running_) leader_running_ = adapt_step_leader(leader_running_, coarse.batch, cfg_.alpha);

        if (follower_model_ && k > 0) {
            for (auto& bank : banks_) bank.clear_round();
            bool exchange = cfg_.tta == TtaMode::Cross && k > 1;
            if (exchange) {
                for (size_t i = 0; i < k; ++i) {
                    if (follower_batch[i].empty()) continue;
                    uint64_t per_follower = 0;
                    for (size_t j = 0; j < k; ++j) {
                        if (j == i) continue;
                        wire::Message share;
                        share.sender = static_cast<uint8_t>(1 + i);
                        share.recipient = static_cast<uint8_t>(1 + j);
                        share.round = round;
                        share.body = wire::StatShare{follower_batch[i]};
                        rep.stat_volume += wire::volume_size(share);
                        rep.stat_framing += wire::framing_size(share);
                        per_follower += wire::volume_size(share);
                        std::optional<wire::Message> rx;
                        uint64_t bytes = send(std::move(share), seq++, rep, rx);
                        double t_share = transmission_time(bytes, cfg_.network);
                        rep.t_tta_exchange = std::max(rep.t_tta_exchange, t_share);
                        if (rx) {
                            banks_[j].store(static_cast<uint8_t>(1 + i),
                                            std::get<wire::StatShare>(rx->body).layers);
                        }
                    }
                    rep.stat_volume_per_follower = per_follower;
                }
            }
            for (size_t i = 0; i < k; ++i) {
                if (follower_batch[i].empty()) continue;
                StatsSet local = exchange ? quantize_stats(follower_batch[i]) : follower_batch[i];
                adapt_step_follower(banks_[i], local);
            }
        }
    }

    rep.t_total = rep.t_leader_inference + max_path + rep.t_fusion + rep.t_tta_exchange;

    if (trace_) {
        MissionTrace::Round tr;
        if (trace_->keep_observations) tr.leader_observation = obs.image;
        tr.leader_batch = coarse.batch;
        tr.leader_adapted = leader_running_ ? *leader_running_ : StatsSet{};
        tr.follower_batch = follower_batch;
        tr.follower_adapted.reserve(banks_.size());
        for (const auto& bank : banks_) tr.follower_adapted.push_back(bank.running);
        trace_->rounds.push_back(std::move(tr));
    }

    out.fused = std::move(fused);
    return out;
}

std::vector<RoundReport> Mission::run() {
    std::vector<RoundReport> reports;
    reports.reserve(cfg_.rounds);
    for (uint32_t r = 0; r < cfg_.rounds; ++r) {
        Scene scene = scene_for_round(r);
        reports.push_back(run_round(scene, r).report);
    }
    return reports;
}

std::vector<RoundReport> run_mission(const MissionConfig& cfg, MissionTrace* trace,
                                     std::ostream* message_log) {
    Mission mission(cfg);
    mission.set_trace(trace);
    mission.set_message_log(message_log);
    if (trace) {
        // Re-record the calibration results now that the trace is attached.
        trace->leader_init = mission.leader_running() ? *mission.leader_running() : StatsSet{};
        trace->follower_init.clear();
        for (size_t i = 0; i < cfg.followers; ++i) {
            trace->follower_init.push_back(mission.follower_bank(i).running);
        }
    }
    return mission.run();
}

}  // namespace skyseg
