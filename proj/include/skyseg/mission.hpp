#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "skyseg/backends.hpp"
#include "skyseg/fusion.hpp"
#include "skyseg/selection.hpp"
#include "skyseg/tta.hpp"
#include "skyseg/wire.hpp"
#include "skyseg/world.hpp"

namespace skyseg {

enum class FusionMode { Replace, Prob };
enum class SelectionMethod { Random, Order, Reorder, Attention };
enum class TtaMode { Off, Local, Cross };
enum class BackendKind { Transformer, Cnn, Oracle };

struct OracleParams {
    float accuracy = 0.95f;
    float confidence = 0.9f;
};

struct LeaderSpec {
    BackendKind kind = BackendKind::Transformer;
    TransformerConfig transformer;
    OracleParams oracle{0.7f, 0.6f};
    // Scene region where the oracle leader's accuracy drops, standing in for
    // a locally hard area of the input.
    std::optional<GeoRect> hotspot;
    float hotspot_accuracy = 0.25f;
};

struct FollowerSpec {
    BackendKind kind = BackendKind::Cnn;  // Cnn or Oracle
    CnnConfig cnn;
    OracleParams oracle{0.95f, 0.9f};
};

// Deterministic compute-latency model: phase latency = flops / rate. Keeps
// reports reproducible byte-for-byte across runs.
struct ComputeModel {
    double leader_flops_per_s = 20e9;
    double follower_flops_per_s = 10e9;
    double oracle_flops_per_pixel = 200.0;
    double fusion_flops_per_pixel = 12.0;
};

struct CorruptionStep {
    uint32_t from_round = 0;
    std::optional<Corruption> kind;  // nullopt = clean
    int severity = 0;
};

struct SceneSpec {
    size_t width = 1024;
    size_t height = 1024;
    size_t num_classes = 6;
};

struct MissionConfig {
    uint64_t seed = 1;
    uint32_t rounds = 3;
    size_t followers = 3;
    FusionMode fusion = FusionMode::Prob;
    SelectionMethod selection = SelectionMethod::Attention;
    TtaMode tta = TtaMode::Cross;
    AggregateMode aggregate = AggregateMode::Mean;
    float alpha = 0.05f;
    SceneSpec scene;
    size_t capture_size = 512;  // leader observation side
    LeaderSpec leader;
    FollowerSpec follower;
    std::optional<Corruption> corruption;
    int severity = 0;
    std::vector<CorruptionStep> schedule;
    NetworkModel network;
    ComputeModel compute;
    SelectionWeights weights;

    void validate() const;
    std::pair<std::optional<Corruption>, int> corruption_at(uint32_t round) const;
};

struct LinkTraffic {
    uint8_t sender = 0;
    uint8_t recipient = 0;
    uint64_t bytes = 0;  // encoded frames, headers included
};

struct RoundReport {
    uint32_t round = 0;
    std::string corruption = "none";
    int severity = 0;

    double miou_coarse = 0.0;
    double miou_fused = 0.0;

    // Phase latencies in seconds; per-follower phases report the maximum
    // across followers since they run in parallel.
    double t_leader_inference = 0.0;
    double t_assignment_tx = 0.0;
    double t_follower_inference = 0.0;
    double t_refinement_tx = 0.0;
    double t_fusion = 0.0;
    double t_tta_exchange = 0.0;
    double t_total = 0.0;

    // Byte accounting. Volume follows the 6 B/pixel and 4 B/channel data
    // model; framing covers dimension words and per-layer channel counts.
    uint64_t assign_volume = 0, assign_framing = 0;
    uint64_t refinement_volume = 0, refinement_framing = 0;
    uint64_t stat_volume = 0, stat_framing = 0;
    uint64_t stat_volume_per_follower = 0;

    std::vector<uint8_t> selected;
    uint32_t refinements_assigned = 0;
    uint32_t refinements_received = 0;
    std::vector<LinkTraffic> links;
};

// Per-round adaptation record for external verification.
struct MissionTrace {
    bool keep_observations = false;
    struct Round {
        Tensor leader_observation;             // set when keep_observations
        StatsSet leader_batch;
        StatsSet leader_adapted;
        std::vector<StatsSet> follower_batch;    // empty entry when no data arrived
        std::vector<StatsSet> follower_adapted;
    };
    StatsSet leader_init;
    std::vector<StatsSet> follower_init;
    std::vector<Round> rounds;
};

struct RoundOutcome {
    SegPrediction fused;
    RoundReport report;
};

// Owns the device runtimes and the adaptation state they carry across
// rounds. Round execution is a single logical event loop; follower paths
// are pure and only modeled as parallel in the latency accounting.
class Mission {
public:
    explicit Mission(MissionConfig cfg);

    const MissionConfig& config() const { return cfg_; }

    // Executes one protocol round against the given scene.
    RoundOutcome run_round(const Scene& scene, uint32_t round);

    // Generates the per-round scene stream and executes every round.
    std::vector<RoundReport> run();

    void set_trace(MissionTrace* trace) { trace_ = trace; }
    void set_message_log(std::ostream* log) { message_log_ = log; }

    const std::optional<StatsSet>& leader_running() const { return leader_running_; }
    const MemoryBank& follower_bank(size_t i) const { return banks_[i]; }
    const TransformerBackend* leader_model() const { return leader_model_.get(); }
    const CnnBackend* follower_model() const { return follower_model_.get(); }

    Scene scene_for_round(uint32_t round) const;

private:
    struct CoarseResult {
        SegPrediction at_capture;
        AttentionStack attention;
        StatsSet batch;
        double flops = 0.0;
    };

    CoarseResult leader_infer(const Observation& obs, const Scene& scene, uint32_t round);
    void calibrate();
    std::vector<size_t> pick_patches(const AttentionStack& attention, const Scene& scene,
                                     uint32_t round, std::vector<GeoRect>& rects_out);
    uint64_t send(wire::Message&& msg, uint32_t sequence, RoundReport& report,
                  std::optional<wire::Message>& delivered);

    MissionConfig cfg_;
    std::unique_ptr<TransformerBackend> leader_model_;
    std::unique_ptr<CnnBackend> follower_model_;  // shared weights across followers
    std::optional<StatsSet> leader_running_;
    std::vector<MemoryBank> banks_;
    MissionTrace* trace_ = nullptr;
    std::ostream* message_log_ = nullptr;
};

// Convenience wrapper: builds the mission, runs every round, returns the
// reports.
std::vector<RoundReport> run_mission(const MissionConfig& cfg, MissionTrace* trace = nullptr,
                                     std::ostream* message_log = nullptr);

const char* to_string(FusionMode m);
const char* to_string(SelectionMethod m);
const char* to_string(TtaMode m);
const char* to_string(BackendKind k);
const char* to_string(AggregateMode m);

}  // namespace skyseg
