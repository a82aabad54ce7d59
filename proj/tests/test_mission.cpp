#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "skyseg/metrics.hpp"
#include "skyseg/mission.hpp"

using namespace skyseg;

namespace {

MissionConfig oracle_mission() {
    MissionConfig cfg;
    cfg.seed = 100;
    cfg.rounds = 2;
    cfg.followers = 3;
    cfg.scene = SceneSpec{256, 256, 5};
    cfg.capture_size = 128;
    cfg.leader.kind = BackendKind::Oracle;
    cfg.leader.oracle = OracleParams{0.7f, 0.6f};
    cfg.follower.kind = BackendKind::Oracle;
    cfg.follower.oracle = OracleParams{0.95f, 0.9f};
    cfg.tta = TtaMode::Off;
    return cfg;
}

CnnConfig tiny_cnn() {
    CnnConfig cfg;
    cfg.input_size = 32;
    cfg.num_classes = 5;
    cfg.layers = {{8, 3, 2}, {16, 3, 2}, {16, 1, 1}, {24, 1, 1}};
    return cfg;
}

MissionConfig cnn_mission() {
    MissionConfig cfg;
    cfg.seed = 200;
    cfg.rounds = 3;
    cfg.followers = 3;
    cfg.scene = SceneSpec{128, 128, 5};
    cfg.capture_size = 64;
    cfg.leader.kind = BackendKind::Oracle;
    cfg.leader.oracle = OracleParams{0.7f, 0.6f};
    cfg.follower.kind = BackendKind::Cnn;
    cfg.follower.cnn = tiny_cnn();
    cfg.tta = TtaMode::Cross;
    return cfg;
}

bool reports_equal(const RoundReport& a, const RoundReport& b) {
    return a.round == b.round && a.corruption == b.corruption && a.severity == b.severity &&
           a.miou_coarse == b.miou_coarse && a.miou_fused == b.miou_fused &&
           a.t_leader_inference == b.t_leader_inference && a.t_assignment_tx == b.t_assignment_tx &&
           a.t_follower_inference == b.t_follower_inference &&
           a.t_refinement_tx == b.t_refinement_tx && a.t_fusion == b.t_fusion &&
           a.t_tta_exchange == b.t_tta_exchange && a.t_total == b.t_total &&
           a.assign_volume == b.assign_volume && a.refinement_volume == b.refinement_volume &&
           a.stat_volume == b.stat_volume &&
           a.stat_volume_per_follower == b.stat_volume_per_follower && a.selected == b.selected &&
           a.refinements_received == b.refinements_received;
}

}  // namespace

TEST_CASE("a mission without followers degenerates to the coarse prediction") {
    MissionConfig cfg = oracle_mission();
    cfg.followers = 0;
    Mission mission(cfg);
    Scene scene = mission.scene_for_round(0);
    RoundOutcome out = mission.run_round(scene, 0);
    CHECK(out.report.miou_fused == out.report.miou_coarse);
    CHECK(out.report.refinement_volume == 0);
    CHECK(out.report.assign_volume == 0);
    CHECK(out.report.stat_volume == 0);
    CHECK(out.fused.height == 256);
    CHECK(out.fused.width == 256);
}

TEST_CASE("perfect followers with replacement fusion never hurt accuracy") {
    MissionConfig cfg = oracle_mission();
    cfg.fusion = FusionMode::Replace;
    cfg.follower.oracle = OracleParams{1.0f, 1.0f};
    Mission mission(cfg);
    for (uint32_t r = 0; r < 3; ++r) {
        Scene scene = mission.scene_for_round(r);
        RoundOutcome out = mission.run_round(scene, r);
        CHECK(out.report.miou_fused >= out.report.miou_coarse);
    }
}

TEST_CASE("identical configs produce identical report sequences") {
    MissionConfig cfg = cnn_mission();
    std::vector<RoundReport> a = run_mission(cfg);
    std::vector<RoundReport> b = run_mission(cfg);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) CHECK(reports_equal(a[i], b[i]));
}

TEST_CASE("a 100-round mission replays identically") {
    MissionConfig cfg = oracle_mission();
    cfg.scene = SceneSpec{64, 64, 4};
    cfg.capture_size = 32;
    cfg.rounds = 100;
    std::vector<RoundReport> a = run_mission(cfg);
    std::vector<RoundReport> b = run_mission(cfg);
    REQUIRE(a.size() == 100);
    for (size_t i = 0; i < 100; ++i) CHECK(reports_equal(a[i], b[i]));
}

TEST_CASE("round latency is the serial leader time plus the slowest follower path") {
    MissionConfig cfg = cnn_mission();
    cfg.network.loss_rate = 0.0;
    Mission mission(cfg);
    Scene scene = mission.scene_for_round(0);
    RoundReport rep = mission.run_round(scene, 0).report;
    // symmetric followers: the slowest path is the sum of the phase maxima
    double expect = rep.t_leader_inference + rep.t_assignment_tx + rep.t_follower_inference +
                    rep.t_refinement_tx + rep.t_fusion + rep.t_tta_exchange;
    CHECK(rep.t_total == doctest::Approx(expect).epsilon(1e-12));
    CHECK(rep.t_follower_inference > 0.0);
    CHECK(rep.t_assignment_tx > 0.0);
}

TEST_CASE("stat exchange volume is constant per round across a schedule switch") {
    MissionConfig cfg = cnn_mission();
    cfg.rounds = 6;
    cfg.schedule.push_back(CorruptionStep{3, Corruption::Fog, 3});
    std::vector<RoundReport> reports = run_mission(cfg);
    uint64_t channels = tiny_cnn().total_bn_channels();
    uint64_t per_follower = 2 * volume_stats(channels);  // two peers each
    for (const auto& r : reports) {
        CHECK(r.stat_volume_per_follower == per_follower);
        CHECK(r.stat_volume == 3 * per_follower);
        CHECK(r.stat_framing == 3 * 2 * 4 * tiny_cnn().layers.size());
    }
    CHECK(reports[2].corruption == "none");
    CHECK(reports[3].corruption == "fog");
    CHECK(reports[3].severity == 3);
    CHECK(reports[5].corruption == "fog");
}

TEST_CASE("refinement volume matches the byte model per quadrant") {
    MissionConfig cfg = cnn_mission();
    Mission mission(cfg);
    Scene scene = mission.scene_for_round(0);
    RoundReport rep = mission.run_round(scene, 0).report;
    uint64_t per_patch = volume_refinement(64, 64);  // 128x128 scene quadrants
    CHECK(rep.refinement_volume == 3 * per_patch);
    CHECK(rep.refinements_assigned == 3);
    CHECK(rep.refinements_received == 3);
}

TEST_CASE("lost refinements degrade to fusing the received patches") {
    MissionConfig cfg = oracle_mission();
    cfg.rounds = 1;
    cfg.followers = 4;
    cfg.network.loss_rate = 0.5;
    cfg.network.seed = 5;
    bool saw_loss = false;
    for (uint64_t net_seed = 0; net_seed < 8 && !saw_loss; ++net_seed) {
        cfg.network.seed = net_seed;
        std::vector<RoundReport> reports = run_mission(cfg);
        if (reports[0].refinements_received < reports[0].refinements_assigned) saw_loss = true;
        CHECK(reports[0].miou_fused > 0.0);
    }
    CHECK(saw_loss);
}

TEST_CASE("full stat exchange leaves every follower with identical state") {
    MissionConfig cfg = cnn_mission();
    cfg.rounds = 4;
    Mission mission(cfg);
    for (uint32_t r = 0; r < cfg.rounds; ++r) {
        Scene scene = mission.scene_for_round(r);
        mission.run_round(scene, r);
        const StatsSet& first = mission.follower_bank(0).running;
        for (size_t i = 1; i < cfg.followers; ++i) {
            const StatsSet& other = mission.follower_bank(i).running;
            REQUIRE(other.size() == first.size());
            for (size_t l = 0; l < first.size(); ++l) {
                CHECK(other[l].mean == first[l].mean);
                CHECK(other[l].var == first[l].var);
            }
        }
    }
}

TEST_CASE("adapted stats stay inside the envelope of observed batch stats") {
    MissionConfig cfg = cnn_mission();
    cfg.rounds = 5;
    cfg.corruption.reset();
    MissionTrace trace;
    run_mission(cfg, &trace);
    REQUIRE(trace.rounds.size() == 5);

    size_t layers = trace.follower_init[0].size();
    for (size_t l = 0; l < layers; ++l) {
        for (size_t c = 0; c < trace.follower_init[0][l].channels(); ++c) {
            float lo = trace.follower_init[0][l].mean[c];
            float hi = lo;
            for (const auto& round : trace.rounds) {
                for (size_t f = 0; f < 3; ++f) {
                    if (round.follower_batch[f].empty()) continue;
                    float v = round.follower_batch[f][l].mean[c];
                    lo = std::min(lo, v);
                    hi = std::max(hi, v);
                }
            }
            // binary16 quantization of exchanged stats widens the envelope
            // by at most one half-precision ulp
            float slack = 1e-3f * std::max(1.0f, std::max(std::abs(lo), std::abs(hi)));
            for (const auto& round : trace.rounds) {
                float v = round.follower_adapted[0][l].mean[c];
                CHECK(v >= lo - slack);
                CHECK(v <= hi + slack);
            }
        }
    }
}

TEST_CASE("local adaptation matches a single-device EMA trajectory") {
    MissionConfig cfg = cnn_mission();
    cfg.followers = 1;
    cfg.tta = TtaMode::Local;
    cfg.rounds = 6;
    MissionTrace trace;
    run_mission(cfg, &trace);

    StatsSet oracle = trace.follower_init[0];
    for (size_t r = 0; r < trace.rounds.size(); ++r) {
        const StatsSet& batch = trace.rounds[r].follower_batch[0];
        REQUIRE_FALSE(batch.empty());
        oracle = ema_update(oracle, batch, cfg.alpha);
        const StatsSet& adapted = trace.rounds[r].follower_adapted[0];
        for (size_t l = 0; l < oracle.size(); ++l) {
            for (size_t c = 0; c < oracle[l].channels(); ++c) {
                CHECK(adapted[l].mean[c] == doctest::Approx(oracle[l].mean[c]).epsilon(1e-6));
                CHECK(adapted[l].var[c] == doctest::Approx(oracle[l].var[c]).epsilon(1e-6));
            }
        }
    }
}

TEST_CASE("mission config validation rejects bad setups") {
    MissionConfig cfg = oracle_mission();
    cfg.followers = 5;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);

    cfg = oracle_mission();
    cfg.rounds = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);

    cfg = oracle_mission();
    cfg.capture_size = 100;  // does not divide 256
    CHECK_THROWS_AS(cfg.validate(), ConfigError);

    cfg = cnn_mission();
    cfg.follower.cnn.input_size = 48;  // quadrant 64 not a multiple
    CHECK_THROWS_AS(cfg.validate(), ConfigError);

    cfg = oracle_mission();
    cfg.leader.hotspot = GeoRect{0, 0, 999, 999};
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("attention selection targets the hotspot quadrant") {
    MissionConfig cfg = oracle_mission();
    cfg.rounds = 1;
    cfg.followers = 1;
    cfg.leader.hotspot = GeoRect{128, 0, 256, 128};  // top-right quadrant
    cfg.leader.hotspot_accuracy = 0.2f;
    size_t hits = 0;
    for (uint64_t seed = 0; seed < 10; ++seed) {
        cfg.seed = 1000 + seed;
        Mission mission(cfg);
        Scene scene = mission.scene_for_round(0);
        RoundReport rep = mission.run_round(scene, 0).report;
        REQUIRE(rep.selected.size() == 1);
        if (rep.selected[0] == 1) ++hits;
    }
    CHECK(hits == 10);
}

TEST_CASE("message log lines are emitted per message") {
    MissionConfig cfg = oracle_mission();
    cfg.rounds = 1;
    std::ostringstream log;
    run_mission(cfg, nullptr, &log);
    std::string text = log.str();
    size_t lines = std::count(text.begin(), text.end(), '\n');
    // 3 assignments + 3 refinements, oracle followers exchange no stats
    CHECK(lines == 6);
    CHECK(text.find("variant=task_assign") != std::string::npos);
    CHECK(text.find("variant=refinement") != std::string::npos);
}

TEST_CASE("transformer leader mission runs end to end") {
    MissionConfig cfg;
    cfg.seed = 300;
    cfg.rounds = 1;
    cfg.followers = 2;
    cfg.scene = SceneSpec{512, 512, 4};
    cfg.capture_size = 512;
    cfg.leader.kind = BackendKind::Transformer;
    cfg.leader.transformer.num_classes = 4;
    cfg.follower.kind = BackendKind::Cnn;
    cfg.follower.cnn = tiny_cnn();
    cfg.follower.cnn.num_classes = 4;
    cfg.follower.cnn.input_size = 64;  // quadrants are 256x256
    cfg.tta = TtaMode::Cross;

    std::vector<RoundReport> reports = run_mission(cfg);
    REQUIRE(reports.size() == 1);
    CHECK(reports[0].miou_coarse > 0.0);
    CHECK(reports[0].refinements_received == 2);
    CHECK(reports[0].selected.size() == 2);
    CHECK(reports[0].t_leader_inference > reports[0].t_follower_inference);
}
