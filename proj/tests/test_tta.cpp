#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "skyseg/rng.hpp"
#include "skyseg/tta.hpp"

using namespace skyseg;

TEST_CASE("ln_batch_stats on constants and a hand pair") {
    CHECK_THROWS_AS(ln_batch_stats(Tensor{}), ShapeError);

    NormStats c = ln_batch_stats(Tensor::full({4, 8, 8}, 2.5f));
    CHECK(c.mean[0] == doctest::Approx(2.5));
    CHECK(c.var[0] == doctest::Approx(0.0));

    NormStats s = ln_batch_stats(Tensor({1, 1, 2}, {0.0f, 2.0f}));
    CHECK(s.mean[0] == doctest::Approx(1.0));
    CHECK(s.var[0] == doctest::Approx(1.0));
}

TEST_CASE("ln_batch_stats concentrates for standard normal input") {
    // Box-Muller over the seeded engine; 64*32*32 draws
    Rng rng(17);
    Tensor x({64, 32, 32});
    for (size_t i = 0; i < x.size(); i += 2) {
        float u1 = std::max(rng.unit(), 1e-7f);
        float u2 = rng.unit();
        float r = std::sqrt(-2.0f * std::log(u1));
        x.values()[i] = r * std::cos(6.2831853f * u2);
        if (i + 1 < x.size()) x.values()[i + 1] = r * std::sin(6.2831853f * u2);
    }
    NormStats s = ln_batch_stats(x);
    CHECK(std::abs(s.mean[0]) < 0.05f);
    CHECK(std::abs(s.var[0] - 1.0f) < 0.1f);
}

TEST_CASE("bn_batch_stats per-channel hand example") {
    // 2 channels of 1x2: [0,2] and [4,4]
    Tensor x({1, 2, 1, 2}, {0.0f, 2.0f, 4.0f, 4.0f});
    NormStats s = bn_batch_stats(x);
    REQUIRE(s.channels() == 2);
    CHECK(s.mean[0] == doctest::Approx(1.0));
    CHECK(s.var[0] == doctest::Approx(1.0));
    CHECK(s.mean[1] == doctest::Approx(4.0));
    CHECK(s.var[1] == doctest::Approx(0.0));
}

TEST_CASE("bn_batch_stats output length equals the channel count") {
    Tensor x({1, 7, 4, 4});
    CHECK(bn_batch_stats(x).channels() == 7);
    CHECK_THROWS_AS(bn_batch_stats(Tensor({2, 3, 4, 4})), ShapeError);
    CHECK_THROWS_AS(bn_batch_stats(Tensor({4, 4})), ShapeError);
}

TEST_CASE("bn_batch_stats matches a double-precision loop") {
    Rng rng(23);
    Tensor x({1, 5, 6, 7});
    for (float& v : x.values()) v = rng.uniform(-3.0f, 3.0f);
    NormStats s = bn_batch_stats(x);
    auto at = [&x](size_t c, size_t a, size_t b) { return x.values()[(c * 6 + a) * 7 + b]; };
    for (size_t c = 0; c < 5; ++c) {
        double sum = 0.0;
        for (size_t a = 0; a < 6; ++a)
            for (size_t b = 0; b < 7; ++b) sum += at(c, a, b);
        double mean = sum / 42.0;
        double sq = 0.0;
        for (size_t a = 0; a < 6; ++a)
            for (size_t b = 0; b < 7; ++b) sq += (at(c, a, b) - mean) * (at(c, a, b) - mean);
        CHECK(s.mean[c] == doctest::Approx(mean).epsilon(1e-5));
        CHECK(s.var[c] == doctest::Approx(sq / 42.0).epsilon(1e-5));
    }
}

TEST_CASE("ema_update endpoints and paper alpha") {
    NormStats prev = NormStats::scalar(0.0f, 1.0f);
    NormStats incoming = NormStats::scalar(1.0f, 3.0f);

    NormStats keep = ema_update(prev, incoming, 0.0f);
    CHECK(keep.mean[0] == 0.0f);
    CHECK(keep.var[0] == 1.0f);
    CHECK(keep.t == 1);

    NormStats take = ema_update(prev, incoming, 1.0f);
    CHECK(take.mean[0] == 1.0f);
    CHECK(take.var[0] == 3.0f);

    NormStats step = ema_update(prev, incoming, 0.05f);
    CHECK(step.mean[0] == doctest::Approx(0.05));
    CHECK(step.var[0] == doctest::Approx(1.0 * 0.95 + 3.0 * 0.05));

    CHECK_THROWS_AS(ema_update(prev, NormStats({1.0f, 2.0f}, {0.0f, 0.0f}), 0.5f), ConfigError);
    CHECK_THROWS_AS(ema_update(prev, incoming, 1.5f), ParamError);
}

TEST_CASE("ema_update is a convex combination with non-negative variance") {
    Rng rng(31);
    for (int trial = 0; trial < 200; ++trial) {
        size_t n = 1 + rng.index(8);
        NormStats prev, incoming;
        for (size_t i = 0; i < n; ++i) {
            prev.mean.push_back(rng.uniform(-10.0f, 10.0f));
            prev.var.push_back(rng.uniform(0.0f, 10.0f));
            incoming.mean.push_back(rng.uniform(-10.0f, 10.0f));
            incoming.var.push_back(rng.uniform(0.0f, 10.0f));
        }
        float alpha = rng.unit();
        NormStats out = ema_update(prev, incoming, alpha);
        for (size_t i = 0; i < n; ++i) {
            CHECK(out.mean[i] >= std::min(prev.mean[i], incoming.mean[i]) - 1e-6f);
            CHECK(out.mean[i] <= std::max(prev.mean[i], incoming.mean[i]) + 1e-6f);
            CHECK(out.var[i] >= 0.0f);
        }
    }
}

TEST_CASE("aggregate_peers reduces to the local stats for an empty bank") {
    MemoryBank bank;
    bank.own_id = 1;
    NormStats local({1.0f, 2.0f}, {0.5f, 0.25f});
    NormStats agg = aggregate_peers(bank, local);
    CHECK(agg.mean == local.mean);
    CHECK(agg.var == local.var);
}

TEST_CASE("aggregate_peers averages across devices") {
    MemoryBank bank;
    bank.own_id = 1;
    bank.store(2, StatsSet{NormStats::scalar(2.0f, 4.0f)});
    NormStats agg = aggregate_peers(bank, NormStats::scalar(0.0f, 0.0f));
    CHECK(agg.mean[0] == doctest::Approx(1.0));
    CHECK(agg.var[0] == doctest::Approx(2.0));
}

TEST_CASE("aggregate_peers is idempotent over identical peers") {
    MemoryBank bank;
    bank.own_id = 1;
    StatsSet same{NormStats({3.0f, -1.0f}, {2.0f, 0.5f})};
    bank.store(2, same);
    bank.store(3, same);
    StatsSet agg = aggregate_peers(bank, same);
    CHECK(agg[0].mean[0] == doctest::Approx(3.0));
    CHECK(agg[0].mean[1] == doctest::Approx(-1.0));
    CHECK(agg[0].var[0] == doctest::Approx(2.0));
}

TEST_CASE("aggregate_peers is invariant to peer arrival order") {
    StatsSet s2{NormStats::scalar(2.0f, 1.0f)};
    StatsSet s3{NormStats::scalar(-4.0f, 3.0f)};
    StatsSet s4{NormStats::scalar(7.0f, 0.5f)};
    StatsSet local{NormStats::scalar(1.0f, 2.0f)};

    MemoryBank forward;
    forward.own_id = 1;
    forward.store(2, s2);
    forward.store(3, s3);
    forward.store(4, s4);

    MemoryBank reversed;
    reversed.own_id = 1;
    reversed.store(4, s4);
    reversed.store(2, s2);
    reversed.store(3, s3);

    StatsSet a = aggregate_peers(forward, local);
    StatsSet b = aggregate_peers(reversed, local);
    CHECK(a[0].mean[0] == b[0].mean[0]);
    CHECK(a[0].var[0] == b[0].var[0]);
}

TEST_CASE("sum mode keeps the literal per-channel sums") {
    MemoryBank bank;
    bank.own_id = 1;
    bank.aggregate = AggregateMode::Sum;
    bank.store(2, StatsSet{NormStats::scalar(2.0f, 4.0f)});
    NormStats agg = aggregate_peers(bank, NormStats::scalar(1.0f, 1.0f));
    CHECK(agg.mean[0] == doctest::Approx(3.0));
    CHECK(agg.var[0] == doctest::Approx(5.0));
}

TEST_CASE("memory bank rejects layout mismatches") {
    MemoryBank bank;
    bank.own_id = 1;
    bank.running = StatsSet{NormStats({0.0f, 0.0f}, {1.0f, 1.0f})};
    CHECK_THROWS_AS(bank.store(2, StatsSet{NormStats::scalar(0.0f, 1.0f)}), ConfigError);
}

TEST_CASE("adapt_step_leader fixed point and convergence") {
    std::optional<NormStats> uninit;
    CHECK_THROWS_AS(adapt_step_leader(uninit, NormStats::scalar(0.0f, 1.0f), 0.05f), StateError);

    std::optional<NormStats> running = NormStats::scalar(0.0f, 1.0f);
    NormStats same = NormStats::scalar(0.0f, 1.0f);
    NormStats step = adapt_step_leader(running, same, 0.05f);
    CHECK(step.mean[0] == 0.0f);
    CHECK(step.var[0] == 1.0f);

    // repeated incoming (m, v) converges geometrically: error scales (1-a)^t
    float m = 2.0f, v = 3.0f, alpha = 0.05f;
    NormStats state = NormStats::scalar(0.0f, 1.0f);
    for (int t = 1; t <= 50; ++t) {
        state = adapt_step_leader(std::optional<NormStats>(state), NormStats::scalar(m, v), alpha);
        double expect_mean = m + (0.0 - m) * std::pow(1.0 - alpha, t);
        double expect_var = v + (1.0 - v) * std::pow(1.0 - alpha, t);
        CHECK(state.mean[0] == doctest::Approx(expect_mean).epsilon(1e-4));
        CHECK(state.var[0] == doctest::Approx(expect_var).epsilon(1e-4));
    }
    CHECK(state.t == 50);

    std::optional<NormStats> init = NormStats::scalar(0.0f, 1.0f);
    NormStats one = adapt_step_leader(init, NormStats::scalar(1.0f, 1.0f), 0.05f);
    CHECK(one.mean[0] == doctest::Approx(0.05));
}

TEST_CASE("adapt_step_follower with one device matches the plain EMA") {
    float alpha = 0.05f;
    MemoryBank bank;
    bank.own_id = 1;
    bank.alpha = alpha;
    bank.running = StatsSet{NormStats::scalar(0.0f, 1.0f)};

    NormStats plain = NormStats::scalar(0.0f, 1.0f);
    Rng rng(41);
    for (int t = 0; t < 20; ++t) {
        NormStats batch = NormStats::scalar(rng.uniform(-2.0f, 2.0f), rng.uniform(0.0f, 4.0f));
        bank.clear_round();
        adapt_step_follower(bank, StatsSet{batch});
        plain = ema_update(plain, batch, alpha);
        CHECK(bank.running[0].mean[0] == plain.mean[0]);
        CHECK(bank.running[0].var[0] == plain.var[0]);
    }
}

TEST_CASE("identical inputs keep every follower identical") {
    float alpha = 0.05f;
    std::vector<MemoryBank> banks(3);
    for (size_t i = 0; i < 3; ++i) {
        banks[i].own_id = static_cast<uint8_t>(1 + i);
        banks[i].alpha = alpha;
        banks[i].running = StatsSet{NormStats({0.0f, 0.0f}, {1.0f, 1.0f})};
    }
    Rng rng(43);
    for (int round = 0; round < 10; ++round) {
        StatsSet batch{NormStats({rng.uniform(-1.0f, 1.0f), rng.uniform(-1.0f, 1.0f)},
                                 {rng.uniform(0.0f, 2.0f), rng.uniform(0.0f, 2.0f)})};
        for (size_t i = 0; i < 3; ++i) {
            banks[i].clear_round();
            for (size_t j = 0; j < 3; ++j) {
                if (j != i) banks[i].store(static_cast<uint8_t>(1 + j), batch);
            }
        }
        for (size_t i = 0; i < 3; ++i) adapt_step_follower(banks[i], batch);
        for (size_t i = 1; i < 3; ++i) {
            CHECK(banks[i].running[0].mean == banks[0].running[0].mean);
            CHECK(banks[i].running[0].var == banks[0].running[0].var);
        }
    }
}

TEST_CASE("cross-device trajectories match an unrolled scalar recurrence") {
    // Two followers, per-round batch means m1(t), m2(t): the running mean
    // must equal the EMA of (m1+m2)/2, unrolled here with plain floats.
    float alpha = 0.05f;
    std::vector<MemoryBank> banks(2);
    for (size_t i = 0; i < 2; ++i) {
        banks[i].own_id = static_cast<uint8_t>(1 + i);
        banks[i].alpha = alpha;
        banks[i].running = StatsSet{NormStats::scalar(0.0f, 1.0f)};
    }
    float oracle_mean = 0.0f, oracle_var = 1.0f;
    Rng rng(47);
    for (int t = 0; t < 100; ++t) {
        NormStats b1 = NormStats::scalar(rng.uniform(-2.0f, 2.0f), rng.uniform(0.0f, 3.0f));
        NormStats b2 = NormStats::scalar(rng.uniform(-2.0f, 2.0f), rng.uniform(0.0f, 3.0f));
        for (size_t i = 0; i < 2; ++i) banks[i].clear_round();
        banks[0].store(2, StatsSet{b2});
        banks[1].store(1, StatsSet{b1});
        adapt_step_follower(banks[0], StatsSet{b1});
        adapt_step_follower(banks[1], StatsSet{b2});

        float agg_mean = (b1.mean[0] + b2.mean[0]) / 2.0f;
        float agg_var = (b1.var[0] + b2.var[0]) / 2.0f;
        oracle_mean = (1.0f - alpha) * oracle_mean + alpha * agg_mean;
        oracle_var = (1.0f - alpha) * oracle_var + alpha * agg_var;

        CHECK(banks[0].running[0].mean[0] == doctest::Approx(oracle_mean).epsilon(1e-6));
        CHECK(banks[0].running[0].var[0] == doctest::Approx(oracle_var).epsilon(1e-6));
        CHECK(banks[1].running[0].mean[0] == doctest::Approx(oracle_mean).epsilon(1e-6));
    }
}

TEST_CASE("variance stays non-negative through random update sequences") {
    Rng rng(53);
    for (int seq = 0; seq < 50; ++seq) {
        NormStats state({rng.uniform(-1.0f, 1.0f)}, {rng.uniform(0.0f, 2.0f)});
        for (int t = 0; t < 50; ++t) {
            NormStats incoming({rng.uniform(-5.0f, 5.0f)}, {rng.uniform(0.0f, 9.0f)});
            state = ema_update(state, incoming, rng.unit());
            CHECK(state.var[0] >= 0.0f);
        }
    }
}

TEST_CASE("norm stats reject negative variance") {
    CHECK_THROWS_AS(NormStats({0.0f}, {-1.0f}), ParamError);
}
