#include <doctest.h>

#include <algorithm>

#include "skyseg/metrics.hpp"
#include "skyseg/rng.hpp"

using namespace skyseg;

TEST_CASE("miou is 100 for a perfect prediction") {
    LabelMap gt(2, 2, {0, 1, 2, 3});
    CHECK(miou(gt, gt, 4) == doctest::Approx(100.0));
}

TEST_CASE("miou matches the hand confusion matrix") {
    LabelMap gt(1, 4, {0, 0, 1, 1});
    LabelMap pred(1, 4, {0, 1, 1, 1});
    // class 0: tp 1, fn 1 -> 1/2; class 1: tp 2, fp 1 -> 2/3
    CHECK(miou(pred, gt, 2) == doctest::Approx(100.0 * (0.5 + 2.0 / 3.0) / 2.0).epsilon(1e-4));
}

TEST_CASE("miou is zero for disjoint single-class maps") {
    LabelMap gt(2, 2, {0, 0, 0, 0});
    LabelMap pred(2, 2, {1, 1, 1, 1});
    CHECK(miou(pred, gt, 2) == doctest::Approx(0.0));
}

TEST_CASE("miou rejects mismatched dims and bad labels") {
    LabelMap a(2, 2), b(2, 3);
    CHECK_THROWS_AS(miou(a, b, 2), ShapeError);
    LabelMap big(1, 1, {5});
    LabelMap ok(1, 1, {0});
    CHECK_THROWS_AS(miou(big, ok, 2), ParamError);
}

TEST_CASE("miou is symmetric for two present classes") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        LabelMap a(4, 4), b(4, 4);
        for (auto& v : a.labels) v = static_cast<uint16_t>(rng.index(2));
        for (auto& v : b.labels) v = static_cast<uint16_t>(rng.index(2));
        // ensure both classes appear on both sides so the class sets agree
        a.labels[0] = 0;
        a.labels[1] = 1;
        b.labels[0] = 0;
        b.labels[1] = 1;
        CHECK(miou(a, b, 2) == doctest::Approx(miou(b, a, 2)).epsilon(1e-9));
    }
}

TEST_CASE("miou is invariant under consistent relabeling") {
    Rng rng(4);
    LabelMap gt(6, 6), pred(6, 6);
    for (auto& v : gt.labels) v = static_cast<uint16_t>(rng.index(4));
    for (auto& v : pred.labels) v = static_cast<uint16_t>(rng.index(4));
    double base = miou(pred, gt, 4);

    uint16_t perm[4] = {2, 0, 3, 1};
    LabelMap gt2 = gt, pred2 = pred;
    for (auto& v : gt2.labels) v = perm[v];
    for (auto& v : pred2.labels) v = perm[v];
    CHECK(miou(pred2, gt2, 4) == doctest::Approx(base).epsilon(1e-9));
}

TEST_CASE("miou stays within [0, 100]") {
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        LabelMap gt(5, 5), pred(5, 5);
        for (auto& v : gt.labels) v = static_cast<uint16_t>(rng.index(3));
        for (auto& v : pred.labels) v = static_cast<uint16_t>(rng.index(3));
        double m = miou(pred, gt, 3);
        CHECK(m >= 0.0);
        CHECK(m <= 100.0);
    }
}

TEST_CASE("transmission volumes match the data model") {
    CHECK(volume_refinement(600, 400) == 1440000);
    CHECK(volume_refinement(400, 300) == 720000);
    CHECK(volume_refinement(1, 1) == 6);
    CHECK(volume_stats(17872) == 71488);
    CHECK(volume_stats(1) == 4);
    CHECK(2 * volume_stats(17872) == 142976);
}

TEST_CASE("volume functions are linear") {
    Rng rng(6);
    for (int trial = 0; trial < 20; ++trial) {
        size_t h = 1 + rng.index(500), w = 1 + rng.index(500);
        CHECK(volume_refinement(h, w) == 6ull * h * w);
        size_t c = 1 + rng.index(100000);
        CHECK(volume_stats(c) == 4ull * c);
        CHECK(volume_stats(2 * c) == 2 * volume_stats(c));
    }
}
