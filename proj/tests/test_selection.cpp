#include <doctest.h>

#include <array>

#include "skyseg/rng.hpp"
#include "skyseg/selection.hpp"

using namespace skyseg;

namespace {

std::array<Tensor, 4> random_stages(uint64_t seed, float scale = 1.0f) {
    constexpr std::array<size_t, 4> sizes{128, 64, 32, 16};
    Rng rng(seed);
    std::array<Tensor, 4> out;
    for (size_t s = 0; s < 4; ++s) {
        out[s] = Tensor({sizes[s], sizes[s]});
        for (float& v : out[s].values()) v = scale * rng.unit();
    }
    return out;
}

AttentionStack stack_from_stages(const std::array<Tensor, 4>& a, const std::array<Tensor, 4>& b) {
    AttentionStack stack;
    for (size_t s = 0; s < 4; ++s) {
        stack.blocks[s][0] = a[s];
        stack.blocks[s][1] = b[s];
    }
    return stack;
}

Tensor pipeline(const AttentionStack& stack, const SelectionWeights& w) {
    std::array<Tensor, 4> merged;
    for (size_t s = 0; s < 4; ++s) merged[s] = channel_merge(stack.map(s, 0), stack.map(s, 1));
    return finalize(weighted_fuse(patch_merge(merged), w));
}

}  // namespace

TEST_CASE("selection weights validate") {
    SelectionWeights defaults;
    CHECK_NOTHROW(defaults.validate());
    SelectionWeights bad{0.5f, 0.5f, 0.5f, 0.5f};
    CHECK_THROWS_AS(bad.validate(), ParamError);
    SelectionWeights negative{-0.1f, 0.4f, 0.3f, 0.4f};
    CHECK_THROWS_AS(negative.validate(), ParamError);
}

TEST_CASE("channel_merge averages elementwise") {
    Tensor a = Tensor::full({4, 4}, 1.0f);
    Tensor b({4, 4});
    Tensor m = channel_merge(a, b);
    for (float v : m.values()) CHECK(v == 0.5f);

    Tensor same = channel_merge(a, a);
    for (float v : same.values()) CHECK(v == 1.0f);

    Rng rng(3);
    Tensor r1({8, 8}), r2({8, 8});
    for (float& v : r1.values()) v = rng.unit();
    for (float& v : r2.values()) v = rng.unit();
    Tensor merged = channel_merge(r1, r2);
    for (size_t i = 0; i < merged.size(); ++i) {
        CHECK(merged.values()[i] ==
              doctest::Approx(0.5f * (r1.values()[i] + r2.values()[i])).epsilon(1e-6));
    }

    CHECK_THROWS_AS(channel_merge(a, Tensor({4, 5})), ShapeError);
}

TEST_CASE("patch_merge pools each stage to 16x16") {
    std::array<Tensor, 4> stages{Tensor::full({128, 128}, 0.1f), Tensor::full({64, 64}, 0.2f),
                                 Tensor::full({32, 32}, 0.3f), Tensor::full({16, 16}, 0.4f)};
    auto merged = patch_merge(stages);
    for (size_t s = 0; s < 4; ++s) {
        CHECK(merged[s].dim(0) == 16);
        CHECK(merged[s].dim(1) == 16);
    }
    for (float v : merged[0].values()) CHECK(v == doctest::Approx(0.1).epsilon(1e-6));
    for (float v : merged[3].values()) CHECK(v == doctest::Approx(0.4).epsilon(1e-6));

    // one spike of value v spreads as v/64 through the 8x8 window
    std::array<Tensor, 4> spike{Tensor({128, 128}), Tensor({64, 64}), Tensor({32, 32}),
                                Tensor({16, 16})};
    spike[0](3, 5) = 64.0f;
    auto pooled = patch_merge(spike);
    CHECK(pooled[0](0, 0) == doctest::Approx(1.0));
    CHECK(pooled[0](0, 1) == 0.0f);

    std::array<Tensor, 4> wrong{Tensor({64, 64}), Tensor({64, 64}), Tensor({32, 32}),
                                Tensor({16, 16})};
    CHECK_THROWS_AS(patch_merge(wrong), ShapeError);
}

TEST_CASE("weighted_fuse is convex and honors one-hot weights") {
    Rng rng(9);
    Tensor m({16, 16});
    for (float& v : m.values()) v = rng.unit();
    std::array<Tensor, 4> same{m, m, m, m};
    Tensor fused = weighted_fuse(same, SelectionWeights{});
    for (size_t i = 0; i < m.size(); ++i) {
        CHECK(fused.values()[i] == doctest::Approx(m.values()[i]).epsilon(1e-6));
    }

    std::array<Tensor, 4> different;
    for (size_t s = 0; s < 4; ++s) {
        different[s] = Tensor({16, 16});
        for (float& v : different[s].values()) v = rng.unit();
    }
    Tensor first = weighted_fuse(different, SelectionWeights{1.0f, 0.0f, 0.0f, 0.0f});
    for (size_t i = 0; i < first.size(); ++i) CHECK(first.values()[i] == different[0].values()[i]);

    SelectionWeights w;
    Tensor combo = weighted_fuse(different, w);
    for (size_t i = 0; i < combo.size(); ++i) {
        float expect = w.w1 * different[0].values()[i] + w.w2 * different[1].values()[i] +
                       w.w3 * different[2].values()[i] + w.w4 * different[3].values()[i];
        CHECK(combo.values()[i] == doctest::Approx(expect).epsilon(1e-6));
    }
}

TEST_CASE("finalize pools 16x16 to 2x2") {
    Tensor c = Tensor::full({16, 16}, 0.7f);
    Tensor f = finalize(c);
    CHECK(f.dim(0) == 2);
    CHECK(f.dim(1) == 2);
    for (float v : f.values()) CHECK(v == doctest::Approx(0.7).epsilon(1e-6));

    Tensor corner({16, 16});
    for (size_t y = 0; y < 8; ++y)
        for (size_t x = 0; x < 8; ++x) corner(y, x) = 1.0f;
    Tensor fc = finalize(corner);
    CHECK(fc(0, 0) == doctest::Approx(1.0));
    CHECK(fc(0, 1) == doctest::Approx(0.0));
    CHECK(fc(1, 0) == doctest::Approx(0.0));
    CHECK(fc(1, 1) == doctest::Approx(0.0));

    CHECK_THROWS_AS(finalize(Tensor({8, 8})), ShapeError);
}

TEST_CASE("select_patches ranks by score with index tie-breaks") {
    Tensor final_map({2, 2}, {0.9f, 0.1f, 0.2f, 0.3f});
    GeoRect full{0, 0, 100, 80};
    PatchRanking r = select_patches(final_map, 3, full);
    REQUIRE(r.ranked.size() == 3);
    CHECK(r.ranked[0].index == 0);
    CHECK(r.ranked[1].index == 3);
    CHECK(r.ranked[2].index == 2);
    CHECK(r.ranked[0].rect == GeoRect{0, 0, 50, 40});
    CHECK(r.ranked[1].rect == GeoRect{50, 40, 100, 80});

    Tensor uniform = Tensor::full({2, 2}, 0.25f);
    PatchRanking tie = select_patches(uniform, 2, full);
    CHECK(tie.ranked[0].index == 0);
    CHECK(tie.ranked[1].index == 1);

    PatchRanking all = select_patches(final_map, 4, full);
    CHECK(all.ranked.size() == 4);

    CHECK_THROWS_AS(select_patches(final_map, 0, full), ParamError);
    CHECK_THROWS_AS(select_patches(final_map, 5, full), ParamError);
    CHECK_THROWS_AS(select_patches(Tensor({3, 3}), 1, full), ShapeError);
}

TEST_CASE("quadrant rects partition the leader rect") {
    GeoRect odd{10, 20, 27, 45};  // width 17, height 25
    auto quads = quadrant_rects(odd);
    CHECK(quads[0].x1 == quads[1].x0);
    CHECK(quads[0].y1 == quads[2].y0);
    size_t area = 0;
    for (const auto& q : quads) area += q.width() * q.height();
    CHECK(area == odd.width() * odd.height());
}

TEST_CASE("the selection pipeline is linear in the attention maps") {
    SelectionWeights w;
    Rng rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        auto a0 = random_stages(1000 + trial);
        auto a1 = random_stages(2000 + trial);
        auto b0 = random_stages(3000 + trial);
        auto b1 = random_stages(4000 + trial);
        float alpha = rng.uniform(-2.0f, 2.0f);
        float beta = rng.uniform(-2.0f, 2.0f);

        std::array<Tensor, 4> mix0, mix1;
        for (size_t s = 0; s < 4; ++s) {
            mix0[s] = Tensor(a0[s].shape());
            mix1[s] = Tensor(a1[s].shape());
            for (size_t i = 0; i < mix0[s].size(); ++i) {
                mix0[s].values()[i] = alpha * a0[s].values()[i] + beta * b0[s].values()[i];
                mix1[s].values()[i] = alpha * a1[s].values()[i] + beta * b1[s].values()[i];
            }
        }
        Tensor mixed = pipeline(stack_from_stages(mix0, mix1), w);
        Tensor pa = pipeline(stack_from_stages(a0, a1), w);
        Tensor pb = pipeline(stack_from_stages(b0, b1), w);
        for (size_t i = 0; i < 4; ++i) {
            CHECK(mixed.values()[i] ==
                  doctest::Approx(alpha * pa.values()[i] + beta * pb.values()[i]).epsilon(1e-5));
        }
    }
}

TEST_CASE("all attention mass in one quadrant selects that quadrant") {
    constexpr std::array<size_t, 4> sizes{128, 64, 32, 16};
    Rng rng(67);
    GeoRect full{0, 0, 256, 256};
    for (int trial = 0; trial < 25; ++trial) {
        size_t target = rng.index(4);
        size_t qy = target / 2, qx = target % 2;
        std::array<Tensor, 4> stages;
        for (size_t s = 0; s < 4; ++s) {
            stages[s] = Tensor({sizes[s], sizes[s]});
            size_t half = sizes[s] / 2;
            for (size_t y = 0; y < half; ++y) {
                for (size_t x = 0; x < half; ++x) {
                    stages[s](qy * half + y, qx * half + x) = rng.unit() + 0.01f;
                }
            }
        }
        AttentionStack stack = stack_from_stages(stages, stages);
        PatchRanking r = select_from_attention(stack, SelectionWeights{}, 1, full);
        CHECK(r.ranked[0].index == target);
    }
}

TEST_CASE("swapping the two blocks of a stage leaves the result unchanged") {
    auto a = random_stages(71);
    auto b = random_stages(72);
    SelectionWeights w;
    Tensor forward = pipeline(stack_from_stages(a, b), w);
    Tensor swapped = pipeline(stack_from_stages(b, a), w);
    for (size_t i = 0; i < 4; ++i) {
        CHECK(forward.values()[i] == doctest::Approx(swapped.values()[i]).epsilon(1e-7));
    }
}
