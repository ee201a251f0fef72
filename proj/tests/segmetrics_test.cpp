#include <gtest/gtest.h>

#include "cardio/phantom.hpp"
#include "cardio/rng.hpp"
#include "cardio/segmetrics.hpp"
#include "support/oracles.hpp"

using namespace cardio;

namespace {

BinaryMask random_mask(Rng& rng, Dims d, double density) {
    std::vector<std::uint8_t> m(d.count());
    for (auto& x : m) x = rng.uniform() < density;
    if (std::find(m.begin(), m.end(), 1) == m.end()) m[rng.index(m.size())] = 1;
    return BinaryMask(d, {1, 1, 1}, std::move(m));
}

oracle::Grid grid(const BinaryMask& m) {
    const auto& d = m.dims();
    return {long(d.nx), long(d.ny), long(d.nz), {m.data().begin(), m.data().end()}};
}

BinaryMask mask_of(Dims d, std::vector<std::array<int, 3>> on) {
    BinaryMask m(d, {1, 1, 1});
    for (auto [x, y, z] : on) m.set(x, y, z, true);
    return m;
}

SurfaceSet points(std::vector<std::array<int, 3>> p) { return {std::move(p), DistanceUnit::Voxel, {1, 1, 1}}; }

}  // namespace

TEST(Dice, Examples) {
    const Dims d{4, 1, 1};
    const auto a = mask_of({4, 2, 1}, {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {3, 0, 0}});
    const auto b = mask_of({4, 2, 1}, {{2, 0, 0}, {3, 0, 0}, {0, 1, 0}, {1, 1, 0}});
    EXPECT_EQ(dice(a, a), 1.0);
    EXPECT_EQ(dice(a, b), 0.5);
    EXPECT_EQ(dice(mask_of(d, {{0, 0, 0}}), mask_of(d, {{3, 0, 0}})), 0.0);
    EXPECT_EQ(dice(BinaryMask(d, {1, 1, 1}), BinaryMask(d, {1, 1, 1})), 1.0);
}

TEST(SurfacePoints, SingleVoxel) {
    const auto s = surface_points(mask_of({3, 3, 3}, {{1, 1, 1}}));
    EXPECT_EQ(s.points, (std::vector<std::array<int, 3>>{{1, 1, 1}}));
}

TEST(SurfacePoints, SolidCubeShell) {
    std::vector<std::array<int, 3>> on;
    for (int z = 1; z < 4; ++z)
        for (int y = 1; y < 4; ++y)
            for (int x = 1; x < 4; ++x) on.push_back({x, y, z});
    const auto s = surface_points(mask_of({5, 5, 5}, on));
    EXPECT_EQ(s.points.size(), 26u);
    EXPECT_EQ(std::find(s.points.begin(), s.points.end(), std::array<int, 3>{2, 2, 2}), s.points.end());
}

TEST(SurfacePoints, FullVolumeGivesOuterShell) {
    const BinaryMask full({4, 4, 4}, {1, 1, 1}, std::vector<std::uint8_t>(64, 1));
    EXPECT_EQ(surface_points(full).points.size(), 64u - 8u);
    const BinaryMask flat({4, 4, 1}, {1, 1, 1}, std::vector<std::uint8_t>(16, 1));
    EXPECT_EQ(surface_points(flat).points.size(), 12u);  // 4-connectivity in-plane
}

TEST(SurfacePoints, EmptyMaskRejected) {
    try {
        surface_points(BinaryMask({2, 2, 2}, {1, 1, 1}));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::EmptySurface);
    }
}

TEST(Distances, SinglePairs) {
    EXPECT_EQ(asd(points({{0, 0, 0}}), points({{0, 0, 5}})), 5.0);
    EXPECT_EQ(asd(points({{1, 2, 3}}), points({{1, 2, 3}})), 0.0);
    EXPECT_EQ(hausdorff(points({{0, 0, 0}, {0, 0, 1}}), points({{0, 0, 0}})), 1.0);
    EXPECT_EQ(hausdorff(points({{4, 4, 4}}), points({{4, 4, 4}}), 95), 0.0);
}

TEST(Distances, MillimetreScaling) {
    const auto m = mask_of({3, 1, 2}, {{0, 0, 0}});
    BinaryMask a({3, 1, 2}, {1.5, 1.5, 8.0}, {m.data().begin(), m.data().end()});
    BinaryMask b({3, 1, 2}, {1.5, 1.5, 8.0}, {0, 0, 0, 0, 0, 1});
    EXPECT_DOUBLE_EQ(hausdorff(surface_points(a, DistanceUnit::Millimetre), surface_points(b, DistanceUnit::Millimetre)),
                     std::hypot(3.0, 8.0));
    EXPECT_THROW(asd(surface_points(a), surface_points(b, DistanceUnit::Millimetre)), Error);
}

TEST(NearestRank, Rule) {
    std::vector<double> v(20);
    for (int i = 0; i < 20; ++i) v[i] = 20 - i;  // 20..1
    EXPECT_EQ(nearest_rank(v, 95), 19.0);         // ceil(0.95 * 20) = 19th smallest
    EXPECT_EQ(nearest_rank(v, 100), 20.0);
    EXPECT_EQ(nearest_rank({7.0}, 95), 7.0);
    EXPECT_EQ(nearest_rank({1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11}, 95), 11.0);  // ceil(10.45) = 11
}

TEST(MetricOracle, RandomPairsBitExact) {
    Rng rng(1234);
    for (int trial = 0; trial < 60; ++trial) {
        const Dims d{1 + rng.index(10), 1 + rng.index(10), 1 + rng.index(10)};
        const auto t = random_mask(rng, d, rng.uniform(0.05, 0.6));
        const auto p = random_mask(rng, d, rng.uniform(0.05, 0.6));
        const auto gt = grid(t), gp = grid(p);
        const auto st = surface_points(t), sp = surface_points(p);
        EXPECT_EQ(dice(t, p), oracle::dice(gt, gp));
        EXPECT_EQ(asd(st, sp), oracle::asd(gt, gp));
        EXPECT_EQ(hausdorff(st, sp, 100), oracle::hausdorff(gt, gp, 100));
        EXPECT_EQ(hausdorff(st, sp, 95), oracle::hausdorff(gt, gp, 95));
    }
}

TEST(MetricProperties, HoldOnRandomInstances) {
    Rng rng(99);
    for (int trial = 0; trial < 1000; ++trial) {
        const Dims d{1 + rng.index(6), 1 + rng.index(6), 1 + rng.index(6)};
        const auto t = random_mask(rng, d, rng.uniform(0.1, 0.7));
        const auto p = random_mask(rng, d, rng.uniform(0.1, 0.7));
        const auto st = surface_points(t), sp = surface_points(p);
        const double dc = dice(t, p);
        const double a = asd(st, sp), h = hausdorff(st, sp), h95 = hausdorff(st, sp, 95);
        EXPECT_GE(dc, 0.0);
        EXPECT_LE(dc, 1.0);
        EXPECT_EQ(dc, dice(p, t));
        EXPECT_EQ(h, hausdorff(sp, st));
        EXPECT_EQ(h95, hausdorff(sp, st, 95));
        EXPECT_EQ(a, asd(sp, st));
        EXPECT_LE(a, h + 1e-12);
        EXPECT_LE(h95, h);
    }
}

TEST(MetricProperties, TranslationInvariance) {
    Rng rng(7);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 2 + rng.index(4);
        const Dims inner{n, n, n}, outer{n + 4, n + 4, n + 4};
        const auto t = random_mask(rng, inner, 0.4);
        const auto p = random_mask(rng, inner, 0.4);
        auto place = [&](const BinaryMask& m, int ox, int oy, int oz) {
            BinaryMask out(outer, {1, 1, 1});
            for (std::size_t z = 0; z < n; ++z)
                for (std::size_t y = 0; y < n; ++y)
                    for (std::size_t x = 0; x < n; ++x) out.set(x + ox, y + oy, z + oz, m.at(x, y, z));
            return out;
        };
        const int o1[3] = {1, 1, 1};
        const int o2[3] = {1 + int(rng.index(3)), 1 + int(rng.index(3)), 1 + int(rng.index(3))};
        const auto t1 = place(t, o1[0], o1[1], o1[2]), p1 = place(p, o1[0], o1[1], o1[2]);
        const auto t2 = place(t, o2[0], o2[1], o2[2]), p2 = place(p, o2[0], o2[1], o2[2]);
        const auto a1 = surface_points(t1), b1 = surface_points(p1);
        const auto a2 = surface_points(t2), b2 = surface_points(p2);
        EXPECT_EQ(dice(t1, p1), dice(t2, p2));
        EXPECT_EQ(asd(a1, b1), asd(a2, b2));
        EXPECT_EQ(hausdorff(a1, b1), hausdorff(a2, b2));
        EXPECT_EQ(hausdorff(a1, b1, 95), hausdorff(a2, b2, 95));
    }
}

TEST(ScoreCase, IdenticalVolumes) {
    PhantomSpec s;
    s.dims = {40, 40, 3};
    s.ed = {8.0, {3.0}, 0.0, 6.0};
    s.es = s.ed;
    const auto c = generate_phantom(s, 3);
    const auto sc = score_case(*c.ed_truth, c.ed);
    EXPECT_EQ(sc.mean_dice, 1.0);
    EXPECT_EQ(sc.mean_hd95, 0.0);
    EXPECT_EQ(sc.mean_asd, 0.0);
    EXPECT_TRUE(sc.qc.empty());
}

TEST(ScoreCase, NoisyPhantomRegression) {
    PhantomSpec s;
    s.dims = {40, 40, 3};
    s.ed = {8.0, {3.0}, 0.0, 6.0};
    s.es = s.ed;
    s.noise = 0.1;
    const auto c = generate_phantom(s, 11);
    const auto sc = score_case(*c.ed_truth, c.ed);
    for (const auto& cs : sc.classes) {
        EXPECT_LT(cs.dice, 1.0);
        EXPECT_GT(cs.dice, 0.5);
        EXPECT_FALSE(cs.flagged);
    }
}

TEST(ScoreCase, AbsentClasses) {
    LabelVolume t({4, 4, 2}, {1, 1, 1}), p({4, 4, 2}, {1, 1, 1});
    t.set(1, 1, 0, TissueClass::LV);
    p.set(1, 1, 0, TissueClass::LV);
    t.set(2, 2, 1, TissueClass::Myocardium);  // MYO missing from the prediction; RV absent from both
    const auto sc = score_case(t, p);
    ASSERT_EQ(sc.classes.size(), 3u);
    EXPECT_EQ(sc.classes[0].tissue, TissueClass::RV);
    EXPECT_EQ(sc.classes[0].dice, 1.0);
    EXPECT_FALSE(sc.classes[0].hd95.has_value());
    EXPECT_EQ(sc.classes[1].dice, 0.0);
    EXPECT_TRUE(sc.classes[1].flagged);
    EXPECT_DOUBLE_EQ(*sc.classes[1].hd95, std::sqrt(9.0 + 9.0 + 1.0));
    EXPECT_EQ(sc.classes[2].hd95, 0.0);
    EXPECT_DOUBLE_EQ(*sc.mean_hd95, std::sqrt(19.0) / 2.0);
    EXPECT_EQ(sc.qc.size(), 2u);
}

TEST(ScoreCase, ShapeMismatch) {
    EXPECT_THROW(score_case(LabelVolume({2, 2, 2}, {1, 1, 1}), LabelVolume({2, 2, 1}, {1, 1, 1})), Error);
    EXPECT_THROW(score_case(LabelVolume({2, 2, 2}, {1, 1, 1}), LabelVolume({2, 2, 2}, {1, 1, 2})), Error);
}
