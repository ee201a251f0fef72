#include <gtest/gtest.h>

#include <cmath>

#include "cardio/mwt.hpp"
#include "cardio/phantom.hpp"
#include "cardio/rng.hpp"
#include "support/oracles.hpp"

using namespace cardio;

namespace {

LabelVolume annulus(std::size_t n, double r_in, std::vector<double> thick, VoxelSpacing sp = {1, 1, 1}) {
    PhantomSpec s;
    s.dims = {n, n, thick.size()};
    s.spacing = sp;
    s.ed = {r_in, thick, 0.0, 0.0};
    s.es = s.ed;
    return *generate_phantom(s, 0).ed_truth;
}

}  // namespace

TEST(ExtractContours, SinglePixelTouchingBothIsInner) {
    const std::uint8_t px[3] = {3, 2, 0};
    const LabelSlice s{3, 1, 1.0, 1.0, px};
    const auto ex = extract_contours(s);
    EXPECT_EQ(ex.contours.inner, (std::vector<Pixel>{{1, 0}}));
    EXPECT_TRUE(ex.contours.outer.empty());
    EXPECT_EQ(ex.status, ContourStatus::NoOuterContour);
}

TEST(ExtractContours, BackgroundSliceIsEmpty) {
    const std::vector<std::uint8_t> px(16, 0);
    EXPECT_EQ(extract_contours({4, 4, 1.0, 1.0, px}).status, ContourStatus::EmptySlice);
}

TEST(ExtractContours, MyocardiumWithoutLv) {
    const std::vector<std::uint8_t> px = {0, 2, 2, 0};
    EXPECT_EQ(extract_contours({4, 1, 1.0, 1.0, px}).status, ContourStatus::NoInnerContour);
}

TEST(ExtractContours, AnnulusAdjacencyAndRadii) {
    const auto v = annulus(24, 5.0, {3.0});
    const auto sl = v.slice(0);
    const auto ex = extract_contours(sl);
    ASSERT_EQ(ex.status, ContourStatus::Ok);
    const double c = 11.5;
    auto nbrs = [&](Pixel p) {
        std::vector<int> out;
        for (auto [dx, dy] : {std::pair{1, 0}, {-1, 0}, {0, 1}, {0, -1}}) out.push_back(sl.at(p.x + dx, p.y + dy));
        return out;
    };
    for (auto p : ex.contours.inner) {
        const auto n = nbrs(p);
        EXPECT_NE(std::find(n.begin(), n.end(), 3), n.end());
        EXPECT_NEAR(std::hypot(p.x - c, p.y - c), 5.5, 1.0);
    }
    for (auto p : ex.contours.outer) {
        const auto n = nbrs(p);
        EXPECT_EQ(std::find(n.begin(), n.end(), 3), n.end());
        EXPECT_NE(std::find(n.begin(), n.end(), 0), n.end());
        EXPECT_NEAR(std::hypot(p.x - c, p.y - c), 7.5, 1.0);
    }
}

TEST(SliceMwt, ThreeFourFive) {
    const auto r = slice_mwt({{{0, 0}}, {{3, 4}}, 1.0, 1.0});
    EXPECT_EQ(r.distances, (std::vector<double>{5.0}));
    EXPECT_EQ(r.mean, 5.0);
    EXPECT_EQ(r.stdev, 0.0);
}

TEST(SliceMwt, MinimumOverOuter) {
    EXPECT_EQ(slice_mwt({{{0, 0}}, {{3, 4}, {0, 1}}, 1.0, 1.0}).distances, (std::vector<double>{1.0}));
}

TEST(SliceMwt, EmptyContourRejected) {
    try {
        slice_mwt({{{0, 0}}, {}, 1.0, 1.0});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::NoContour);
    }
}

TEST(SliceMwt, UnitsAndSpacingScale) {
    ContourPair c{{{0, 0}, {2, 1}}, {{5, 3}, {1, 6}}, 1.5, 1.5};
    const auto mm = slice_mwt(c);
    const auto px = slice_mwt(c, DistanceUnit::Voxel);
    for (std::size_t i = 0; i < mm.distances.size(); ++i) EXPECT_DOUBLE_EQ(mm.distances[i], 1.5 * px.distances[i]);
    c.dx = c.dy = 3.0;
    const auto twice = slice_mwt(c);
    EXPECT_DOUBLE_EQ(twice.mean, 2.0 * mm.mean);
    EXPECT_DOUBLE_EQ(twice.stdev, 2.0 * mm.stdev);
}

TEST(SliceMwt, MatchesOracleOnRandomPairs) {
    Rng rng(31);
    for (int trial = 0; trial < 200; ++trial) {
        ContourPair c;
        c.dx = rng.uniform(0.5, 2.0);
        c.dy = rng.uniform(0.5, 2.0);
        const auto ni = 1 + rng.index(12), no = 1 + rng.index(12);
        for (std::size_t i = 0; i < ni; ++i) c.inner.push_back({int(rng.index(20)), int(rng.index(20))});
        for (std::size_t i = 0; i < no; ++i) c.outer.push_back({int(rng.index(20)), int(rng.index(20))});
        const auto r = slice_mwt(c);
        const double diag = std::hypot(19 * c.dx, 19 * c.dy);
        for (std::size_t i = 0; i < ni; ++i) {
            double best = INFINITY;
            for (std::size_t j = no; j-- > 0;)
                best = std::min(best, std::hypot((c.inner[i].x - c.outer[j].x) * c.dx, (c.inner[i].y - c.outer[j].y) * c.dy));
            EXPECT_NEAR(r.distances[i], best, 1e-12);
            EXPECT_GE(r.distances[i], 0.0);
            EXPECT_LE(r.distances[i], diag + 1e-12);
        }
    }
}

TEST(SliceMwt, TranslationAndRotationInvariant) {
    const auto v = annulus(30, 6.0, {4.0});
    const auto base = slice_mwt(extract_contours(v.slice(0)).contours);
    auto moved = extract_contours(v.slice(0)).contours;
    for (auto& p : moved.inner) p = {p.x + 7, p.y - 3};
    for (auto& p : moved.outer) p = {p.x + 7, p.y - 3};
    EXPECT_EQ(slice_mwt(moved).distances, base.distances);
    auto rot = extract_contours(v.slice(0)).contours;
    for (auto& p : rot.inner) p = {-p.y, p.x};
    for (auto& p : rot.outer) p = {-p.y, p.x};
    EXPECT_EQ(slice_mwt(rot).distances, base.distances);
}

TEST(AggregateMwt, TwoSlices) {
    const std::vector<MwtSliceResult> s = {{{}, 3.0, 0.0}, {{}, 5.0, 0.0}};
    const auto f = aggregate_mwt(s);
    EXPECT_EQ(f.max_of_means, 5.0);
    EXPECT_DOUBLE_EQ(f.stdev_of_means, std::sqrt(2.0));
    EXPECT_EQ(f.mean_of_stdevs, 0.0);
    EXPECT_EQ(f.stdev_of_stdevs, 0.0);
}

TEST(AggregateMwt, IdenticalSlicesHaveZeroSpread) {
    const std::vector<MwtSliceResult> s(4, {{}, 2.5, 0.75});
    const auto f = aggregate_mwt(s);
    EXPECT_EQ(f.stdev_of_means, 0.0);
    EXPECT_EQ(f.stdev_of_stdevs, 0.0);
    EXPECT_EQ(f.mean_of_stdevs, 0.75);
    EXPECT_THROW(aggregate_mwt({}), Error);
}

TEST(VolumeMwt, AnnulusMatchesOracle) {
    const auto v = annulus(24, 5.0, {3.0});
    const auto got = volume_mwt(v);
    const auto want = oracle::mwt_slice(v, 0, 1.0, 1.0);
    ASSERT_EQ(got.slices.size(), 1u);
    ASSERT_EQ(got.slices[0].distances.size(), want.distances.size());
    EXPECT_NEAR(got.slices[0].mean, want.mean, 1e-12);
    EXPECT_NEAR(got.slices[0].stdev, want.sd, 1e-12);
}

// Thickness growing by one voxel per slice; every aggregate is recomputed from
// the oracle's per-slice table.
TEST(VolumeMwt, LinearThicknessProfileMatchesTable) {
    const VoxelSpacing sp{1.25, 1.25, 8.0};
    const auto v = annulus(40, 6.0, {2.0, 3.0, 4.0, 5.0, 6.0}, sp);
    const auto got = volume_mwt(v).features;
    std::vector<long double> means, sds;
    for (std::size_t z = 0; z < 5; ++z) {
        const auto o = oracle::mwt_slice(v, z, 1.25, 1.25);
        means.push_back(o.mean);
        sds.push_back(o.sd);
    }
    using oracle::mean;
    const auto sd = oracle::sample_sd;
    EXPECT_NEAR(got.max_of_means, static_cast<double>(*std::max_element(means.begin(), means.end())), 1e-9);
    EXPECT_NEAR(got.stdev_of_means, static_cast<double>(sd(means)), 1e-9);
    EXPECT_NEAR(got.mean_of_stdevs, static_cast<double>(mean(sds)), 1e-9);
    EXPECT_NEAR(got.stdev_of_stdevs, static_cast<double>(sd(sds)), 1e-9);
    EXPECT_GT(got.stdev_of_means, 0.0);
}

TEST(VolumeMwt, ThinWallSliceSkipped) {
    LabelVolume v({5, 5, 2}, {1, 1, 1});
    // z = 0: every MYO pixel touches the LV, so there is no outer contour.
    v.set(2, 2, 0, TissueClass::LV);
    for (auto [x, y] : {std::pair{2, 1}, {1, 2}, {3, 2}, {2, 3}}) v.set(x, y, 0, TissueClass::Myocardium);
    for (std::size_t x = 0; x < 5; ++x) v.set(x, 2, 1, TissueClass::Myocardium);
    v.set(0, 2, 1, TissueClass::LV);
    const auto m = volume_mwt(v);
    ASSERT_EQ(m.skipped.size(), 1u);
    EXPECT_EQ(m.skipped[0].z, 0u);
    EXPECT_EQ(m.skipped[0].reason, ContourStatus::NoOuterContour);
    EXPECT_EQ(m.slice_index, (std::vector<std::size_t>{1}));
}

TEST(VolumeMwt, NoMyocardiumAnywhere) {
    const LabelVolume v({4, 4, 2}, {1, 1, 1});
    try {
        volume_mwt(v);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::NoMyocardium);
    }
}
