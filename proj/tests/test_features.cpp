#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "sfp/error.hpp"
#include "sfp/features.hpp"
#include "oracles.hpp"

namespace sfp::features {
namespace {

using pyramid::DensePyramid;
using pyramid::FeatureGrid;

using test::all_pairs_suppression;
using test::quantized_random;
using test::random_grid;
using test::tent_interpolation;
using test::two_level;

TEST(Nms, SinglePeak) {
    ScoreMap s = ScoreMap::Constant(7, 7, 0.2);
    s(3, 4) = 0.9;
    const auto out = nms(s, 1, 0.5);
    ASSERT_EQ(out.size(), 1u);
    EXPECT_EQ(out[0], (Cell{3, 4}));
}

TEST(Nms, EqualPeaksKeepLexicographicFirst) {
    ScoreMap s = ScoreMap::Zero(5, 5);
    s(2, 1) = 0.8;
    s(2, 2) = 0.8;
    const auto out = nms(s, 2, 0.5);
    ASSERT_EQ(out.size(), 1u);
    EXPECT_EQ(out[0], (Cell{2, 1}));
    ScoreMap t = ScoreMap::Zero(5, 5);
    t(3, 0) = 0.8;
    t(2, 2) = 0.8;
    const auto out2 = nms(t, 2, 0.5);
    ASSERT_EQ(out2.size(), 1u);
    EXPECT_EQ(out2[0], (Cell{2, 2}));
}

TEST(Nms, MatchesAllPairsOracle) {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 100; ++trial) {
        const ScoreMap s = quantized_random(16, 16, rng);
        const int radius = trial % 4;
        const double tau = 0.1 * (trial % 6);
        EXPECT_EQ(nms(s, radius, tau), all_pairs_suppression(s, radius, tau)) << "trial " << trial;
    }
}

TEST(Nms, SeparationAndThreshold) {
    std::mt19937_64 rng(5);
    const ScoreMap s = quantized_random(20, 20, rng);
    const auto out = nms(s, 2, 0.3);
    for (std::size_t i = 0; i < out.size(); ++i) {
        EXPECT_GE(s(out[i].row, out[i].col), 0.3);
        for (std::size_t j = i + 1; j < out.size(); ++j)
            EXPECT_GT(std::max(std::abs(out[i].row - out[j].row), std::abs(out[i].col - out[j].col)), 2);
    }
}

TEST(Nms, InvariantUnderPositiveScaling) {
    std::mt19937_64 rng(6);
    const ScoreMap s = quantized_random(16, 16, rng);
    EXPECT_EQ(nms(s, 2, 0.0), nms(ScoreMap(0.37 * s), 2, 0.0));
}

TEST(Nms, RadiusZeroKeepsAllAboveThreshold) {
    std::mt19937_64 rng(7);
    const ScoreMap s = quantized_random(6, 6, rng);
    EXPECT_EQ(static_cast<Eigen::Index>(nms(s, 0, 0.5).size()), (s.array() >= 0.5).count());
    EXPECT_THROW(nms(s, -1, 0.5), InvalidArgument);
}

TEST(Subpixel, SymmetricPeak) {
    ScoreMap s(3, 3);
    s << 0.2, 0.5, 0.2, 0.5, 0.9, 0.5, 0.2, 0.5, 0.2;
    const auto off = refine_subpixel(s, {1, 1});
    EXPECT_EQ(off, Eigen::Vector2d::Zero());
}

TEST(Subpixel, RecoversQuadraticPeak) {
    const double px = 0.3, py = -0.2;
    ScoreMap s(5, 5);
    for (int r = 0; r < 5; ++r)
        for (int c = 0; c < 5; ++c) {
            const double dx = (c - 2) - px;
            const double dy = (r - 2) - py;
            s(r, c) = 0.9 - 0.08 * dx * dx - 0.05 * dy * dy + 0.02 * dx * dy;
        }
    const auto off = refine_subpixel(s, {2, 2});
    EXPECT_NEAR(off.x(), 0.3, 1e-6);
    EXPECT_NEAR(off.y(), -0.2, 1e-6);
}

TEST(Subpixel, BorderAndDegenerate) {
    ScoreMap s = ScoreMap::Constant(4, 4, 0.3);
    s(0, 2) = 0.9;
    EXPECT_EQ(refine_subpixel(s, {0, 2}), Eigen::Vector2d::Zero());
    EXPECT_EQ(refine_subpixel(s, {3, 3}), Eigen::Vector2d::Zero());
    EXPECT_EQ(refine_subpixel(ScoreMap::Constant(4, 4, 0.5), {1, 1}), Eigen::Vector2d::Zero());
}

TEST(Subpixel, ClampedInsideHalfCell) {
    ScoreMap s(3, 3);
    s << 0.0, 0.0, 0.0, 0.50, 0.51, 0.51, 0.0, 0.0, 0.0;
    const auto off = refine_subpixel(s, {1, 1});
    EXPECT_LT(off.x(), 0.5);
    EXPECT_GT(off.x(), 0.0);
}

TEST(Interpolate, CellCentreAndMidpoint) {
    std::mt19937_64 rng(1);
    const auto g = random_grid(4, 5, 8, 2, rng);
    const Eigen::VectorXd at = interpolate_descriptor(g, {(2 + 0.5) * 4, (1 + 0.5) * 4});
    EXPECT_TRUE(at.isApprox(g.values.cell(1, 2).normalized(), 1e-12));
    const Eigen::VectorXd mid = interpolate_descriptor(g, {3.0 * 4, 1.5 * 4});
    const Eigen::VectorXd expect = (0.5 * (g.values.cell(1, 2) + g.values.cell(1, 3))).normalized();
    EXPECT_TRUE(mid.isApprox(expect, 1e-12));
}

TEST(Interpolate, MatchesTentOracle) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const auto g = random_grid(6, 7, 16, 1, rng);
    for (int trial = 0; trial < 200; ++trial) {
        const double x = u(rng) * 7 * 2;
        const double y = u(rng) * 6 * 2;
        const Eigen::VectorXd got = interpolate_descriptor(g, {x, y});
        const Eigen::VectorXd want = tent_interpolation(g, x, y);
        EXPECT_LE((got - want).cwiseAbs().maxCoeff(), 1e-9) << x << "," << y;
        EXPECT_NEAR(got.norm(), 1.0, 1e-12);
    }
}

TEST(Interpolate, OutOfExtent) {
    std::mt19937_64 rng(1);
    const auto g = random_grid(4, 5, 8, 2, rng);
    EXPECT_THROW(interpolate_descriptor(g, {-0.1, 3.0}), InvalidArgument);
    EXPECT_THROW(interpolate_descriptor(g, {5.0, 16.01}), InvalidArgument);
    EXPECT_NO_THROW(interpolate_descriptor(g, {20.0, 16.0}));
}

TEST(Extract, NothingPasses) {
    std::mt19937_64 rng(4);
    auto g = random_grid(8, 8, 4, 1, rng);
    g.scores.setConstant(0.99);
    const auto pyr = two_level(g, rng);
    ExtractConfig c;
    c.tau = 1.0;
    EXPECT_TRUE(extract(pyr, c).empty());
    c.tau = 1.01;
    EXPECT_THROW(extract(pyr, c), InvalidArgument);
}

TEST(Extract, SingleCertainCell) {
    std::mt19937_64 rng(4);
    auto g = random_grid(8, 8, 4, 1, rng);
    g.scores(5, 3) = 1.0;
    const auto pyr = two_level(g, rng);
    ExtractConfig c;
    c.levels = {1};
    const auto kps = extract(pyr, c);
    ASSERT_EQ(kps.size(), 1u);
    EXPECT_EQ(kps[0].level, 1);
    EXPECT_DOUBLE_EQ(kps[0].x, 3.5 * 2);
    EXPECT_DOUBLE_EQ(kps[0].y, 5.5 * 2);
    EXPECT_DOUBLE_EQ(kps[0].score, 1.0);
    EXPECT_TRUE(kps[0].descriptor.isApprox(g.values.cell(5, 3).normalized(), 1e-12));
}

TEST(Extract, PlantedPeaksRecovered) {
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> jitter(-0.3, 0.3);
    for (int trial = 0; trial < 5; ++trial) {
        auto g = random_grid(64, 64, 8, 1, rng);
        std::vector<Eigen::Vector2d> planted;
        std::uniform_int_distribution<int> pos(3, 60);
        while (planted.size() < 10) {
            const Eigen::Vector2d c(pos(rng) + jitter(rng), pos(rng) + jitter(rng));
            bool clear = true;
            for (const auto& p : planted) clear = clear && (p - c).cwiseAbs().maxCoeff() > 8;
            if (clear) planted.push_back(c);
        }
        for (int r = 0; r < 64; ++r)
            for (int c = 0; c < 64; ++c) {
                double s = 0.0;
                for (const auto& p : planted) {
                    const double d2 = (Eigen::Vector2d(c, r) - p).squaredNorm();
                    s = std::max(s, 0.95 * std::exp(-d2 / 2.0));
                }
                g.scores(r, c) = s;
            }
        const auto pyr = two_level(g, rng);
        ExtractConfig cfg;
        cfg.levels = {1};
        cfg.nms_radius = 2;
        cfg.tau = 0.5;
        const auto kps = extract(pyr, cfg);
        ASSERT_EQ(kps.size(), 10u);
        std::set<std::size_t> hit;
        for (const auto& kp : kps) {
            for (std::size_t i = 0; i < planted.size(); ++i) {
                const Eigen::Vector2d px = (planted[i].array() + 0.5) * 2.0;
                if ((Eigen::Vector2d(kp.x, kp.y) - px).cwiseAbs().maxCoeff() <= 0.5 * 2.0) hit.insert(i);
            }
        }
        EXPECT_EQ(hit.size(), 10u);
    }
}

TEST(Extract, OrderingCapAndUnitDescriptors) {
    std::mt19937_64 rng(8);
    auto g = random_grid(16, 16, 8, 1, rng);
    g.scores = quantized_random(16, 16, rng);
    auto pyr = two_level(g, rng);
    pyr.levels[1].scores = quantized_random(8, 8, rng);
    ExtractConfig c;
    c.nms_radius = 2;
    const auto kps = extract(pyr, c);
    ASSERT_FALSE(kps.empty());
    for (std::size_t i = 0; i < kps.size(); ++i) {
        EXPECT_NEAR(kps[i].descriptor.norm(), 1.0, 1e-6);
        EXPECT_EQ(kps[i].descriptor.size(), kps[i].level == 1 ? 8 : 16);
        if (i > 0) {
            EXPECT_LE(kps[i - 1].level, kps[i].level);
            if (kps[i - 1].level == kps[i].level) EXPECT_GE(kps[i - 1].score, kps[i].score);
        }
        for (std::size_t j = i + 1; j < kps.size(); ++j) {
            if (kps[i].level != kps[j].level) continue;
            const double stride = kps[i].level == 1 ? 2 : 4;
            const double d = std::hypot(kps[i].x - kps[j].x, kps[i].y - kps[j].y);
            EXPECT_GE(d, c.nms_radius * stride - stride);
        }
    }
    c.max_per_level = 3;
    const auto capped = extract(pyr, c);
    EXPECT_LE(at_level(capped, 1).size(), 3u);
    EXPECT_LE(at_level(capped, 2).size(), 3u);
    c.max_per_level = 0;
    c.mode = DescriptorMode::Short;
    for (const auto& kp : extract(pyr, c)) {
        EXPECT_EQ(kp.descriptor.size(), kp.level == 1 ? 4 : 8);
        EXPECT_NEAR(kp.descriptor.norm(), 1.0, 1e-6);
    }
}

TEST(Extract, Deterministic) {
    std::mt19937_64 rng(9);
    auto g = random_grid(16, 16, 8, 1, rng);
    g.scores = quantized_random(16, 16, rng);
    const auto pyr = two_level(g, rng);
    const auto a = extract(pyr, {});
    const auto b = extract(pyr, {});
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].x, b[i].x);
        EXPECT_TRUE(a[i].descriptor == b[i].descriptor);
    }
}

TEST(Shorten, PrefixRenormalized) {
    Eigen::VectorXd v(4);
    v << 1, 0, 0, 0;
    EXPECT_EQ(shorten(v), Eigen::Vector2d(1, 0));
    v << 3, 4, 7, 1;
    EXPECT_TRUE(shorten(v).isApprox(Eigen::Vector2d(0.6, 0.8), 1e-15));
}

TEST(Pooled, DeepestLevelMean) {
    std::vector<Keypoint> kps(3);
    kps[0] = {1, 0, 0, 1, Eigen::Vector2d(1, 0)};
    kps[1] = {2, 0, 0, 1, Eigen::Vector4d(1, 0, 0, 0)};
    kps[2] = {2, 0, 0, 1, Eigen::Vector4d(0, 1, 0, 0)};
    const Eigen::VectorXd g = pooled_descriptor(kps);
    EXPECT_TRUE(g.isApprox(Eigen::Vector4d(1, 1, 0, 0).normalized(), 1e-15));
    EXPECT_EQ(pooled_descriptor({}).size(), 0);
}

}  // namespace
}  // namespace sfp::features
