#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "sfp/error.hpp"
#include "sfp/pyramid.hpp"

namespace sfp::pyramid {
namespace {

FeatureGrid random_grid(int rows, int cols, int dim, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    FeatureGrid g;
    g.level = {1, 2, dim};
    g.values = Tensor(rows, cols, dim);
    for (Eigen::Index i = 0; i < g.values.data.size(); ++i) g.values.data.data()[i] = n(rng);
    g.scores = ScoreMap::Constant(rows, cols, 0.7);
    return g;
}

TEST(Levels, DefaultPlan) {
    const auto levels = default_levels();
    ASSERT_EQ(levels.size(), 3u);
    EXPECT_EQ(levels[0], (LevelSpec{1, 2, 32}));
    EXPECT_EQ(levels[1], (LevelSpec{2, 4, 64}));
    EXPECT_EQ(levels[2], (LevelSpec{3, 8, 128}));
    EXPECT_NO_THROW(validate_levels(levels));
}

TEST(Levels, RejectsBadPlans) {
    const std::vector<int> odd{32, 63};
    EXPECT_THROW(validate_levels(make_levels(odd)), InvalidArgument);
    const std::vector<int> flat{32, 32};
    EXPECT_THROW(validate_levels(make_levels(flat)), InvalidArgument);
    const std::vector<int> single{32};
    EXPECT_THROW(validate_levels(make_levels(single)), InvalidArgument);
    auto levels = default_levels();
    levels[1].stride = 6;
    EXPECT_THROW(validate_levels(levels), InvalidArgument);
}

TEST(ScoreGrid, ZeroDotGivesHalf) {
    Tensor f(2, 3, 4);
    f.data.setRandom();
    const ScoreMap p = score_grid(f, Eigen::VectorXd::Zero(4));
    ASSERT_EQ(p.rows(), 2);
    ASSERT_EQ(p.cols(), 3);
    EXPECT_TRUE((p.array() == 0.5).all());
}

TEST(ScoreGrid, UnitDot) {
    Tensor f(1, 1, 2);
    f.data << 0.25, 0.5;
    const Eigen::Vector2d w(2.0, 1.0);
    // 1 / (1 + e^-1)
    EXPECT_NEAR(score_grid(f, w)(0, 0), 0.7310585786300049, 1e-15);
}

TEST(ScoreGrid, CellOrderAndRange) {
    Tensor f(3, 2, 1);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 2; ++c) f.at(r, c, 0) = 40.0 * (r * 2 + c) - 100.0;
    const ScoreMap p = score_grid(f, Eigen::VectorXd::Ones(1));
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 2; ++c) {
            EXPECT_DOUBLE_EQ(p(r, c), sigmoid(f.at(r, c, 0)));
            EXPECT_GE(p(r, c), 0.0);
            EXPECT_LE(p(r, c), 1.0);
        }
    EXPECT_LT(p(0, 0), p(0, 1));
    EXPECT_LT(p(1, 1), p(2, 0));
}

TEST(ScoreGrid, DimensionMismatch) {
    Tensor f(2, 2, 4);
    EXPECT_THROW(score_grid(f, Eigen::VectorXd::Zero(3)), InvalidArgument);
}

TEST(SampleMask, Extremes) {
    const LevelSpec lvl{1, 2, 32};
    EXPECT_EQ(sample_mask(ScoreMap::Zero(8, 8), lvl, 5).count(), 0);
    EXPECT_EQ(sample_mask(ScoreMap::Ones(8, 8), lvl, 5).count(), 64);
}

TEST(SampleMask, HalfProbabilityMean) {
    const auto m = sample_mask(ScoreMap::Constant(100, 100, 0.5), {1, 2, 32}, 11);
    const double mean = static_cast<double>(m.count()) / 1e4;
    EXPECT_GE(mean, 0.48);
    EXPECT_LE(mean, 0.52);
}

TEST(SampleMask, ReproducibleAndBinary) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    ScoreMap p(12, 9);
    for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = u(rng);
    const auto a = sample_mask(p, {2, 4, 64}, 99);
    const auto b = sample_mask(p, {2, 4, 64}, 99);
    EXPECT_TRUE(a.bits == b.bits);
    EXPECT_TRUE((a.bits.array() <= 1).all());
    const auto c = sample_mask(p, {2, 4, 64}, 100);
    EXPECT_FALSE(a.bits == c.bits);
}

TEST(SampleMask, PerCellFrequencyWithinFiveSigma) {
    ScoreMap p(1, 4);
    p << 0.05, 0.3, 0.6, 0.95;
    const int draws = 10000;
    Eigen::Vector4d hits = Eigen::Vector4d::Zero();
    for (int s = 0; s < draws; ++s) {
        const auto m = sample_mask(p, {1, 2, 32}, static_cast<std::uint64_t>(s));
        for (int c = 0; c < 4; ++c) hits[c] += m.bits(0, c);
    }
    for (int c = 0; c < 4; ++c) {
        const double sigma = std::sqrt(p(0, c) * (1 - p(0, c)) / draws);
        EXPECT_LE(std::abs(hits[c] / draws - p(0, c)), 5 * sigma) << "cell " << c;
    }
}

TEST(SampleMask, RejectsOutOfRangeScores) {
    ScoreMap p = ScoreMap::Constant(2, 2, 0.5);
    p(1, 0) = 1.2;
    EXPECT_THROW(sample_mask(p, {1, 2, 32}, 0), InvalidArgument);
    p(1, 0) = -0.1;
    EXPECT_THROW(sample_mask(p, {1, 2, 32}, 0), InvalidArgument);
}

TEST(ThresholdMask, Rules) {
    ScoreMap p(1, 3);
    p << 0.2, 0.6, 0.9;
    const auto m = threshold_mask(p, {1, 2, 32}, 0.5);
    EXPECT_EQ(m.bits(0, 0), 0);
    EXPECT_EQ(m.bits(0, 1), 1);
    EXPECT_EQ(m.bits(0, 2), 1);
    EXPECT_EQ(threshold_mask(p, {1, 2, 32}, 0.0).count(), 3);
    ScoreMap q(1, 2);
    q << 1.0, 0.999;
    const auto top = threshold_mask(q, {1, 2, 32}, 1.0);
    EXPECT_EQ(top.bits(0, 0), 1);
    EXPECT_EQ(top.bits(0, 1), 0);
    EXPECT_THROW(threshold_mask(q, {1, 2, 32}, 1.0 + 1e-12), InvalidArgument);
    EXPECT_THROW(threshold_mask(q, {1, 2, 32}, -1e-12), InvalidArgument);
}

TEST(Sparsify, AllOnesKeepsEverything) {
    const auto g = random_grid(4, 5, 6, 1);
    const auto s = sparsify(g, threshold_mask(g.scores, g.level, 0.0));
    ASSERT_EQ(s.entries.size(), 20u);
    for (const auto& e : s.entries) {
        EXPECT_TRUE(e.descriptor == g.values.cell(e.row, e.col));
        EXPECT_DOUBLE_EQ(e.score, 0.7);
    }
    const Tensor back = densify(s, 6);
    EXPECT_TRUE(back.data == g.values.data);
}

TEST(Sparsify, AllZerosIsEmpty) {
    const auto g = random_grid(4, 5, 6, 2);
    EXPECT_TRUE(sparsify(g, threshold_mask(g.scores, g.level, 0.9)).entries.empty());
}

TEST(Sparsify, SingleBit) {
    const auto g = random_grid(4, 5, 6, 3);
    BinaryMask m{g.level, decltype(BinaryMask::bits)::Zero(4, 5)};
    m.bits(2, 3) = 1;
    const auto s = sparsify(g, m);
    ASSERT_EQ(s.entries.size(), 1u);
    EXPECT_EQ(s.entries[0].row, 2);
    EXPECT_EQ(s.entries[0].col, 3);
    EXPECT_TRUE(s.entries[0].descriptor == g.values.cell(2, 3));
}

TEST(Sparsify, DensifiedEqualsMaskedProduct) {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 20; ++trial) {
        const int rows = 1 + static_cast<int>(rng() % 8);
        const int cols = 1 + static_cast<int>(rng() % 8);
        const auto g = random_grid(rows, cols, 3, rng());
        BinaryMask m{g.level, decltype(BinaryMask::bits)(rows, cols)};
        for (Eigen::Index i = 0; i < m.bits.size(); ++i) m.bits.data()[i] = static_cast<std::uint8_t>(rng() & 1U);
        const Tensor d = densify(sparsify(g, m), 3);
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c)
                for (int ch = 0; ch < 3; ++ch) EXPECT_EQ(d.at(r, c, ch), m.bits(r, c) * g.values.at(r, c, ch));
    }
}

TEST(Sparsify, ShapeMismatch) {
    const auto g = random_grid(4, 5, 6, 4);
    BinaryMask m{g.level, decltype(BinaryMask::bits)::Zero(5, 4)};
    EXPECT_THROW(sparsify(g, m), InvalidArgument);
}

TEST(CompressionCost, Examples) {
    const std::vector<ScoreMap> zero{ScoreMap::Zero(3, 3)};
    const std::vector<int> d256{256};
    EXPECT_EQ(compression_cost(zero, d256), 0.0);

    ScoreMap one(1, 2);
    one << 0.5, 0.25;
    const std::vector<ScoreMap> single{one};
    EXPECT_DOUBLE_EQ(compression_cost(single, d256), 192.0);

    const std::vector<ScoreMap> two{ScoreMap::Constant(1, 1, 0.5), ScoreMap::Constant(1, 1, 0.25)};
    const std::vector<int> dims{256, 128};
    EXPECT_DOUBLE_EQ(compression_cost(two, dims), 160.0);
}

TEST(CompressionCost, AdditiveOnDisjointSupports) {
    ScoreMap a = ScoreMap::Zero(4, 4);
    ScoreMap b = ScoreMap::Zero(4, 4);
    a.topRows(2).setConstant(0.3);
    b.bottomRows(2).setConstant(0.6);
    const std::vector<int> d{64};
    const std::vector<ScoreMap> va{a}, vb{b}, vab{ScoreMap(a + b)};
    EXPECT_DOUBLE_EQ(compression_cost(va, d) + compression_cost(vb, d), compression_cost(vab, d));
    const std::vector<int> d2{128};
    EXPECT_DOUBLE_EQ(compression_cost(va, d2), 2.0 * compression_cost(va, d));
}

TEST(CompressionCost, DimsMustMatchLevels) {
    const std::vector<ScoreMap> s{ScoreMap::Zero(1, 1), ScoreMap::Zero(1, 1)};
    const std::vector<int> d{32};
    EXPECT_THROW(compression_cost(s, d), InvalidArgument);
}

}  // namespace
}  // namespace sfp::pyramid
