#pragma once

// Brute-force references shared by the unit tests and the acceptance run.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Core>

#include "sfp/features.hpp"
#include "sfp/pyramid.hpp"

namespace sfp::test {

using features::Cell;
using pyramid::DensePyramid;
using pyramid::FeatureGrid;

inline FeatureGrid random_grid(int rows, int cols, int dim, int index, std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    FeatureGrid g;
    g.level = {index, 1 << index, dim};
    g.values = Tensor(rows, cols, dim);
    for (Eigen::Index i = 0; i < g.values.data.size(); ++i) g.values.data.data()[i] = n(rng);
    g.scores = ScoreMap::Zero(rows, cols);
    return g;
}

inline ScoreMap quantized_random(int rows, int cols, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> q(0, 10);
    ScoreMap s(rows, cols);
    for (Eigen::Index i = 0; i < s.size(); ++i) s.data()[i] = q(rng) / 10.0;
    return s;
}

// All pairs within the window: the one later in (score desc, row, col) order is suppressed.
inline std::vector<Cell> all_pairs_suppression(const ScoreMap& s, int radius, double tau) {
    const int rows = static_cast<int>(s.rows());
    const int cols = static_cast<int>(s.cols());
    std::vector<bool> suppressed(static_cast<std::size_t>(rows * cols), false);
    for (int a = 0; a < rows * cols; ++a) {
        for (int b = 0; b < rows * cols; ++b) {
            if (a == b) continue;
            const int ra = a / cols, ca = a % cols, rb = b / cols, cb = b % cols;
            if (std::max(std::abs(ra - rb), std::abs(ca - cb)) > radius) continue;
            const double sa = s(ra, ca), sb = s(rb, cb);
            const bool b_wins = sb > sa || (sb == sa && b < a);
            if (b_wins) suppressed[static_cast<std::size_t>(a)] = true;
        }
    }
    std::vector<Cell> out;
    for (int a = 0; a < rows * cols; ++a)
        if (!suppressed[static_cast<std::size_t>(a)] && s(a / cols, a % cols) >= tau) out.push_back({a / cols, a % cols});
    return out;
}

// Sum of tent weights over the whole grid, one component at a time.
inline Eigen::VectorXd tent_interpolation(const FeatureGrid& g, double x, double y) {
    const double u = std::clamp(x / g.level.stride - 0.5, 0.0, g.cols() - 1.0);
    const double v = std::clamp(y / g.level.stride - 0.5, 0.0, g.rows() - 1.0);
    Eigen::VectorXd out(g.values.channels());
    for (int k = 0; k < g.values.channels(); ++k) {
        double acc = 0.0;
        for (int r = 0; r < g.rows(); ++r)
            for (int c = 0; c < g.cols(); ++c) {
                const double w = std::max(0.0, 1.0 - std::abs(u - c)) * std::max(0.0, 1.0 - std::abs(v - r));
                acc += w * g.values.at(r, c, k);
            }
        out[k] = acc;
    }
    double norm = 0.0;
    for (int k = 0; k < out.size(); ++k) norm += out[k] * out[k];
    return out / std::sqrt(norm);
}

inline DensePyramid two_level(FeatureGrid first, std::mt19937_64& rng) {
    DensePyramid p;
    p.image_rows = first.rows() * first.level.stride;
    p.image_cols = first.cols() * first.level.stride;
    auto second = random_grid(first.rows() / 2, first.cols() / 2, first.values.channels() * 2, 2, rng);
    p.levels.push_back(std::move(first));
    p.levels.push_back(std::move(second));
    return p;
}

}  // namespace sfp::test
