#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "sfp/tensor.hpp"

namespace sfp::pyramid {

/// One pyramid level. Level 1 is the shallowest; stride = 2^index pixels per cell.
struct LevelSpec {
    int index = 1;
    int stride = 2;
    int dim = 32;

    bool operator==(const LevelSpec&) const = default;
};

/// Three levels, dims {32, 64, 128}, strides {2, 4, 8}.
std::vector<LevelSpec> default_levels();

/// Levels with index 1..n, stride 2^i and the given dims.
std::vector<LevelSpec> make_levels(std::span<const int> dims);

/// Throws InvalidArgument unless indices are contiguous from 1, strides are
/// 2^index, dims strictly increase, are even, and there are at least two levels.
void validate_levels(std::span<const LevelSpec> levels);

struct FeatureGrid {
    LevelSpec level;
    Tensor values;    // dim x (rows * cols)
    ScoreMap scores;  // rows x cols, entries in [0, 1]

    int rows() const { return values.rows; }
    int cols() const { return values.cols; }
};

struct DensePyramid {
    std::vector<FeatureGrid> levels;  // shallow -> deep
    int image_rows = 0;
    int image_cols = 0;

    const FeatureGrid& level(int index) const;
    const FeatureGrid& deepest() const { return levels.back(); }
};

struct BinaryMask {
    LevelSpec level;
    Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> bits;

    Eigen::Index count() const;
};

struct SparseEntry {
    int row = 0;
    int col = 0;
    double score = 0.0;
    Eigen::VectorXd descriptor;
};

struct SparseLevel {
    LevelSpec level;
    int rows = 0;
    int cols = 0;
    std::vector<SparseEntry> entries;  // row-major cell order, no duplicates
};

struct SparsePyramid {
    std::vector<SparseLevel> levels;
};

double sigmoid(double x);

/// p = sigmoid(omega . f) per cell.
ScoreMap score_grid(const Tensor& features, const Eigen::VectorXd& omega);

/// Independent Bernoulli(p) draws per cell, reproducible from `seed`.
BinaryMask sample_mask(const ScoreMap& scores, const LevelSpec& level, std::uint64_t seed);

/// bit = 1 iff p >= tau.
BinaryMask threshold_mask(const ScoreMap& scores, const LevelSpec& level, double tau);

SparseLevel sparsify(const FeatureGrid& grid, const BinaryMask& mask);

/// Zero-filled dense tensor with the sparse descriptors written back.
Tensor densify(const SparseLevel& level, int dim);

/// sum_i sum_j p_ij * d_i: expected number of stored descriptor scalars.
double compression_cost(std::span<const ScoreMap> scores, std::span<const int> dims);

}  // namespace sfp::pyramid
