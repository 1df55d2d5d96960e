#include "sfp/pyramid.hpp"

#include <cmath>
#include <random>
#include <string>

#include "sfp/error.hpp"

namespace sfp::pyramid {

std::vector<LevelSpec> default_levels() {
    const int dims[] = {32, 64, 128};
    return make_levels(dims);
}

std::vector<LevelSpec> make_levels(std::span<const int> dims) {
    std::vector<LevelSpec> levels;
    levels.reserve(dims.size());
    for (std::size_t i = 0; i < dims.size(); ++i) {
        const int index = static_cast<int>(i) + 1;
        levels.push_back({index, 1 << index, dims[i]});
    }
    validate_levels(levels);
    return levels;
}

void validate_levels(std::span<const LevelSpec> levels) {
    if (levels.size() < 2) {
        throw InvalidArgument("pyramid needs at least two levels");
    }
    if (levels.size() > 8) {
        throw InvalidArgument("pyramid supports at most eight levels");
    }
    for (std::size_t i = 0; i < levels.size(); ++i) {
        const auto& l = levels[i];
        if (l.index != static_cast<int>(i) + 1) {
            throw InvalidArgument("level indices must be contiguous from 1");
        }
        if (l.stride != (1 << l.index)) {
            throw InvalidArgument("level " + std::to_string(l.index) + " stride must be 2^index");
        }
        if (l.dim <= 0 || l.dim % 2 != 0) {
            throw InvalidArgument("level " + std::to_string(l.index) + " dim must be positive and even");
        }
        if (i > 0 && l.dim <= levels[i - 1].dim) {
            throw InvalidArgument("level dims must strictly increase with depth");
        }
    }
}

const FeatureGrid& DensePyramid::level(int index) const {
    for (const auto& g : levels) {
        if (g.level.index == index) {
            return g;
        }
    }
    throw InvalidArgument("pyramid has no level " + std::to_string(index));
}

Eigen::Index BinaryMask::count() const {
    return bits.cast<Eigen::Index>().sum();
}

double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

ScoreMap score_grid(const Tensor& features, const Eigen::VectorXd& omega) {
    if (omega.size() != features.channels()) {
        throw InvalidArgument("score weights have length " + std::to_string(omega.size()) +
                              ", features have " + std::to_string(features.channels()) + " channels");
    }
    if (!features.data.allFinite()) {
        throw InvalidArgument("features must be finite");
    }
    const Eigen::RowVectorXd logits = omega.transpose() * features.data;
    ScoreMap scores(features.rows, features.cols);
    for (int r = 0; r < features.rows; ++r) {
        for (int c = 0; c < features.cols; ++c) {
            scores(r, c) = sigmoid(logits(features.index(r, c)));
        }
    }
    return scores;
}

namespace {

void require_probabilities(const ScoreMap& scores) {
    for (Eigen::Index i = 0; i < scores.size(); ++i) {
        const double p = scores.data()[i];
        if (!(p >= 0.0 && p <= 1.0)) {
            throw InvalidArgument("scores must lie in [0, 1]");
        }
    }
}

}  // namespace

BinaryMask sample_mask(const ScoreMap& scores, const LevelSpec& level, std::uint64_t seed) {
    require_probabilities(scores);
    std::mt19937_64 rng(seed);
    BinaryMask mask{level, decltype(BinaryMask::bits)::Zero(scores.rows(), scores.cols())};
    // Row-major draw order so the stream does not depend on Eigen storage order.
    for (Eigen::Index r = 0; r < scores.rows(); ++r) {
        for (Eigen::Index c = 0; c < scores.cols(); ++c) {
            const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
            mask.bits(r, c) = u < scores(r, c) ? 1 : 0;
        }
    }
    return mask;
}

BinaryMask threshold_mask(const ScoreMap& scores, const LevelSpec& level, double tau) {
    if (!(tau >= 0.0 && tau <= 1.0)) {
        throw InvalidArgument("threshold must lie in [0, 1]");
    }
    BinaryMask mask{level, (scores.array() >= tau).cast<std::uint8_t>()};
    return mask;
}

SparseLevel sparsify(const FeatureGrid& grid, const BinaryMask& mask) {
    if (mask.bits.rows() != grid.rows() || mask.bits.cols() != grid.cols()) {
        throw InvalidArgument("mask shape does not match feature grid");
    }
    if (grid.scores.rows() != grid.rows() || grid.scores.cols() != grid.cols()) {
        throw InvalidArgument("score grid shape does not match feature grid");
    }
    SparseLevel out{grid.level, grid.rows(), grid.cols(), {}};
    for (int r = 0; r < grid.rows(); ++r) {
        for (int c = 0; c < grid.cols(); ++c) {
            if (mask.bits(r, c) == 0) {
                continue;
            }
            out.entries.push_back({r, c, grid.scores(r, c), grid.values.cell(r, c)});
        }
    }
    return out;
}

Tensor densify(const SparseLevel& level, int dim) {
    Tensor t(level.rows, level.cols, dim);
    for (const auto& e : level.entries) {
        if (e.descriptor.size() != dim) {
            throw InvalidArgument("sparse descriptor length does not match level dim");
        }
        if (e.row < 0 || e.row >= level.rows || e.col < 0 || e.col >= level.cols) {
            throw InvalidArgument("sparse entry outside grid");
        }
        t.cell(e.row, e.col) = e.descriptor;
    }
    return t;
}

double compression_cost(std::span<const ScoreMap> scores, std::span<const int> dims) {
    if (scores.size() != dims.size()) {
        throw InvalidArgument("compression cost needs one dim per score grid");
    }
    double cost = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        cost += scores[i].sum() * static_cast<double>(dims[i]);
    }
    return cost;
}

}  // namespace sfp::pyramid
