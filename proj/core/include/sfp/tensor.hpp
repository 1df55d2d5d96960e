#pragma once

#include <Eigen/Core>

namespace sfp {

/// Channel-major image or feature map. `data` is channels x (rows * cols);
/// column `r * cols + c` holds the channel vector of cell (r, c).
struct Tensor {
    int rows = 0;
    int cols = 0;
    Eigen::MatrixXd data;

    Tensor() = default;
    Tensor(int rows_, int cols_, int channels)
        : rows(rows_), cols(cols_), data(Eigen::MatrixXd::Zero(channels, static_cast<Eigen::Index>(rows_) * cols_)) {}

    int channels() const { return static_cast<int>(data.rows()); }
    Eigen::Index cells() const { return static_cast<Eigen::Index>(rows) * cols; }
    Eigen::Index index(int r, int c) const { return static_cast<Eigen::Index>(r) * cols + c; }

    double& at(int r, int c, int ch) { return data(ch, index(r, c)); }
    double at(int r, int c, int ch) const { return data(ch, index(r, c)); }

    auto cell(int r, int c) { return data.col(index(r, c)); }
    auto cell(int r, int c) const { return data.col(index(r, c)); }

    bool same_shape(const Tensor& other) const {
        return rows == other.rows && cols == other.cols && channels() == other.channels();
    }
};

/// Row-major score grid: entry (r, c) is the score of cell (r, c).
using ScoreMap = Eigen::MatrixXd;

}  // namespace sfp
