#include "sfp/features.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sfp/error.hpp"

namespace sfp::features {

namespace {

// Total order used by suppression: higher score first, then lower (row, col).
bool beats(const ScoreMap& s, int r, int c, int r2, int c2) {
    if (s(r, c) != s(r2, c2)) {
        return s(r, c) > s(r2, c2);
    }
    return r != r2 ? r < r2 : c < c2;
}

}  // namespace

std::vector<Cell> nms(const ScoreMap& scores, int radius, double tau) {
    if (radius < 0) {
        throw InvalidArgument("nms radius must be non-negative");
    }
    const int rows = static_cast<int>(scores.rows());
    const int cols = static_cast<int>(scores.cols());
    std::vector<Cell> out;
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            if (!(scores(r, c) >= tau)) {
                continue;
            }
            bool keep = true;
            for (int rr = std::max(0, r - radius); keep && rr <= std::min(rows - 1, r + radius); ++rr) {
                for (int cc = std::max(0, c - radius); cc <= std::min(cols - 1, c + radius); ++cc) {
                    if ((rr != r || cc != c) && !beats(scores, r, c, rr, cc)) {
                        keep = false;
                        break;
                    }
                }
            }
            if (keep) {
                out.push_back({r, c});
            }
        }
    }
    return out;
}

Eigen::Vector2d refine_subpixel(const ScoreMap& s, const Cell& cell) {
    const int r = cell.row;
    const int c = cell.col;
    if (r <= 0 || c <= 0 || r >= s.rows() - 1 || c >= s.cols() - 1) {
        return Eigen::Vector2d::Zero();
    }
    const double gx = 0.5 * (s(r, c + 1) - s(r, c - 1));
    const double gy = 0.5 * (s(r + 1, c) - s(r - 1, c));
    const double hxx = s(r, c + 1) - 2.0 * s(r, c) + s(r, c - 1);
    const double hyy = s(r + 1, c) - 2.0 * s(r, c) + s(r - 1, c);
    const double hxy = 0.25 * (s(r + 1, c + 1) - s(r + 1, c - 1) - s(r - 1, c + 1) + s(r - 1, c - 1));
    const double det = hxx * hyy - hxy * hxy;
    // Needs a proper maximum: negative definite Hessian.
    if (!(hxx < 0.0) || !(det > 1e-14 * std::max(1.0, hxx * hxx + hyy * hyy))) {
        return Eigen::Vector2d::Zero();
    }
    Eigen::Vector2d offset(-(hyy * gx - hxy * gy) / det, -(hxx * gy - hxy * gx) / det);
    const double lim = std::nextafter(0.5, 0.0);
    offset = offset.cwiseMax(-lim).cwiseMin(lim);
    return offset;
}

Eigen::VectorXd normalized(const Eigen::VectorXd& v) {
    const double n = v.norm();
    return n > 0.0 ? Eigen::VectorXd(v / n) : v;
}

Eigen::VectorXd shorten(const Eigen::VectorXd& descriptor) {
    if (descriptor.size() % 2 != 0) {
        throw InvalidArgument("cannot halve a descriptor of odd length " + std::to_string(descriptor.size()));
    }
    return normalized(descriptor.head(descriptor.size() / 2));
}

Eigen::VectorXd interpolate_descriptor(const pyramid::FeatureGrid& grid, const Eigen::Vector2d& pixel) {
    const double stride = grid.level.stride;
    const int rows = grid.rows();
    const int cols = grid.cols();
    if (rows == 0 || cols == 0) {
        throw InvalidArgument("cannot interpolate on an empty grid");
    }
    // Cell (r, c) is centred on pixel ((c + 0.5) s, (r + 0.5) s).
    const double u = pixel.x() / stride - 0.5;
    const double v = pixel.y() / stride - 0.5;
    if (!(u >= -0.5 && u <= cols - 0.5 && v >= -0.5 && v <= rows - 0.5)) {
        throw InvalidArgument("point (" + std::to_string(pixel.x()) + ", " + std::to_string(pixel.y()) +
                              ") lies outside the level " + std::to_string(grid.level.index) + " grid");
    }
    const double uc = std::clamp(u, 0.0, cols - 1.0);
    const double vc = std::clamp(v, 0.0, rows - 1.0);
    const int c0 = std::min(static_cast<int>(std::floor(uc)), cols - 1);
    const int r0 = std::min(static_cast<int>(std::floor(vc)), rows - 1);
    const int c1 = std::min(c0 + 1, cols - 1);
    const int r1 = std::min(r0 + 1, rows - 1);
    const double a = uc - c0;
    const double b = vc - r0;
    const auto& t = grid.values;
    Eigen::VectorXd d = (1 - a) * (1 - b) * t.cell(r0, c0) + a * (1 - b) * t.cell(r0, c1) +
                        (1 - a) * b * t.cell(r1, c0) + a * b * t.cell(r1, c1);
    return normalized(d);
}

std::vector<Keypoint> extract(const pyramid::DensePyramid& pyramid, const ExtractConfig& config) {
    if (!(config.tau >= 0.0 && config.tau <= 1.0)) {
        throw InvalidArgument("tau must lie in [0, 1]");
    }
    if (config.nms_radius < 0 || config.max_per_level < 0) {
        throw InvalidArgument("nms radius and keypoint cap must be non-negative");
    }
    std::vector<int> levels = config.levels;
    if (levels.empty()) {
        for (const auto& g : pyramid.levels) {
            levels.push_back(g.level.index);
        }
    }
    std::sort(levels.begin(), levels.end());
    levels.erase(std::unique(levels.begin(), levels.end()), levels.end());

    std::vector<Keypoint> out;
    for (int index : levels) {
        const auto& grid = pyramid.level(index);
        const double stride = grid.level.stride;
        std::vector<Keypoint> found;
        for (const Cell& cell : nms(grid.scores, config.nms_radius, config.tau)) {
            const Eigen::Vector2d offset =
                config.interpolate ? refine_subpixel(grid.scores, cell) : Eigen::Vector2d::Zero();
            Keypoint kp;
            kp.level = index;
            kp.x = (cell.col + 0.5 + offset.x()) * stride;
            kp.y = (cell.row + 0.5 + offset.y()) * stride;
            if (pyramid.image_cols > 0) {
                kp.x = std::min(kp.x, static_cast<double>(pyramid.image_cols));
                kp.y = std::min(kp.y, static_cast<double>(pyramid.image_rows));
            }
            kp.score = grid.scores(cell.row, cell.col);
            kp.descriptor = config.interpolate ? interpolate_descriptor(grid, {kp.x, kp.y})
                                               : normalized(grid.values.cell(cell.row, cell.col));
            if (config.mode == DescriptorMode::Short) {
                kp.descriptor = shorten(kp.descriptor);
            }
            if (kp.descriptor.norm() == 0.0) {
                continue;  // nothing to match against
            }
            found.push_back(std::move(kp));
        }
        std::stable_sort(found.begin(), found.end(),
                         [](const Keypoint& a, const Keypoint& b) { return a.score > b.score; });
        if (config.max_per_level > 0 && static_cast<int>(found.size()) > config.max_per_level) {
            found.resize(static_cast<std::size_t>(config.max_per_level));
        }
        std::move(found.begin(), found.end(), std::back_inserter(out));
    }
    return out;
}

std::vector<Keypoint> at_level(std::span<const Keypoint> keypoints, int level) {
    std::vector<Keypoint> out;
    for (const auto& kp : keypoints) {
        if (kp.level == level) {
            out.push_back(kp);
        }
    }
    return out;
}

Eigen::VectorXd pooled_descriptor(std::span<const Keypoint> keypoints) {
    int deepest = 0;
    for (const auto& kp : keypoints) {
        deepest = std::max(deepest, kp.level);
    }
    Eigen::VectorXd sum;
    for (const auto& kp : keypoints) {
        if (kp.level != deepest) {
            continue;
        }
        if (sum.size() == 0) {
            sum = Eigen::VectorXd::Zero(kp.descriptor.size());
        } else if (sum.size() != kp.descriptor.size()) {
            throw InvalidArgument("keypoints on one level have different descriptor lengths");
        }
        sum += kp.descriptor;
    }
    return normalized(sum);
}

}  // namespace sfp::features
