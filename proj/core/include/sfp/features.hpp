#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "sfp/pyramid.hpp"

namespace sfp::features {

enum class DescriptorMode : std::uint8_t { Full = 0, Short = 1 };

struct Keypoint {
    int level = 1;
    double x = 0.0;  // pixels, column direction
    double y = 0.0;  // pixels, row direction
    double score = 0.0;
    Eigen::VectorXd descriptor;  // unit length; d_i (full) or d_i / 2 (short)
};

struct Cell {
    int row = 0;
    int col = 0;
    bool operator==(const Cell&) const = default;
};

struct ExtractConfig {
    std::vector<int> levels;  // empty = every level of the pyramid
    double tau = 0.5;
    int nms_radius = 1;       // cells, Chebyshev
    int max_per_level = 0;    // 0 = unlimited
    bool interpolate = true;
    DescriptorMode mode = DescriptorMode::Full;
};

/// Cells with p >= tau that beat every other cell within `radius` under the
/// order (score descending, row, col ascending). Row-major output.
std::vector<Cell> nms(const ScoreMap& scores, int radius, double tau);

/// Stationary point of the quadratic through the 3x3 neighbourhood, as
/// (dx, dy) in cells. Zero on the border or when the fit is not a maximum.
Eigen::Vector2d refine_subpixel(const ScoreMap& scores, const Cell& cell);

/// Bilinear blend of the four cells around a pixel, L2-normalized.
/// A zero blend is returned as is. Throws outside [0, cols*stride] x [0, rows*stride].
Eigen::VectorXd interpolate_descriptor(const pyramid::FeatureGrid& grid, const Eigen::Vector2d& pixel);

/// Threshold -> nms -> subpixel -> descriptor, per level. Output is grouped by
/// level (ascending) and sorted by descending score within a level.
std::vector<Keypoint> extract(const pyramid::DensePyramid& pyramid, const ExtractConfig& config);

/// First half of a descriptor, renormalized.
Eigen::VectorXd shorten(const Eigen::VectorXd& descriptor);

/// L2-normalized copy; zero vectors stay zero.
Eigen::VectorXd normalized(const Eigen::VectorXd& v);

std::vector<Keypoint> at_level(std::span<const Keypoint> keypoints, int level);

/// Normalized mean descriptor of the keypoints on the deepest level present.
/// Empty input gives an empty vector.
Eigen::VectorXd pooled_descriptor(std::span<const Keypoint> keypoints);

// SFPK container: magic, version u16, count u32, then per keypoint
// level u8, x f32, y f32, score f32, dim u16, descriptor f32[dim].
inline constexpr std::uint16_t kKeypointFormatVersion = 1;

std::vector<std::uint8_t> serialize_keypoints(std::span<const Keypoint> keypoints);
std::vector<Keypoint> deserialize_keypoints(const std::vector<std::uint8_t>& bytes);
void save_keypoints(std::span<const Keypoint> keypoints, const std::filesystem::path& path);
std::vector<Keypoint> load_keypoints(const std::filesystem::path& path);

}  // namespace sfp::features
