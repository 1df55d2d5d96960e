#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "sfp/geometry.hpp"

namespace sfp::pnp {

using geometry::Intrinsics;
using geometry::Pose;

struct Correspondence {
    Eigen::Vector2d pixel;
    Eigen::Vector3d point;  // world
};

/// Up to four poses mapping the three world points onto the three unit
/// bearings (camera frame). Points must not be collinear.
std::vector<Pose> p3p(const std::array<Eigen::Vector3d, 3>& bearings, const std::array<Eigen::Vector3d, 3>& points);

/// Rigid transform (R, t) minimizing sum |R * from + t - to|^2.
Pose absolute_orientation(std::span<const Eigen::Vector3d> from, std::span<const Eigen::Vector3d> to);

/// Pixel distance, or +inf when the point is not in front of the camera.
double reprojection_error(const Pose& pose, const Intrinsics& K, const Correspondence& c);

struct RansacConfig {
    int max_iterations = 1000;
    double threshold_px = 4.0;
    double confidence = 0.999;
    int min_inliers = 4;
    std::uint64_t seed = 0;
};

enum class RansacStatus { Ok, TooFewMatches, NoConsensus };

struct RansacResult {
    RansacStatus status = RansacStatus::NoConsensus;
    Pose pose;
    std::vector<int> inliers;  // ascending
    int iterations = 0;

    bool ok() const { return status == RansacStatus::Ok; }
};

/// P3P hypotheses on random triples, scored by inlier count (ties: lower
/// squared error sum). Stops early once `confidence` is reached.
RansacResult pnp_ransac(std::span<const Correspondence> matches, const Intrinsics& K, const RansacConfig& config);

struct RefineOptions {
    int max_iterations = 20;
    double step_tolerance = 1e-12;
};

struct RefineResult {
    Pose pose;
    bool singular = false;
    int iterations = 0;
    std::vector<double> cost_history;  // mean squared reprojection error, px^2; entry 0 is the start
};

/// Gauss-Newton on reprojection residuals, update R <- exp(dw) R, t <- t + dt.
/// A step that would raise the cost is halved until it does not or is abandoned.
RefineResult refine_pose(const Pose& pose, std::span<const Correspondence> matches, const Intrinsics& K,
                         const RefineOptions& options = {});

}  // namespace sfp::pnp
