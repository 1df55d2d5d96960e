#pragma once

#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "sfp/features.hpp"
#include "sfp/geometry.hpp"

namespace sfp::metrics {

struct PoseError {
    double translation_m = 0.0;  // between camera centres
    double rotation_deg = 0.0;   // in [0, 180]
};

PoseError pose_error(const geometry::Pose& estimate, const geometry::Pose& truth);

struct MedianErrors {
    double translation_m = 0.0;
    double rotation_deg = 0.0;
};

/// Component-wise median; even counts average the central pair. Throws on empty input.
MedianErrors median_errors(std::span<const PoseError> errors);

double median(std::vector<double> values);

/// Two views of a plane related by b ~ H a.
struct HomographyPair {
    Eigen::Matrix3d H = Eigen::Matrix3d::Identity();
    std::vector<features::Keypoint> a;
    std::vector<features::Keypoint> b;
};

using PointMatch = std::pair<Eigen::Vector2d, Eigen::Vector2d>;  // (pixel in a, pixel in b)
using Matcher = std::function<std::vector<PointMatch>(const HomographyPair&)>;

Eigen::Vector2d transfer(const Eigen::Matrix3d& H, const Eigen::Vector2d& p);

/// Mutual nearest neighbours on descriptor similarity.
std::vector<PointMatch> mutual_nearest_matcher(const HomographyPair& pair);

std::vector<double> default_thresholds();  // 1 .. 10 px

/// Per threshold, mean over pairs of the fraction of matches whose transfer
/// error is <= threshold. A pair without matches counts as 0.
std::vector<double> mma(std::span<const HomographyPair> pairs, const Matcher& matcher,
                        std::span<const double> thresholds);

struct ResultRow {
    std::string method;
    double map_mb = 0.0;
    double median_cm = 0.0;
    double median_deg = 0.0;
};

/// Tab-separated table with a header row.
std::string format_results_table(std::span<const ResultRow> rows);

/// "threshold<TAB>accuracy" lines with a header row.
std::string format_mma_curve(std::span<const double> thresholds, std::span<const double> accuracy);

}  // namespace sfp::metrics
