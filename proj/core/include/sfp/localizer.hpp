#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "sfp/features.hpp"
#include "sfp/geometry.hpp"
#include "sfp/map.hpp"
#include "sfp/pnp.hpp"
#include "sfp/pyramid.hpp"

namespace sfp::localizer {

using features::DescriptorMode;
using features::Keypoint;
using geometry::Intrinsics;
using geometry::Pose;
using map::LandmarkMap;

/// dot(a, b) / sqrt(|a|^2 |b|^2), clamped to [-1, 1]. Exactly 1 for a == b != 0.
double similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

/// Mean-pooled deepest level, normalized.
Eigen::VectorXd global_descriptor(const pyramid::DensePyramid& pyramid);

/// Mean of the deepest-level keypoint descriptors, normalized.
Eigen::VectorXd global_descriptor(std::span<const Keypoint> keypoints);

/// Frame ids by descending similarity, ties by id. Throws on an empty map.
std::vector<int> retrieve(const Eigen::VectorXd& query, const LandmarkMap& map, int k);

struct Match {
    int query = 0;     // index into the query keypoint list
    int landmark = 0;  // landmark id
    double similarity = 0.0;
};

struct MatchSet {
    int level = 0;
    double radius_px = std::numeric_limits<double>::infinity();
    std::vector<Match> matches;  // ascending query index
};

/// Mutual nearest neighbours between the query keypoints of `level` and the
/// candidate landmarks carrying that level, kept when similarity >= floor.
MatchSet match_level(std::span<const Keypoint> query, const LandmarkMap& map, std::span<const int> candidates,
                     int level, double floor);

/// Landmarks within `radius_px` of a keypoint under `prior` form its
/// candidate set; mutual best similarity inside those sets, then the same
/// floor and a post-hoc reprojection check.
MatchSet gated_match(std::span<const Keypoint> query, const LandmarkMap& map, std::span<const int> candidates,
                     int level, const Pose& prior, const Intrinsics& K, double radius_px, double floor);

/// Landmark ids whose projection under `prior` lies within `radius_px` of the pixel.
std::vector<int> gate_candidates(const Eigen::Vector2d& pixel, const LandmarkMap& map, std::span<const int> candidates,
                                 int level, const Pose& prior, const Intrinsics& K, double radius_px);

struct LocalizerConfig {
    int top_k = 3;
    std::vector<double> similarity_floor = {0.8, 0.8, 0.8};  // per level, index i - 1
    /// Per level, index i - 1. The deepest entry is unused (no prior yet).
    std::vector<double> gate_radius_px = {4.0, 8.0, std::numeric_limits<double>::infinity()};
    pnp::RansacConfig ransac{1000, 4.0, 0.999, 4, 0};
    pnp::RefineOptions refine{};
    int min_inliers = 12;
    DescriptorMode mode = DescriptorMode::Full;

    /// Floors 0.8; radii infinite at the deepest level, then 8 px, then 4 px.
    static LocalizerConfig defaults_for(int levels);

    /// Throws unless there is one floor and radius per level, radii are
    /// non-increasing deep -> shallow and thresholds are positive.
    void validate(int levels) const;
};

struct TraceEntry {
    int level = 0;
    Pose pose;
    int matches = 0;
    int inliers = 0;
    double mean_reprojection_px = 0.0;
    double milliseconds = 0.0;
};

struct LocalizationResult {
    bool success = false;
    std::vector<TraceEntry> trace;  // deep -> shallow, successful levels only
    std::vector<int> retrieved;
    double retrieval_milliseconds = 0.0;

    const Pose* final_pose() const { return trace.empty() ? nullptr : &trace.back().pose; }
};

struct Query {
    std::vector<Keypoint> keypoints;
    Eigen::VectorXd global;  // empty = pooled from the keypoints
};

/// Retrieve -> deepest-level matching -> PnP -> per shallower level gated
/// matching -> PnP -> refinement. `frames` bypasses retrieval when non-empty.
LocalizationResult localize(const Query& query, const LandmarkMap& map, const Intrinsics& K,
                            const LocalizerConfig& config, std::span<const int> frames = {});

}  // namespace sfp::localizer
