#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "sfp/features.hpp"
#include "sfp/geometry.hpp"
#include "sfp/map.hpp"
#include "sfp/metrics.hpp"
#include "sfp/pnp.hpp"
#include "sfp/pyramid.hpp"
#include "sfp/tensor.hpp"

// Synthetic scenes with exact ground truth.

namespace sfp::synth {

struct SceneConfig {
    std::uint64_t seed = 0;
    int n_landmarks = 200;
    int n_frames = 8;
    double noise_px = 0.0;
    double outlier_rate = 0.0;
    double descriptor_noise = 0.0;
    std::vector<pyramid::LevelSpec> levels = pyramid::default_levels();
    /// Probability that a landmark's deepest level is 1, 2, ...
    std::vector<double> level_weights = {0.5, 0.3, 0.2};
    geometry::Intrinsics intrinsics{};
    Eigen::Vector3d box_half_extent{2.0, 1.5, 1.0};
    double camera_distance = 6.0;
    double azimuth_span_deg = 35.0;
};

struct Observation {
    int landmark = 0;
    int level = 1;
    Eigen::Vector2d pixel;
    double depth = 0.0;  // true z-depth in the camera
    Eigen::VectorXd descriptor;
    bool outlier = false;
};

struct Frame {
    geometry::Pose pose;
    std::vector<Observation> observations;
};

struct Scene {
    std::vector<pyramid::LevelSpec> levels;
    geometry::Intrinsics intrinsics;
    std::vector<Eigen::Vector3d> landmarks;
    std::vector<int> landmark_level;                        // deepest level carried
    std::vector<std::vector<Eigen::VectorXd>> descriptors;  // [landmark][level - 1], unit length
    std::vector<Frame> frames;
};

/// Landmarks uniform in the box, cameras on an arc around it looking at the
/// centre. A landmark with deepest level L is observed at levels 1..L with
/// the same pixel. Deterministic per seed.
Scene synth_scene(const SceneConfig& config);
Scene synth_scene(std::uint64_t seed, int n_landmarks, int n_frames, double noise_px, double outlier_rate,
                  double descriptor_noise);

/// Observations of the scene from an arbitrary pose.
Frame render_frame(const Scene& scene, const geometry::Pose& pose, double noise_px, double outlier_rate,
                   double descriptor_noise, std::uint64_t seed);

/// A frame of a different volume with unrelated descriptors, seen by a camera
/// placed among the scene's own.
Frame disjoint_frame(const Scene& scene, std::uint64_t seed, int n_points = 150);

std::vector<features::Keypoint> keypoints(const Frame& frame);
std::vector<double> depths(const Frame& frame);
map::FrameInput frame_input(const Frame& frame, bool with_depth);

struct PnpProblem {
    geometry::Pose truth;
    std::vector<pnp::Correspondence> matches;
    std::vector<bool> outlier;
};

/// Points in the default box seen from a camera on the arc; outliers are
/// moved at least 20 px away from their true projection.
PnpProblem synth_pnp(std::uint64_t seed, int n, double noise_px, double outlier_rate,
                     const geometry::Intrinsics& K = {});

/// Pairs of views of a plane: points in `a` are exact, points in `b` are the
/// transferred points plus Gaussian noise. Descriptors are shared.
std::vector<metrics::HomographyPair> synth_homography_pairs(std::uint64_t seed, int n_pairs, int n_points,
                                                            double noise_px, int descriptor_dim = 64);

/// Grey images in [0, 1]: mid-grey background plus a few Gaussian blobs.
std::vector<Tensor> synth_images(std::uint64_t seed, int count, int rows, int cols);

}  // namespace sfp::synth
