#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "sfp/features.hpp"
#include "sfp/geometry.hpp"
#include "sfp/pyramid.hpp"

namespace sfp::map {

using features::DescriptorMode;

/// Bit (i - 1) of `presence` is set when level i contributes a slice.
/// `descriptor` holds the present slices deepest level first, each unit length.
struct Landmark {
    Eigen::Vector3d position = Eigen::Vector3d::Zero();
    int level = 1;  // deepest level present
    std::uint8_t presence = 0;
    Eigen::VectorXd descriptor;
    int observations = 0;  // frames that see it

    bool has_level(int level_index) const { return (presence >> (level_index - 1)) & 1U; }
};

struct MapFrame {
    Eigen::VectorXd global;
    std::vector<std::uint32_t> landmark_ids;  // sorted, unique
};

struct LandmarkMap {
    std::vector<pyramid::LevelSpec> levels;
    DescriptorMode mode = DescriptorMode::Full;
    std::vector<Landmark> landmarks;
    std::vector<MapFrame> frames;

    /// Stored length of one level's slice in the current mode.
    int slice_dim(int level_index) const;

    /// (offset, length) of a level's slice inside a landmark descriptor with `presence`.
    std::pair<int, int> slice_range(std::uint8_t presence, int level_index) const;
    int descriptor_length(std::uint8_t presence) const;

    auto slice(const Landmark& lm, int level_index) const {
        const auto [offset, length] = slice_range(lm.presence, level_index);
        return lm.descriptor.segment(offset, length);
    }

    /// Throws InvalidArgument on inconsistent levels, descriptor lengths or frame ids.
    void validate() const;
};

struct FrameInput {
    std::vector<features::Keypoint> keypoints;
    geometry::Pose pose;
    std::vector<double> depths;           // per keypoint z-depth; empty = no depth
    Eigen::VectorXd global;               // empty = pooled from the keypoints
};

struct BuildConfig {
    geometry::Intrinsics intrinsics;
    double merge_radius = 0.01;            // meters
    double match_floor = 0.8;              // two-view matching, cosine
    double max_reprojection_px = 2.0;      // two-view triangulation check
    double min_ray_angle_deg = 0.1;
};

/// Frames with depth are backprojected; frames without depth are matched
/// pairwise per level and triangulated. Candidates closer than the merge
/// radius become one landmark. Throws PipelineError when nothing survives.
LandmarkMap build_map(std::span<const FrameInput> frames, const std::vector<pyramid::LevelSpec>& levels,
                      const BuildConfig& config);

/// Every slice cut to its first d_i / 2 entries and renormalized; frame
/// global descriptors are cut the same way.
LandmarkMap shorten_descriptors(const LandmarkMap& map);

struct MapStats {
    DescriptorMode mode = DescriptorMode::Full;
    std::uint64_t landmarks = 0;
    std::uint64_t frames = 0;
    std::uint64_t header_bytes = 0;
    std::uint64_t position_bytes = 0;
    std::uint64_t landmark_meta_bytes = 0;  // level + presence bytes
    std::uint64_t descriptor_bytes = 0;
    std::vector<std::uint64_t> descriptor_bytes_per_level;  // index i - 1
    std::uint64_t frame_index_bytes = 0;
    std::uint64_t total_bytes = 0;

    double megabytes() const { return static_cast<double>(total_bytes) / 1e6; }
};

MapStats map_stats(const LandmarkMap& map);

inline constexpr std::uint16_t kMapFormatVersion = 1;

std::vector<std::uint8_t> serialize(const LandmarkMap& map);
LandmarkMap deserialize(const std::vector<std::uint8_t>& bytes);
void save_map(const LandmarkMap& map, const std::filesystem::path& path);
LandmarkMap load_map(const std::filesystem::path& path);

/// Copy with every stored scalar rounded to the 32-bit file precision.
LandmarkMap to_storage_precision(const LandmarkMap& map);

}  // namespace sfp::map
