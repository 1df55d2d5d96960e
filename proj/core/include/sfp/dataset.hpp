#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sfp/geometry.hpp"
#include "sfp/tensor.hpp"

// Posed-image sequences laid out as frame-XXXXXX.{color,depth}.<ext> plus
// frame-XXXXXX.pose.txt (4x4 camera-to-world, row-major text).

namespace sfp::dataset {

std::string frame_stem(int index);  // "frame-000012"

struct SequenceFrame {
    int index = 0;
    std::filesystem::path color;
    std::filesystem::path pose;
    std::optional<std::filesystem::path> depth;
};

/// Frames with a colour image and a pose file, ascending index.
std::vector<SequenceFrame> list_sequence(const std::filesystem::path& dir);

/// Reads a camera-to-world matrix and returns the camera-from-world pose.
/// The rotation block is snapped to the nearest rotation.
geometry::Pose read_pose_file(const std::filesystem::path& path);
void write_pose_file(const std::filesystem::path& path, const geometry::Pose& pose);

/// Binary netpbm (P5 grey, P6 RGB; 8 or 16 bit). Values scaled to [0, 1].
Tensor read_pnm(const std::filesystem::path& path);

/// Raw 16-bit samples of a P5 depth map, row-major.
std::vector<std::uint16_t> read_pgm16(const std::filesystem::path& path, int& rows, int& cols);

/// 8-bit P5 (one channel) or P6 (three channels); values clamped to [0, 1].
void write_pnm(const std::filesystem::path& path, const Tensor& image);

/// Channel mean.
Tensor to_gray(const Tensor& image);

}  // namespace sfp::dataset
