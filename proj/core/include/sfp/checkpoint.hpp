#pragma once

#include <filesystem>
#include <string>

#include "sfp/autoencoder.hpp"

namespace sfp::autoencoder {

inline constexpr int kCheckpointVersion = 1;

/// JSON container with the channel plan, lambda, every weight and the running statistics.
std::string checkpoint_to_string(const NetParams& params);

/// Throws FormatError on a bad version or container, InvalidArgument on inconsistent shapes.
NetParams checkpoint_from_string(const std::string& text);

void save_checkpoint(const NetParams& params, const std::filesystem::path& path);
NetParams load_checkpoint(const std::filesystem::path& path);

}  // namespace sfp::autoencoder
