#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <Eigen/LU>

#include "sfp/geometry.hpp"

namespace sfp::test {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("sfp-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline Eigen::Matrix3d random_rotation(std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    return geometry::exp_so3(Eigen::Vector3d(n(rng), n(rng), n(rng)));
}

inline Eigen::Matrix3d rot_z(double degrees) {
    return geometry::exp_so3(Eigen::Vector3d(0.0, 0.0, degrees * M_PI / 180.0));
}

}  // namespace sfp::test
