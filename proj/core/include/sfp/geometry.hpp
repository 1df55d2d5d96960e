#pragma once

#include <optional>

#include <Eigen/Core>

namespace sfp::geometry {

/// Camera-from-world rigid transform: x_cam = R * x_world + t.
struct Pose {
    Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
    Eigen::Vector3d t = Eigen::Vector3d::Zero();

    Eigen::Vector3d center() const { return -R.transpose() * t; }
    Eigen::Vector3d transform(const Eigen::Vector3d& x) const { return R * x + t; }
    Pose inverse() const { return {R.transpose(), -R.transpose() * t}; }
    Pose operator*(const Pose& o) const { return {R * o.R, R * o.t + t}; }

    /// Throws InvalidArgument unless R is orthonormal to 1e-9 with det > 0 and t is finite.
    void validate() const;
};

struct Intrinsics {
    double fx = 500.0;
    double fy = 500.0;
    double cx = 320.0;
    double cy = 240.0;
    int width = 640;
    int height = 480;

    Eigen::Matrix3d matrix() const;
    bool contains(const Eigen::Vector2d& px) const;
    void validate() const;
};

/// Pixel of a world point, or nothing when it is not in front of the camera.
std::optional<Eigen::Vector2d> project(const Pose& pose, const Intrinsics& K, const Eigen::Vector3d& world);

/// Unit ray through a pixel, camera frame.
Eigen::Vector3d bearing(const Intrinsics& K, const Eigen::Vector2d& pixel);

/// World point at z-depth `depth` along the ray through `pixel`. Throws unless depth > 0.
Eigen::Vector3d backproject(const Eigen::Vector2d& pixel, double depth, const Pose& pose, const Intrinsics& K);

enum class TriangulationStatus { Ok, Degenerate, Cheirality };

struct Triangulation {
    TriangulationStatus status = TriangulationStatus::Degenerate;
    Eigen::Vector3d point = Eigen::Vector3d::Zero();
    double reprojection_error = 0.0;  // px, worse of the two views
};

/// Two-view linear triangulation. Degenerate when the baseline vanishes or
/// the rays are closer than `min_angle_deg`; Cheirality when the point lies
/// behind either camera.
Triangulation triangulate(const Eigen::Vector2d& px1, const Eigen::Vector2d& px2, const Pose& pose1,
                          const Pose& pose2, const Intrinsics& K, double min_angle_deg = 0.1);

/// Camera at `eye` looking at `target`; image y points away from `up`.
Pose look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
             const Eigen::Vector3d& up = Eigen::Vector3d::UnitY());

/// Rotation by angle |w| about w / |w|.
Eigen::Matrix3d exp_so3(const Eigen::Vector3d& w);

/// Nearest rotation in Frobenius norm.
Eigen::Matrix3d orthonormalize(const Eigen::Matrix3d& M);

Eigen::Matrix3d skew(const Eigen::Vector3d& v);

/// Angle of R_a^T R_b in degrees, in [0, 180].
double rotation_angle_deg(const Eigen::Matrix3d& Ra, const Eigen::Matrix3d& Rb);

}  // namespace sfp::geometry
