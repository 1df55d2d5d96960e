#include "sfp/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Geometry>
#include <Eigen/SVD>

#include "sfp/error.hpp"

namespace sfp::geometry {

void Pose::validate() const {
    if (!R.allFinite() || !t.allFinite()) {
        throw InvalidArgument("pose must be finite");
    }
    const double ortho = (R.transpose() * R - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
    if (ortho >= 1e-9 || R.determinant() <= 0.0) {
        throw InvalidArgument("pose rotation is not a proper rotation");
    }
}

Eigen::Matrix3d Intrinsics::matrix() const {
    Eigen::Matrix3d K;
    K << fx, 0, cx, 0, fy, cy, 0, 0, 1;
    return K;
}

bool Intrinsics::contains(const Eigen::Vector2d& px) const {
    return px.x() >= 0.0 && px.y() >= 0.0 && px.x() < width && px.y() < height;
}

void Intrinsics::validate() const {
    if (!(fx > 0.0 && fy > 0.0) || width <= 0 || height <= 0) {
        throw InvalidArgument("focal lengths and image dims must be positive");
    }
    if (!(cx >= 0.0 && cx <= width && cy >= 0.0 && cy <= height)) {
        throw InvalidArgument("principal point must lie inside the image");
    }
}

std::optional<Eigen::Vector2d> project(const Pose& pose, const Intrinsics& K, const Eigen::Vector3d& world) {
    const Eigen::Vector3d x = pose.transform(world);
    if (!(x.z() > 0.0)) {
        return std::nullopt;
    }
    return Eigen::Vector2d(K.fx * x.x() / x.z() + K.cx, K.fy * x.y() / x.z() + K.cy);
}

Eigen::Vector3d bearing(const Intrinsics& K, const Eigen::Vector2d& pixel) {
    return Eigen::Vector3d((pixel.x() - K.cx) / K.fx, (pixel.y() - K.cy) / K.fy, 1.0).normalized();
}

Eigen::Vector3d backproject(const Eigen::Vector2d& pixel, double depth, const Pose& pose, const Intrinsics& K) {
    if (!(depth > 0.0) || !std::isfinite(depth)) {
        throw InvalidArgument("depth must be positive and finite");
    }
    const Eigen::Vector3d cam(depth * (pixel.x() - K.cx) / K.fx, depth * (pixel.y() - K.cy) / K.fy, depth);
    return pose.R.transpose() * (cam - pose.t);
}

Triangulation triangulate(const Eigen::Vector2d& px1, const Eigen::Vector2d& px2, const Pose& pose1,
                          const Pose& pose2, const Intrinsics& K, double min_angle_deg) {
    Triangulation out;
    const Eigen::Vector3d d1 = pose1.R.transpose() * bearing(K, px1);
    const Eigen::Vector3d d2 = pose2.R.transpose() * bearing(K, px2);
    const double baseline = (pose1.center() - pose2.center()).norm();
    const double angle = std::atan2(d1.cross(d2).norm(), d1.dot(d2)) * 180.0 / std::numbers::pi;
    if (!(baseline > 1e-12) || !(angle > min_angle_deg)) {
        return out;
    }
    // DLT on normalized image coordinates.
    const Eigen::Vector2d n1((px1.x() - K.cx) / K.fx, (px1.y() - K.cy) / K.fy);
    const Eigen::Vector2d n2((px2.x() - K.cx) / K.fx, (px2.y() - K.cy) / K.fy);
    Eigen::Matrix<double, 3, 4> P1;
    Eigen::Matrix<double, 3, 4> P2;
    P1 << pose1.R, pose1.t;
    P2 << pose2.R, pose2.t;
    Eigen::Matrix4d A;
    A.row(0) = n1.x() * P1.row(2) - P1.row(0);
    A.row(1) = n1.y() * P1.row(2) - P1.row(1);
    A.row(2) = n2.x() * P2.row(2) - P2.row(0);
    A.row(3) = n2.y() * P2.row(2) - P2.row(1);
    for (int i = 0; i < 4; ++i) {
        A.row(i).normalize();
    }
    const Eigen::JacobiSVD<Eigen::Matrix4d> svd(A, Eigen::ComputeFullV);
    const Eigen::Vector4d X = svd.matrixV().col(3);
    if (std::abs(X(3)) < 1e-15) {
        return out;
    }
    out.point = X.head<3>() / X(3);
    const auto p1 = project(pose1, K, out.point);
    const auto p2 = project(pose2, K, out.point);
    if (!p1 || !p2) {
        out.status = TriangulationStatus::Cheirality;
        return out;
    }
    out.status = TriangulationStatus::Ok;
    out.reprojection_error = std::max((*p1 - px1).norm(), (*p2 - px2).norm());
    return out;
}

Pose look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target, const Eigen::Vector3d& up) {
    const Eigen::Vector3d z = (target - eye).normalized();
    Eigen::Vector3d y = -up + up.dot(z) * z;
    if (y.norm() < 1e-12) {
        throw InvalidArgument("look_at: viewing direction parallel to up");
    }
    y.normalize();
    const Eigen::Vector3d x = y.cross(z);
    Pose p;
    p.R.row(0) = x;
    p.R.row(1) = y;
    p.R.row(2) = z;
    p.t = -p.R * eye;
    return p;
}

Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
    Eigen::Matrix3d S;
    S << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
    return S;
}

Eigen::Matrix3d exp_so3(const Eigen::Vector3d& w) {
    const double theta = w.norm();
    if (theta < 1e-12) {
        return Eigen::Matrix3d::Identity() + skew(w);
    }
    return Eigen::AngleAxisd(theta, w / theta).toRotationMatrix();
}

Eigen::Matrix3d orthonormalize(const Eigen::Matrix3d& M) {
    const Eigen::JacobiSVD<Eigen::Matrix3d> svd(M, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Matrix3d D = Eigen::Matrix3d::Identity();
    D(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0 ? -1.0 : 1.0;
    return svd.matrixU() * D * svd.matrixV().transpose();
}

double rotation_angle_deg(const Eigen::Matrix3d& Ra, const Eigen::Matrix3d& Rb) {
    const Eigen::Matrix3d D = Ra.transpose() * Rb;
    // atan2 of (sin, cos) keeps precision for tiny angles where acos does not.
    const Eigen::Vector3d axis(D(2, 1) - D(1, 2), D(0, 2) - D(2, 0), D(1, 0) - D(0, 1));
    const double s = 0.5 * axis.norm();
    const double c = std::clamp(0.5 * (D.trace() - 1.0), -1.0, 1.0);
    return std::atan2(s, c) * 180.0 / std::numbers::pi;
}

}  // namespace sfp::geometry
