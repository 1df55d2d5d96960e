#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "sfp/error.hpp"
#include "sfp/geometry.hpp"
#include "sfp/synth.hpp"
#include "test_support.hpp"

namespace sfp::geometry {
namespace {

Pose random_pose(std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    return {test::random_rotation(rng), Eigen::Vector3d(n(rng), n(rng), n(rng))};
}

TEST(Backproject, PrincipalPointOnAxis) {
    const Intrinsics K;
    const Eigen::Vector3d p = backproject({K.cx, K.cy}, 2.5, Pose{}, K);
    EXPECT_EQ(p, Eigen::Vector3d(0, 0, 2.5));
}

TEST(Backproject, InverseOfProjection) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const Intrinsics K{520, 515, 318, 242, 640, 480};
    for (int i = 0; i < 1000; ++i) {
        const Pose pose = random_pose(rng);
        const Eigen::Vector2d px(u(rng) * 640, u(rng) * 480);
        const double depth = 0.2 + 10 * u(rng);
        const auto back = project(pose, K, backproject(px, depth, pose, K));
        ASSERT_TRUE(back.has_value());
        EXPECT_LT((*back - px).norm(), 1e-9);
    }
}

TEST(Backproject, RejectsNonPositiveDepth) {
    EXPECT_THROW(backproject({1, 1}, 0.0, Pose{}, Intrinsics{}), InvalidArgument);
    EXPECT_THROW(backproject({1, 1}, -1.0, Pose{}, Intrinsics{}), InvalidArgument);
}

TEST(Backproject, RecoversSyntheticLandmarks) {
    const auto scene = synth::synth_scene(4, 100, 3, 0.0, 0.0, 0.0);
    for (const auto& f : scene.frames)
        for (const auto& o : f.observations) {
            const Eigen::Vector3d p = backproject(o.pixel, o.depth, f.pose, scene.intrinsics);
            EXPECT_LT((p - scene.landmarks[static_cast<std::size_t>(o.landmark)]).norm(), 1e-9);
        }
}

TEST(Project, BehindCamera) {
    EXPECT_FALSE(project(Pose{}, Intrinsics{}, {0, 0, -1}).has_value());
    EXPECT_FALSE(project(Pose{}, Intrinsics{}, {0, 0, 0}).has_value());
    const auto px = project(Pose{}, Intrinsics{}, {1, -1, 2});
    ASSERT_TRUE(px.has_value());
    EXPECT_EQ(*px, Eigen::Vector2d(570, -10));
}

TEST(Triangulate, NoiselessPair) {
    const Intrinsics K;
    const Pose a = look_at({-1, 0, -5}, {0, 0, 0});
    const Pose b = look_at({1, 0.3, -5}, {0, 0, 0});
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int i = 0; i < 200; ++i) {
        const Eigen::Vector3d X(u(rng), u(rng), u(rng));
        const auto t = triangulate(*project(a, K, X), *project(b, K, X), a, b, K);
        ASSERT_EQ(t.status, TriangulationStatus::Ok);
        EXPECT_LT((t.point - X).norm(), 1e-6);
        EXPECT_LT(t.reprojection_error, 1e-6);
    }
}

TEST(Triangulate, IdenticalPosesDegenerate) {
    const Intrinsics K;
    const Pose a = look_at({0, 0, -5}, {0, 0, 0});
    const auto px = *project(a, K, {0.2, 0.1, 0});
    EXPECT_EQ(triangulate(px, px, a, a, K).status, TriangulationStatus::Degenerate);
}

TEST(Triangulate, PointBehindCamera) {
    const Intrinsics K;
    const Pose a = look_at({-1, 0, -5}, {0, 0, 0});
    const Pose b = look_at({1, 0, -5}, {0, 0, 0});
    // Rays that only meet behind both cameras: each pixel seen with the image mirrored.
    const Eigen::Vector3d behind(0, 0, -10);
    const Eigen::Vector3d ca = a.transform(behind), cb = b.transform(behind);
    const Eigen::Vector2d pa(K.cx + K.fx * ca.x() / ca.z(), K.cy + K.fy * ca.y() / ca.z());
    const Eigen::Vector2d pb(K.cx + K.fx * cb.x() / cb.z(), K.cy + K.fy * cb.y() / cb.z());
    EXPECT_EQ(triangulate(pa, pb, a, b, K).status, TriangulationStatus::Cheirality);
}

TEST(Rotation, AngleExamples) {
    EXPECT_NEAR(rotation_angle_deg(Eigen::Matrix3d::Identity(), test::rot_z(10)), 10.0, 1e-12);
    EXPECT_NEAR(rotation_angle_deg(Eigen::Matrix3d::Identity(), test::rot_z(180)), 180.0, 1e-12);
    EXPECT_NEAR(rotation_angle_deg(test::rot_z(-30), test::rot_z(45)), 75.0, 1e-12);
    EXPECT_EQ(rotation_angle_deg(test::rot_z(20), test::rot_z(20)), 0.0);
    // Tiny angles keep full precision.
    EXPECT_NEAR(rotation_angle_deg(Eigen::Matrix3d::Identity(), test::rot_z(1e-9)), 1e-9, 1e-18);
}

TEST(Rotation, ExpAndOrthonormalize) {
    std::mt19937_64 rng(3);
    for (int i = 0; i < 50; ++i) {
        const Eigen::Matrix3d R = test::random_rotation(rng);
        EXPECT_LT((R.transpose() * R - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_NEAR(R.determinant(), 1.0, 1e-12);
        const Eigen::Matrix3d noisy = R + 1e-4 * Eigen::Matrix3d::Random();
        const Eigen::Matrix3d fixed = orthonormalize(noisy);
        EXPECT_LT((fixed.transpose() * fixed - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_LT((fixed - R).norm(), 1e-3);
    }
    EXPECT_EQ(exp_so3(Eigen::Vector3d::Zero()), Eigen::Matrix3d::Identity());
    const Eigen::Vector3d v(1, 2, 3), w(-2, 0.5, 4);
    EXPECT_TRUE((skew(v) * w).isApprox(v.cross(w)));
}

TEST(LookAt, FacesTarget) {
    const Eigen::Vector3d eye(3, 1, -4), target(0.5, 0, 0.2);
    const Pose p = look_at(eye, target);
    EXPECT_LT((p.center() - eye).norm(), 1e-12);
    const Eigen::Vector3d c = p.transform(target);
    EXPECT_NEAR(c.x(), 0.0, 1e-12);
    EXPECT_NEAR(c.y(), 0.0, 1e-12);
    EXPECT_GT(c.z(), 0.0);
    // Something above the target appears higher in the image (smaller y).
    const auto up = project(p, Intrinsics{}, target + Eigen::Vector3d::UnitY());
    ASSERT_TRUE(up.has_value());
    EXPECT_LT(up->y(), Intrinsics{}.cy);
    EXPECT_NO_THROW(p.validate());
}

TEST(Pose, AlgebraAndValidation) {
    std::mt19937_64 rng(4);
    const Pose a = random_pose(rng), b = random_pose(rng);
    const Eigen::Vector3d x(0.3, -1, 2);
    EXPECT_TRUE((a * b).transform(x).isApprox(a.transform(b.transform(x)), 1e-12));
    EXPECT_TRUE((a * a.inverse()).transform(x).isApprox(x, 1e-12));
    Pose bad = a;
    bad.R(0, 0) += 1e-6;
    EXPECT_THROW(bad.validate(), InvalidArgument);
    Pose mirrored;
    mirrored.R(2, 2) = -1;
    EXPECT_THROW(mirrored.validate(), InvalidArgument);
}

TEST(Intrinsics, Validation) {
    EXPECT_NO_THROW(Intrinsics{}.validate());
    EXPECT_THROW((Intrinsics{0, 500, 320, 240, 640, 480}).validate(), InvalidArgument);
    EXPECT_THROW((Intrinsics{500, 500, 700, 240, 640, 480}).validate(), InvalidArgument);
    const Eigen::Matrix3d M = Intrinsics{}.matrix();
    EXPECT_EQ(M(0, 0), 500);
    EXPECT_EQ(M(0, 2), 320);
    EXPECT_EQ(M(2, 2), 1);
}

TEST(Bearing, UnitRayThroughPixel) {
    const Intrinsics K;
    const Eigen::Vector3d b = bearing(K, {K.cx + 500, K.cy});
    EXPECT_NEAR(b.norm(), 1.0, 1e-15);
    EXPECT_TRUE(b.isApprox(Eigen::Vector3d(1, 0, 1).normalized()));
}

}  // namespace
}  // namespace sfp::geometry
