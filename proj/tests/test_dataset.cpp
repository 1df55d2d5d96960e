#include <gtest/gtest.h>

#include <fstream>
#include <random>

#include "sfp/dataset.hpp"
#include "sfp/error.hpp"
#include "test_support.hpp"

namespace sfp::dataset {
namespace {

void write_text(const std::filesystem::path& p, const std::string& s) { std::ofstream(p) << s; }

void write_bytes(const std::filesystem::path& p, const std::string& header, const std::vector<std::uint8_t>& raster) {
    std::ofstream out(p, std::ios::binary);
    out << header;
    out.write(reinterpret_cast<const char*>(raster.data()), static_cast<std::streamsize>(raster.size()));
}

TEST(FrameStem, ZeroPadded) {
    EXPECT_EQ(frame_stem(0), "frame-000000");
    EXPECT_EQ(frame_stem(12), "frame-000012");
    EXPECT_EQ(frame_stem(123456), "frame-123456");
}

TEST(PoseFile, RoundTrip) {
    test::TempDir dir;
    std::mt19937_64 rng(1);
    const geometry::Pose p{test::random_rotation(rng), Eigen::Vector3d(0.5, -1.25, 3)};
    write_pose_file(dir / "p.txt", p);
    const auto back = read_pose_file(dir / "p.txt");
    EXPECT_LT((back.R - p.R).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((back.t - p.t).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(PoseFile, CameraToWorldConvention) {
    test::TempDir dir;
    // Camera centre at (1, 2, 3), axes aligned with the world.
    write_text(dir / "p.txt", "1 0 0 1\n0 1 0 2\n0 0 1 3\n0 0 0 1\n");
    const auto p = read_pose_file(dir / "p.txt");
    EXPECT_TRUE(p.R.isIdentity(0.0));
    EXPECT_EQ(p.center(), Eigen::Vector3d(1, 2, 3));
    EXPECT_EQ(p.t, Eigen::Vector3d(-1, -2, -3));
}

TEST(PoseFile, SnapsNearRotation) {
    test::TempDir dir;
    write_text(dir / "p.txt", "1.0001 0 0 0\n0 0.9999 0 0\n0 0 1 0\n0 0 0 1\n");
    const auto p = read_pose_file(dir / "p.txt");
    EXPECT_LT((p.R.transpose() * p.R - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(PoseFile, Errors) {
    test::TempDir dir;
    EXPECT_THROW(read_pose_file(dir / "missing.txt"), IoError);
    write_text(dir / "short.txt", "1 0 0 0\n0 1 0 0\n");
    EXPECT_THROW(read_pose_file(dir / "short.txt"), FormatError);
    write_text(dir / "nan.txt", "nan 0 0 0\n0 1 0 0\n0 0 1 0\n0 0 0 1\n");
    EXPECT_THROW(read_pose_file(dir / "nan.txt"), FormatError);
}

TEST(Pnm, GreyAndColourRoundTrip) {
    test::TempDir dir;
    Tensor grey(3, 4, 1);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 4; ++c) grey.at(r, c, 0) = (r * 4 + c) / 11.0;
    write_pnm(dir / "g.pgm", grey);
    const auto g = read_pnm(dir / "g.pgm");
    ASSERT_TRUE(g.same_shape(grey));
    EXPECT_LT((g.data - grey.data).cwiseAbs().maxCoeff(), 0.5 / 255 + 1e-12);

    Tensor rgb(2, 2, 3);
    rgb.data << 0, 1, 0.5, 2, 1, 0, 0.25, -1, 0.75, 0.75, 0, 1;
    write_pnm(dir / "c.ppm", rgb);
    const auto c = read_pnm(dir / "c.ppm");
    ASSERT_TRUE(c.same_shape(rgb));
    EXPECT_EQ(c.at(0, 1, 0), 1.0);  // clamped from 2
    EXPECT_EQ(c.at(0, 1, 1), 0.0);  // clamped from -1
    EXPECT_EQ(to_gray(c).channels(), 1);
    EXPECT_NEAR(to_gray(c).at(0, 0, 0), (0.0 + 1.0 + c.at(0, 0, 2)) / 3.0, 1e-15);
    EXPECT_THROW(write_pnm(dir / "x.pgm", Tensor(2, 2, 2)), InvalidArgument);
}

TEST(Pnm, HeaderCommentsAndSixteenBit) {
    test::TempDir dir;
    write_bytes(dir / "a.pgm", "P5\n# comment\n2 1\n65535\n", {0x12, 0x34, 0xFF, 0xFF});
    int rows = 0, cols = 0;
    const auto raw = read_pgm16(dir / "a.pgm", rows, cols);
    EXPECT_EQ(rows, 1);
    EXPECT_EQ(cols, 2);
    EXPECT_EQ(raw, (std::vector<std::uint16_t>{0x1234, 0xFFFF}));
    const auto t = read_pnm(dir / "a.pgm");
    EXPECT_EQ(t.at(0, 1, 0), 1.0);
    EXPECT_NEAR(t.at(0, 0, 0), 0x1234 / 65535.0, 1e-15);
}

TEST(Pnm, Corrupt) {
    test::TempDir dir;
    write_bytes(dir / "ascii.pgm", "P2\n1 1\n255\n", {0});
    EXPECT_THROW(read_pnm(dir / "ascii.pgm"), FormatError);
    write_bytes(dir / "short.pgm", "P5\n4 4\n255\n", {1, 2, 3});
    EXPECT_THROW(read_pnm(dir / "short.pgm"), FormatError);
    write_bytes(dir / "zero.pgm", "P5\n0 4\n255\n", {});
    EXPECT_THROW(read_pnm(dir / "zero.pgm"), FormatError);
    EXPECT_THROW(read_pnm(dir / "missing.pgm"), IoError);
    write_bytes(dir / "rgb.ppm", "P6\n1 1\n255\n", {1, 2, 3});
    int rows = 0, cols = 0;
    EXPECT_THROW(read_pgm16(dir / "rgb.ppm", rows, cols), FormatError);
}

TEST(Sequence, ListsPosedFramesInOrder) {
    test::TempDir dir;
    const Tensor img(2, 2, 1);
    for (int i : {10, 2, 7}) {
        write_pnm(dir / (frame_stem(i) + ".color.pgm"), img);
        write_pose_file(dir / (frame_stem(i) + ".pose.txt"), geometry::Pose{});
    }
    write_pnm(dir / (frame_stem(7) + ".depth.pgm"), img);
    write_pnm(dir / (frame_stem(3) + ".color.pgm"), img);  // no pose: skipped
    write_text(dir / "notes.txt", "x");
    const auto seq = list_sequence(dir.path());
    ASSERT_EQ(seq.size(), 3u);
    EXPECT_EQ(seq[0].index, 2);
    EXPECT_EQ(seq[1].index, 7);
    EXPECT_EQ(seq[2].index, 10);
    EXPECT_FALSE(seq[0].depth.has_value());
    ASSERT_TRUE(seq[1].depth.has_value());
    EXPECT_EQ(seq[1].depth->filename(), "frame-000007.depth.pgm");
    EXPECT_EQ(seq[2].pose.filename(), "frame-000010.pose.txt");
    EXPECT_THROW(list_sequence(dir / "nope"), IoError);
}

}  // namespace
}  // namespace sfp::dataset
