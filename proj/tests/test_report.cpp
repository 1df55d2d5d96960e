#include <gtest/gtest.h>

#include <fstream>
#include <random>

#include "sfp/error.hpp"
#include "sfp/report.hpp"
#include "test_support.hpp"

namespace sfp::report {
namespace {

QueryRecord sample(std::mt19937_64& rng, const std::string& id) {
    QueryRecord r;
    r.query_id = id;
    r.success = true;
    r.retrieved = {4, 0, 2};
    r.retrieval_milliseconds = 0.125;
    for (int level = 3; level >= 1; --level) {
        LevelRecord l;
        l.level = level;
        l.pose = {test::random_rotation(rng), Eigen::Vector3d::Random()};
        l.matches = 40 + level;
        l.inliers = 30 + level;
        l.mean_reprojection_px = 0.25 * level;
        l.milliseconds = 1.5;
        r.levels.push_back(l);
    }
    return r;
}

void expect_same(const QueryRecord& a, const QueryRecord& b) {
    EXPECT_EQ(a.query_id, b.query_id);
    EXPECT_EQ(a.success, b.success);
    EXPECT_EQ(a.retrieved, b.retrieved);
    EXPECT_EQ(a.retrieval_milliseconds, b.retrieval_milliseconds);
    ASSERT_EQ(a.levels.size(), b.levels.size());
    for (std::size_t i = 0; i < a.levels.size(); ++i) {
        EXPECT_EQ(a.levels[i].level, b.levels[i].level);
        EXPECT_LT((a.levels[i].pose.R - b.levels[i].pose.R).cwiseAbs().maxCoeff(), 1e-15);
        EXPECT_EQ(a.levels[i].pose.t, b.levels[i].pose.t);
        EXPECT_EQ(a.levels[i].matches, b.levels[i].matches);
        EXPECT_EQ(a.levels[i].inliers, b.levels[i].inliers);
        EXPECT_EQ(a.levels[i].mean_reprojection_px, b.levels[i].mean_reprojection_px);
    }
}

TEST(Quaternion, CanonicalSignAndRoundTrip) {
    std::mt19937_64 rng(1);
    for (int i = 0; i < 500; ++i) {
        const Eigen::Matrix3d R = test::random_rotation(rng);
        const Eigen::Vector4d q = quaternion_wxyz(R);
        EXPECT_GE(q[0], 0.0);
        EXPECT_NEAR(q.norm(), 1.0, 1e-15);
        EXPECT_LT((rotation_from_wxyz(q) - R).cwiseAbs().maxCoeff(), 1e-14);
    }
    EXPECT_EQ(quaternion_wxyz(Eigen::Matrix3d::Identity()), Eigen::Vector4d(1, 0, 0, 0));
    const Eigen::Vector4d half = quaternion_wxyz(test::rot_z(180));
    EXPECT_NEAR(half[0], 0.0, 1e-15);
    EXPECT_NEAR(std::abs(half[3]), 1.0, 1e-15);
}

TEST(ReportLine, RoundTrip) {
    std::mt19937_64 rng(2);
    const auto r = sample(rng, "frame-000004");
    const std::string line = to_json_line(r);
    EXPECT_EQ(line.find('\n'), std::string::npos);
    expect_same(r, from_json_line(line));
}

TEST(ReportLine, FailedQueryWithoutLevels) {
    QueryRecord r;
    r.query_id = "q";
    const auto back = from_json_line(to_json_line(r));
    EXPECT_FALSE(back.success);
    EXPECT_TRUE(back.levels.empty());
    EXPECT_EQ(back.final_pose(), nullptr);
}

TEST(ReportLine, Malformed) {
    EXPECT_THROW(from_json_line("{"), FormatError);
    EXPECT_THROW(from_json_line(R"({"success":true,"levels":[]})"), FormatError);
    EXPECT_THROW(from_json_line(R"({"query_id":"a","success":true,"levels":[{"level":1,"q_wxyz":[1,0,0],"t":[0,0,0],"inliers":3}]})"),
                 FormatError);
}

TEST(ReportFile, WriteRead) {
    test::TempDir dir;
    std::mt19937_64 rng(3);
    const std::vector<QueryRecord> records{sample(rng, "a"), sample(rng, "b")};
    write_reports(records, dir / "r.jsonl");
    const auto back = read_reports(dir / "r.jsonl");
    ASSERT_EQ(back.size(), 2u);
    expect_same(records[0], back[0]);
    expect_same(records[1], back[1]);
    EXPECT_THROW(read_reports(dir / "none.jsonl"), IoError);
}

TEST(MakeRecord, CopiesTrace) {
    localizer::LocalizationResult res;
    res.success = true;
    res.retrieved = {1};
    res.trace.push_back({3, geometry::Pose{}, 50, 40, 0.5, 2.0});
    res.trace.push_back({2, geometry::Pose{}, 60, 55, 0.25, 1.0});
    const auto r = make_record("x", res);
    EXPECT_EQ(r.query_id, "x");
    ASSERT_EQ(r.levels.size(), 2u);
    EXPECT_EQ(r.levels[0].level, 3);
    EXPECT_EQ(r.levels[1].inliers, 55);
    EXPECT_EQ(r.levels[1].matches, 60);
    EXPECT_EQ(r.retrieved, std::vector<int>{1});
}

}  // namespace
}  // namespace sfp::report
