#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "sfp/geometry.hpp"
#include "sfp/localizer.hpp"

// Line-delimited JSON localization reports, one object per query.

namespace sfp::report {

struct LevelRecord {
    int level = 0;
    geometry::Pose pose;
    int matches = 0;
    int inliers = 0;
    double mean_reprojection_px = 0.0;
    double milliseconds = 0.0;
};

struct QueryRecord {
    std::string query_id;
    bool success = false;
    std::vector<LevelRecord> levels;  // deep -> shallow
    std::vector<int> retrieved;
    double retrieval_milliseconds = 0.0;

    const geometry::Pose* final_pose() const { return levels.empty() ? nullptr : &levels.back().pose; }
};

QueryRecord make_record(const std::string& query_id, const localizer::LocalizationResult& result);

/// Unit quaternion (w, x, y, z) with w >= 0.
Eigen::Vector4d quaternion_wxyz(const Eigen::Matrix3d& R);
Eigen::Matrix3d rotation_from_wxyz(const Eigen::Vector4d& q);

std::string to_json_line(const QueryRecord& record);
QueryRecord from_json_line(const std::string& line);

void write_reports(const std::vector<QueryRecord>& records, const std::filesystem::path& path);
std::vector<QueryRecord> read_reports(const std::filesystem::path& path);

}  // namespace sfp::report
