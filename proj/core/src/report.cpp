#include "sfp/report.hpp"

#include <fstream>

#include <Eigen/Geometry>
#include <json.hpp>

#include "sfp/error.hpp"

namespace sfp::report {

using nlohmann::json;

QueryRecord make_record(const std::string& query_id, const localizer::LocalizationResult& result) {
    QueryRecord r;
    r.query_id = query_id;
    r.success = result.success;
    r.retrieved = result.retrieved;
    r.retrieval_milliseconds = result.retrieval_milliseconds;
    for (const auto& e : result.trace) {
        r.levels.push_back({e.level, e.pose, e.matches, e.inliers, e.mean_reprojection_px, e.milliseconds});
    }
    return r;
}

Eigen::Vector4d quaternion_wxyz(const Eigen::Matrix3d& R) {
    Eigen::Quaterniond q(R);
    q.normalize();
    Eigen::Vector4d out(q.w(), q.x(), q.y(), q.z());
    return out(0) < 0.0 ? Eigen::Vector4d(-out) : out;
}

Eigen::Matrix3d rotation_from_wxyz(const Eigen::Vector4d& q) {
    return Eigen::Quaterniond(q(0), q(1), q(2), q(3)).normalized().toRotationMatrix();
}

std::string to_json_line(const QueryRecord& record) {
    json levels = json::array();
    for (const auto& l : record.levels) {
        const Eigen::Vector4d q = quaternion_wxyz(l.pose.R);
        levels.push_back({{"level", l.level},
                          {"q_wxyz", {q(0), q(1), q(2), q(3)}},
                          {"t", {l.pose.t.x(), l.pose.t.y(), l.pose.t.z()}},
                          {"matches", l.matches},
                          {"inliers", l.inliers},
                          {"mean_reproj_px", l.mean_reprojection_px},
                          {"ms", l.milliseconds}});
    }
    const json j{{"query_id", record.query_id},
                 {"success", record.success},
                 {"retrieved", record.retrieved},
                 {"retrieval_ms", record.retrieval_milliseconds},
                 {"levels", levels}};
    return j.dump();
}

QueryRecord from_json_line(const std::string& line) {
    try {
        const json j = json::parse(line);
        QueryRecord r;
        r.query_id = j.at("query_id").get<std::string>();
        r.success = j.at("success").get<bool>();
        r.retrieved = j.value("retrieved", std::vector<int>{});
        r.retrieval_milliseconds = j.value("retrieval_ms", 0.0);
        for (const auto& l : j.at("levels")) {
            LevelRecord lr;
            lr.level = l.at("level").get<int>();
            const auto q = l.at("q_wxyz").get<std::vector<double>>();
            const auto t = l.at("t").get<std::vector<double>>();
            if (q.size() != 4 || t.size() != 3) {
                throw FormatError("report pose needs 4 quaternion and 3 translation entries");
            }
            lr.pose.R = rotation_from_wxyz({q[0], q[1], q[2], q[3]});
            lr.pose.t = {t[0], t[1], t[2]};
            lr.matches = l.value("matches", 0);
            lr.inliers = l.at("inliers").get<int>();
            lr.mean_reprojection_px = l.value("mean_reproj_px", 0.0);
            lr.milliseconds = l.value("ms", 0.0);
            r.levels.push_back(lr);
        }
        return r;
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed report line: ") + e.what());
    }
}

void write_reports(const std::vector<QueryRecord>& records, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    for (const auto& r : records) {
        out << to_json_line(r) << '\n';
    }
    if (!out) {
        throw IoError("failed writing " + path.string());
    }
}

std::vector<QueryRecord> read_reports(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    std::vector<QueryRecord> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        out.push_back(from_json_line(line));
    }
    return out;
}

}  // namespace sfp::report
