#include "sfp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include <Eigen/Geometry>

#include "sfp/error.hpp"

namespace sfp::metrics {

PoseError pose_error(const geometry::Pose& estimate, const geometry::Pose& truth) {
    return {(estimate.center() - truth.center()).norm(), geometry::rotation_angle_deg(estimate.R, truth.R)};
}

double median(std::vector<double> values) {
    if (values.empty()) {
        throw InvalidArgument("median of an empty list");
    }
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

MedianErrors median_errors(std::span<const PoseError> errors) {
    std::vector<double> t;
    std::vector<double> r;
    for (const auto& e : errors) {
        t.push_back(e.translation_m);
        r.push_back(e.rotation_deg);
    }
    return {median(t), median(r)};
}

Eigen::Vector2d transfer(const Eigen::Matrix3d& H, const Eigen::Vector2d& p) {
    const Eigen::Vector3d q = H * p.homogeneous();
    return q.hnormalized();
}

std::vector<PointMatch> mutual_nearest_matcher(const HomographyPair& pair) {
    std::vector<PointMatch> out;
    if (pair.a.empty() || pair.b.empty()) {
        return out;
    }
    const auto na = pair.a.size();
    const auto nb = pair.b.size();
    Eigen::MatrixXd S(static_cast<Eigen::Index>(na), static_cast<Eigen::Index>(nb));
    for (std::size_t i = 0; i < na; ++i) {
        for (std::size_t j = 0; j < nb; ++j) {
            S(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                pair.a[i].descriptor.dot(pair.b[j].descriptor);
        }
    }
    for (Eigen::Index i = 0; i < S.rows(); ++i) {
        Eigen::Index j = 0;
        S.row(i).maxCoeff(&j);
        Eigen::Index back = 0;
        S.col(j).maxCoeff(&back);
        if (back == i) {
            const auto& ka = pair.a[static_cast<std::size_t>(i)];
            const auto& kb = pair.b[static_cast<std::size_t>(j)];
            out.emplace_back(Eigen::Vector2d(ka.x, ka.y), Eigen::Vector2d(kb.x, kb.y));
        }
    }
    return out;
}

std::vector<double> default_thresholds() {
    std::vector<double> t;
    for (int i = 1; i <= 10; ++i) t.push_back(i);
    return t;
}

std::vector<double> mma(std::span<const HomographyPair> pairs, const Matcher& matcher,
                        std::span<const double> thresholds) {
    if (pairs.empty()) {
        throw InvalidArgument("MMA needs at least one image pair");
    }
    std::vector<double> acc(thresholds.size(), 0.0);
    for (const auto& pair : pairs) {
        if (!pair.H.allFinite() || std::abs(pair.H.determinant()) < 1e-12) {
            throw InvalidArgument("homography must be finite and invertible");
        }
        const auto matches = matcher(pair);
        if (matches.empty()) {
            continue;
        }
        std::vector<double> err;
        err.reserve(matches.size());
        for (const auto& [pa, pb] : matches) {
            err.push_back((transfer(pair.H, pa) - pb).norm());
        }
        for (std::size_t t = 0; t < thresholds.size(); ++t) {
            const auto correct = std::count_if(err.begin(), err.end(), [&](double e) { return e <= thresholds[t]; });
            acc[t] += static_cast<double>(correct) / static_cast<double>(err.size());
        }
    }
    for (auto& a : acc) a /= static_cast<double>(pairs.size());
    return acc;
}

std::string format_results_table(std::span<const ResultRow> rows) {
    std::ostringstream out;
    out << "method\tmap_mb\tmedian_cm\tmedian_deg\n";
    out << std::fixed;
    for (const auto& r : rows) {
        out << r.method << '\t' << std::setprecision(4) << r.map_mb << '\t' << std::setprecision(6) << r.median_cm
            << '\t' << r.median_deg << '\n';
    }
    return out.str();
}

std::string format_mma_curve(std::span<const double> thresholds, std::span<const double> accuracy) {
    if (thresholds.size() != accuracy.size()) {
        throw InvalidArgument("one accuracy per threshold");
    }
    std::ostringstream out;
    out << "threshold_px\taccuracy\n" << std::fixed << std::setprecision(6);
    for (std::size_t i = 0; i < thresholds.size(); ++i) {
        out << thresholds[i] << '\t' << accuracy[i] << '\n';
    }
    return out.str();
}

}  // namespace sfp::metrics
