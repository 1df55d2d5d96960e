#include "sfp/pnp.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <random>

#include <Eigen/Dense>

#include "sfp/error.hpp"

namespace sfp::pnp {

namespace {

// Polynomials as coefficient vectors, lowest degree first.
using Poly = std::vector<double>;

Poly operator+(const Poly& a, const Poly& b) {
    Poly out(std::max(a.size(), b.size()), 0.0);
    for (std::size_t i = 0; i < a.size(); ++i) out[i] += a[i];
    for (std::size_t i = 0; i < b.size(); ++i) out[i] += b[i];
    return out;
}

Poly operator*(const Poly& a, const Poly& b) {
    Poly out(a.size() + b.size() - 1, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = 0; j < b.size(); ++j) {
            out[i + j] += a[i] * b[j];
        }
    }
    return out;
}

Poly operator*(double s, Poly p) {
    for (auto& c : p) c *= s;
    return p;
}

double eval(const Poly& p, double x) {
    double v = 0.0;
    for (auto it = p.rbegin(); it != p.rend(); ++it) v = v * x + *it;
    return v;
}

Poly derivative(const Poly& p) {
    if (p.size() <= 1) return {0.0};
    Poly d(p.size() - 1);
    for (std::size_t i = 1; i < p.size(); ++i) d[i - 1] = static_cast<double>(i) * p[i];
    return d;
}

// Real roots via companion-matrix eigenvalues, polished by Newton steps.
std::vector<double> real_roots(Poly p) {
    double scale = 0.0;
    for (double c : p) scale = std::max(scale, std::abs(c));
    if (scale == 0.0) return {};
    while (p.size() > 1 && std::abs(p.back()) <= 1e-14 * scale) p.pop_back();
    const int n = static_cast<int>(p.size()) - 1;
    if (n < 1) return {};
    Eigen::MatrixXd C = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        C(0, i) = -p[static_cast<std::size_t>(n - 1 - i)] / p.back();
        if (i + 1 < n) C(i + 1, i) = 1.0;
    }
    const Eigen::EigenSolver<Eigen::MatrixXd> es(C, false);
    const Poly dp = derivative(p);
    std::vector<double> roots;
    for (int i = 0; i < n; ++i) {
        const std::complex<double> z = es.eigenvalues()(i);
        if (std::abs(z.imag()) > 1e-6 * (1.0 + std::abs(z.real()))) continue;
        double x = z.real();
        for (int it = 0; it < 5; ++it) {
            const double d = eval(dp, x);
            if (d == 0.0) break;
            const double step = eval(p, x) / d;
            x -= step;
            if (std::abs(step) < 1e-15 * (1.0 + std::abs(x))) break;
        }
        roots.push_back(x);
    }
    return roots;
}

// Newton on |s_i f_i - s_j f_j|^2 = d_ij^2 for pairs (0,1), (1,2), (0,2).
Eigen::Vector3d polish_depths(Eigen::Vector3d s, const std::array<Eigen::Vector3d, 3>& f, const Eigen::Vector3d& d2) {
    constexpr int pairs[3][2] = {{0, 1}, {1, 2}, {0, 2}};
    double prev = std::numeric_limits<double>::infinity();
    Eigen::Vector3d best = s;
    for (int it = 0; it < 8; ++it) {
        Eigen::Vector3d r;
        Eigen::Matrix3d J = Eigen::Matrix3d::Zero();
        for (int k = 0; k < 3; ++k) {
            const int i = pairs[k][0], j = pairs[k][1];
            const double cij = f[i].dot(f[j]);
            r[k] = s[i] * s[i] + s[j] * s[j] - 2.0 * s[i] * s[j] * cij - d2[k];
            J(k, i) = 2.0 * s[i] - 2.0 * s[j] * cij;
            J(k, j) = 2.0 * s[j] - 2.0 * s[i] * cij;
        }
        const double err = r.norm();
        if (!(err < prev)) break;
        prev = err;
        best = s;
        const Eigen::FullPivLU<Eigen::Matrix3d> lu(J);
        if (!lu.isInvertible()) break;
        const Eigen::Vector3d step = lu.solve(r);
        if (!step.allFinite()) break;
        s -= step;
    }
    return best;
}

}  // namespace

Pose absolute_orientation(std::span<const Eigen::Vector3d> from, std::span<const Eigen::Vector3d> to) {
    if (from.size() != to.size() || from.size() < 3) {
        throw InvalidArgument("absolute orientation needs at least three paired points");
    }
    Eigen::Vector3d mf = Eigen::Vector3d::Zero();
    Eigen::Vector3d mt = Eigen::Vector3d::Zero();
    for (std::size_t i = 0; i < from.size(); ++i) {
        mf += from[i];
        mt += to[i];
    }
    mf /= static_cast<double>(from.size());
    mt /= static_cast<double>(to.size());
    Eigen::Matrix3d H = Eigen::Matrix3d::Zero();
    for (std::size_t i = 0; i < from.size(); ++i) {
        H += (from[i] - mf) * (to[i] - mt).transpose();
    }
    const Eigen::JacobiSVD<Eigen::Matrix3d> svd(H, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Matrix3d D = Eigen::Matrix3d::Identity();
    D(2, 2) = (svd.matrixV() * svd.matrixU().transpose()).determinant() < 0 ? -1.0 : 1.0;
    Pose p;
    p.R = svd.matrixV() * D * svd.matrixU().transpose();
    p.t = mt - p.R * mf;
    return p;
}

std::vector<Pose> p3p(const std::array<Eigen::Vector3d, 3>& f, const std::array<Eigen::Vector3d, 3>& P) {
    const double a = (P[1] - P[2]).norm();
    const double b = (P[0] - P[2]).norm();
    const double c = (P[0] - P[1]).norm();
    if ((P[1] - P[0]).cross(P[2] - P[0]).norm() < 1e-12 * std::max(1.0, b * c)) {
        return {};  // collinear
    }
    const double ca = f[1].dot(f[2]);
    const double cb = f[0].dot(f[2]);
    const double cg = f[0].dot(f[1]);
    // Depths s1, s2 = u s1, s3 = v s1. Distances scaled by 1 / b.
    const double a2 = (a / b) * (a / b);
    const double c2 = (c / b) * (c / b);
    const Poly Q{1.0, -2.0 * cb, 1.0};
    const Poly N = Poly{1.0, 0.0, -1.0} + (a2 - c2) * Q;
    const Poly D{2.0 * cg, -2.0 * ca};
    const Poly quartic = D * D + N * N + (-2.0 * cg) * (N * D) + (-c2) * (Q * (D * D));

    std::vector<Pose> poses;
    for (double v : real_roots(quartic)) {
        const double dv = eval(D, v);
        const double qv = eval(Q, v);
        if (!(v > 0.0) || std::abs(dv) < 1e-12 || !(qv > 0.0)) continue;
        const double u = eval(N, v) / dv;
        if (!(u > 0.0)) continue;
        const double s1 = b / std::sqrt(qv);
        const Eigen::Vector3d depth = polish_depths({s1, u * s1, v * s1}, f, {c * c, a * a, b * b});
        if (!(depth.minCoeff() > 0.0)) continue;
        const std::array<Eigen::Vector3d, 3> cam{depth[0] * f[0], depth[1] * f[1], depth[2] * f[2]};
        const Pose pose = absolute_orientation(P, cam);
        if (pose.R.allFinite() && pose.t.allFinite()) {
            poses.push_back(pose);
        }
    }
    return poses;
}

double reprojection_error(const Pose& pose, const Intrinsics& K, const Correspondence& c) {
    const auto px = geometry::project(pose, K, c.point);
    return px ? (*px - c.pixel).norm() : std::numeric_limits<double>::infinity();
}

RansacResult pnp_ransac(std::span<const Correspondence> matches, const Intrinsics& K, const RansacConfig& config) {
    RansacResult result;
    const int n = static_cast<int>(matches.size());
    if (n < 4) {
        result.status = RansacStatus::TooFewMatches;
        return result;
    }
    if (!(config.threshold_px > 0.0) || config.max_iterations < 1 ||
        !(config.confidence > 0.0 && config.confidence < 1.0)) {
        throw InvalidArgument("RANSAC needs a positive threshold, iterations and a confidence in (0, 1)");
    }
    std::vector<Eigen::Vector3d> bearings(matches.size());
    for (std::size_t i = 0; i < matches.size(); ++i) {
        bearings[i] = geometry::bearing(K, matches[i].pixel);
    }
    std::mt19937_64 rng(config.seed);
    std::uniform_int_distribution<int> pick(0, n - 1);
    const double thr2 = config.threshold_px * config.threshold_px;

    int best_count = 0;
    double best_sse = std::numeric_limits<double>::infinity();
    Pose best_pose;
    double needed = config.max_iterations;
    int it = 0;
    while (it < config.max_iterations && it < needed) {
        ++it;
        int i0 = pick(rng);
        int i1 = pick(rng);
        int i2 = pick(rng);
        if (i0 == i1 || i0 == i2 || i1 == i2) continue;
        const std::array<Eigen::Vector3d, 3> f{bearings[static_cast<std::size_t>(i0)],
                                               bearings[static_cast<std::size_t>(i1)],
                                               bearings[static_cast<std::size_t>(i2)]};
        const std::array<Eigen::Vector3d, 3> P{matches[static_cast<std::size_t>(i0)].point,
                                               matches[static_cast<std::size_t>(i1)].point,
                                               matches[static_cast<std::size_t>(i2)].point};
        for (const Pose& pose : p3p(f, P)) {
            int count = 0;
            double sse = 0.0;
            for (const auto& m : matches) {
                const auto px = geometry::project(pose, K, m.point);
                if (!px) continue;
                const double e2 = (*px - m.pixel).squaredNorm();
                if (e2 <= thr2) {
                    ++count;
                    sse += e2;
                }
            }
            if (count > best_count || (count == best_count && count > 0 && sse < best_sse)) {
                best_count = count;
                best_sse = sse;
                best_pose = pose;
                const double w = static_cast<double>(count) / n;
                const double miss = 1.0 - w * w * w;
                needed = miss <= 0.0 ? 0.0 : std::log(1.0 - config.confidence) / std::log(miss);
            }
        }
    }
    result.iterations = it;
    if (best_count < std::max(4, config.min_inliers)) {
        result.status = RansacStatus::NoConsensus;
        return result;
    }
    result.status = RansacStatus::Ok;
    result.pose = best_pose;
    for (int i = 0; i < n; ++i) {
        if (reprojection_error(best_pose, K, matches[static_cast<std::size_t>(i)]) <= config.threshold_px) {
            result.inliers.push_back(i);
        }
    }
    return result;
}

namespace {

double mean_squared_error(const Pose& pose, std::span<const Correspondence> matches, const Intrinsics& K) {
    double sum = 0.0;
    for (const auto& m : matches) {
        const Eigen::Vector3d x = pose.transform(m.point);
        if (!(x.z() > 0.0)) return std::numeric_limits<double>::infinity();
        const Eigen::Vector2d px(K.fx * x.x() / x.z() + K.cx, K.fy * x.y() / x.z() + K.cy);
        sum += (px - m.pixel).squaredNorm();
    }
    return sum / static_cast<double>(matches.size());
}

}  // namespace

RefineResult refine_pose(const Pose& pose, std::span<const Correspondence> matches, const Intrinsics& K,
                         const RefineOptions& options) {
    if (matches.size() < 4) {
        throw InvalidArgument("pose refinement needs at least four correspondences");
    }
    RefineResult out;
    out.pose = pose;
    double cost = mean_squared_error(pose, matches, K);
    out.cost_history.push_back(cost);
    for (int iter = 0; iter < options.max_iterations; ++iter) {
        Eigen::Matrix<double, 6, 6> H = Eigen::Matrix<double, 6, 6>::Zero();
        Eigen::Matrix<double, 6, 1> g = Eigen::Matrix<double, 6, 1>::Zero();
        for (const auto& m : matches) {
            const Eigen::Vector3d rx = out.pose.R * m.point;
            const Eigen::Vector3d x = rx + out.pose.t;
            if (!(x.z() > 0.0)) continue;
            const double iz = 1.0 / x.z();
            const Eigen::Vector2d r(K.fx * x.x() * iz + K.cx - m.pixel.x(), K.fy * x.y() * iz + K.cy - m.pixel.y());
            Eigen::Matrix<double, 2, 3> Jp;
            Jp << K.fx * iz, 0.0, -K.fx * x.x() * iz * iz, 0.0, K.fy * iz, -K.fy * x.y() * iz * iz;
            Eigen::Matrix<double, 2, 6> J;
            J.leftCols<3>() = -Jp * geometry::skew(rx);
            J.rightCols<3>() = Jp;
            H += J.transpose() * J;
            g += J.transpose() * r;
        }
        const Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 6, 6>> eig(H);
        const double lo = eig.eigenvalues().minCoeff();
        const double hi = eig.eigenvalues().maxCoeff();
        if (!(hi > 0.0) || !(lo > 1e-12 * hi)) {
            out.singular = true;
            out.pose = pose;
            return out;
        }
        const Eigen::Matrix<double, 6, 1> delta = -H.ldlt().solve(g);
        out.iterations = iter + 1;
        bool accepted = false;
        double alpha = 1.0;
        for (int halving = 0; halving < 30; ++halving, alpha *= 0.5) {
            Pose trial;
            trial.R = geometry::orthonormalize(geometry::exp_so3(alpha * delta.head<3>()) * out.pose.R);
            trial.t = out.pose.t + alpha * delta.tail<3>();
            const double c = mean_squared_error(trial, matches, K);
            if (c <= cost) {
                out.pose = trial;
                cost = c;
                accepted = true;
                break;
            }
        }
        if (!accepted) break;
        out.cost_history.push_back(cost);
        if (alpha * delta.norm() < options.step_tolerance) break;
    }
    return out;
}

}  // namespace sfp::pnp
