#include "sfp/localizer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <optional>
#include <string>

#include "sfp/error.hpp"

namespace sfp::localizer {

double similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    if (a.size() != b.size()) {
        throw InvalidArgument("descriptor lengths differ: " + std::to_string(a.size()) + " vs " +
                              std::to_string(b.size()));
    }
    const double den = std::sqrt(a.dot(a) * b.dot(b));
    if (!(den > 0.0)) {
        return 0.0;
    }
    return std::clamp(a.dot(b) / den, -1.0, 1.0);
}

Eigen::VectorXd global_descriptor(const pyramid::DensePyramid& pyramid) {
    if (pyramid.levels.empty()) {
        throw InvalidArgument("pyramid has no levels");
    }
    const auto& deep = pyramid.deepest().values;
    if (deep.cells() == 0) {
        throw InvalidArgument("deepest level is empty");
    }
    return features::normalized(deep.data.rowwise().mean());
}

Eigen::VectorXd global_descriptor(std::span<const Keypoint> keypoints) {
    return features::pooled_descriptor(keypoints);
}

std::vector<int> retrieve(const Eigen::VectorXd& query, const LandmarkMap& map, int k) {
    if (k < 1) {
        throw InvalidArgument("retrieval needs k >= 1");
    }
    if (map.frames.empty()) {
        throw PipelineError("map has no frames to retrieve from");
    }
    std::vector<std::pair<double, int>> scored;
    for (std::size_t f = 0; f < map.frames.size(); ++f) {
        scored.emplace_back(similarity(query, map.frames[f].global), static_cast<int>(f));
    }
    std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    std::vector<int> out;
    for (std::size_t i = 0; i < scored.size() && static_cast<int>(i) < k; ++i) {
        out.push_back(scored[i].second);
    }
    return out;
}

namespace {

struct Side {
    std::vector<int> ids;
    std::vector<const Eigen::VectorXd*> desc;
    std::vector<Eigen::VectorXd> storage;
    std::vector<double> norm2;
};

std::vector<int> level_landmarks(const LandmarkMap& map, std::span<const int> candidates, int level) {
    std::vector<int> out;
    for (int id : candidates) {
        if (id < 0 || id >= static_cast<int>(map.landmarks.size())) {
            throw InvalidArgument("candidate landmark " + std::to_string(id) + " out of range");
        }
        if (map.landmarks[static_cast<std::size_t>(id)].has_level(level)) {
            out.push_back(id);
        }
    }
    return out;
}

// Mutual best pairs over an allowed-edge predicate.
template <typename Allowed>
std::vector<Match> mutual_best(std::span<const Keypoint> query, int level, const LandmarkMap& map,
                               const std::vector<int>& landmarks, double floor, Allowed allowed) {
    std::vector<int> qi;
    for (std::size_t i = 0; i < query.size(); ++i) {
        if (query[i].level == level) {
            qi.push_back(static_cast<int>(i));
        }
    }
    std::vector<Eigen::VectorXd> ld;
    ld.reserve(landmarks.size());
    for (int id : landmarks) {
        ld.emplace_back(map.slice(map.landmarks[static_cast<std::size_t>(id)], level));
    }
    const Eigen::Index dim = map.slice_dim(level);
    for (int i : qi) {
        if (query[static_cast<std::size_t>(i)].descriptor.size() != dim) {
            throw InvalidArgument("query descriptor length " +
                                  std::to_string(query[static_cast<std::size_t>(i)].descriptor.size()) +
                                  " does not match the map's level " + std::to_string(level) + " slice length " +
                                  std::to_string(dim));
        }
    }
    const auto nq = qi.size();
    const auto nl = landmarks.size();
    std::vector<int> best_l(nq, -1);
    std::vector<double> best_ls(nq, -2.0);
    std::vector<int> best_q(nl, -1);
    std::vector<double> best_qs(nl, -2.0);
    for (std::size_t a = 0; a < nq; ++a) {
        const auto& d = query[static_cast<std::size_t>(qi[a])].descriptor;
        for (std::size_t b = 0; b < nl; ++b) {
            if (!allowed(qi[a], landmarks[b])) continue;
            const double s = similarity(d, ld[b]);
            if (s > best_ls[a]) {
                best_ls[a] = s;
                best_l[a] = static_cast<int>(b);
            }
            if (s > best_qs[b]) {
                best_qs[b] = s;
                best_q[b] = static_cast<int>(a);
            }
        }
    }
    std::vector<Match> out;
    for (std::size_t a = 0; a < nq; ++a) {
        const int b = best_l[a];
        if (b >= 0 && best_q[static_cast<std::size_t>(b)] == static_cast<int>(a) && best_ls[a] >= floor) {
            out.push_back({qi[a], landmarks[static_cast<std::size_t>(b)], best_ls[a]});
        }
    }
    return out;
}

}  // namespace

MatchSet match_level(std::span<const Keypoint> query, const LandmarkMap& map, std::span<const int> candidates,
                     int level, double floor) {
    MatchSet out;
    out.level = level;
    out.matches = mutual_best(query, level, map, level_landmarks(map, candidates, level), floor,
                              [](int, int) { return true; });
    return out;
}

std::vector<int> gate_candidates(const Eigen::Vector2d& pixel, const LandmarkMap& map, std::span<const int> candidates,
                                 int level, const Pose& prior, const Intrinsics& K, double radius_px) {
    std::vector<int> out;
    for (int id : level_landmarks(map, candidates, level)) {
        const auto px = geometry::project(prior, K, map.landmarks[static_cast<std::size_t>(id)].position);
        if (px && (*px - pixel).norm() <= radius_px) {
            out.push_back(id);
        }
    }
    return out;
}

MatchSet gated_match(std::span<const Keypoint> query, const LandmarkMap& map, std::span<const int> candidates,
                     int level, const Pose& prior, const Intrinsics& K, double radius_px, double floor) {
    prior.validate();
    if (!(radius_px >= 0.0)) {
        throw InvalidArgument("gating radius must be non-negative");
    }
    MatchSet out;
    out.level = level;
    out.radius_px = radius_px;
    const auto landmarks = level_landmarks(map, candidates, level);
    std::vector<std::optional<Eigen::Vector2d>> projected(map.landmarks.size());
    for (int id : landmarks) {
        projected[static_cast<std::size_t>(id)] =
            geometry::project(prior, K, map.landmarks[static_cast<std::size_t>(id)].position);
    }
    const auto reproj = [&](int q, int id) {
        const auto& px = projected[static_cast<std::size_t>(id)];
        const auto& kp = query[static_cast<std::size_t>(q)];
        return px ? (*px - Eigen::Vector2d(kp.x, kp.y)).norm() : std::numeric_limits<double>::infinity();
    };
    auto matches = mutual_best(query, level, map, landmarks, floor,
                               [&](int q, int id) { return reproj(q, id) <= radius_px; });
    std::erase_if(matches, [&](const Match& m) { return reproj(m.query, m.landmark) > radius_px; });
    out.matches = std::move(matches);
    return out;
}

LocalizerConfig LocalizerConfig::defaults_for(int levels) {
    LocalizerConfig c;
    c.similarity_floor.assign(static_cast<std::size_t>(levels), 0.8);
    c.gate_radius_px.assign(static_cast<std::size_t>(levels), 4.0);
    if (levels >= 1) c.gate_radius_px[static_cast<std::size_t>(levels - 1)] = std::numeric_limits<double>::infinity();
    if (levels >= 2) c.gate_radius_px[static_cast<std::size_t>(levels - 2)] = 8.0;
    return c;
}

void LocalizerConfig::validate(int levels) const {
    if (static_cast<int>(similarity_floor.size()) != levels || static_cast<int>(gate_radius_px.size()) != levels) {
        throw InvalidArgument("localizer needs one similarity floor and one gating radius per level");
    }
    for (int i = 0; i + 1 < levels; ++i) {
        if (gate_radius_px[static_cast<std::size_t>(i)] > gate_radius_px[static_cast<std::size_t>(i + 1)]) {
            throw InvalidArgument("gating radii must not grow from deep to shallow levels");
        }
    }
    for (double r : gate_radius_px) {
        if (!(r > 0.0)) throw InvalidArgument("gating radii must be positive");
    }
    if (top_k < 1 || min_inliers < 4 || !(ransac.threshold_px > 0.0) || ransac.max_iterations < 1 ||
        refine.max_iterations < 0) {
        throw InvalidArgument("localizer thresholds must be positive");
    }
}

namespace {

double ms_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

LocalizationResult localize(const Query& query, const LandmarkMap& input_map, const Intrinsics& K,
                            const LocalizerConfig& config, std::span<const int> frames) {
    if (input_map.landmarks.empty()) {
        throw PipelineError("cannot localize against an empty map");
    }
    const int n = static_cast<int>(input_map.levels.size());
    config.validate(n);
    K.validate();

    std::optional<LandmarkMap> shortened;
    if (config.mode != input_map.mode) {
        if (config.mode == DescriptorMode::Full) {
            throw InvalidArgument("full-descriptor localization needs a full-descriptor map");
        }
        shortened = map::shorten_descriptors(input_map);
    }
    const LandmarkMap& map = shortened ? *shortened : input_map;

    std::vector<Keypoint> keypoints = query.keypoints;
    for (auto& kp : keypoints) {
        const int dim = map.slice_dim(kp.level);
        if (kp.descriptor.size() == 2 * dim && map.mode == DescriptorMode::Short) {
            kp.descriptor = features::shorten(kp.descriptor);
        }
    }

    LocalizationResult result;
    const auto t0 = std::chrono::steady_clock::now();
    if (!frames.empty()) {
        result.retrieved.assign(frames.begin(), frames.end());
    } else {
        Eigen::VectorXd g = query.global.size() > 0 ? features::normalized(query.global) : global_descriptor(keypoints);
        if (map.mode == DescriptorMode::Short && g.size() > 0 && !map.frames.empty() &&
            g.size() == 2 * map.frames.front().global.size()) {
            g = features::shorten(g);
        }
        if (g.size() == 0) {
            return result;  // nothing to retrieve with
        }
        result.retrieved = retrieve(g, map, config.top_k);
    }
    std::vector<int> candidates;
    for (int f : result.retrieved) {
        if (f < 0 || f >= static_cast<int>(map.frames.size())) {
            throw InvalidArgument("frame " + std::to_string(f) + " is not in the map");
        }
        for (auto id : map.frames[static_cast<std::size_t>(f)].landmark_ids) {
            candidates.push_back(static_cast<int>(id));
        }
    }
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
    result.retrieval_milliseconds = ms_since(t0);

    std::optional<Pose> prior;
    for (int level = n; level >= 1; --level) {
        const auto t_level = std::chrono::steady_clock::now();
        const double floor = config.similarity_floor[static_cast<std::size_t>(level - 1)];
        const double radius = config.gate_radius_px[static_cast<std::size_t>(level - 1)];
        const MatchSet ms = prior && std::isfinite(radius)
                                ? gated_match(keypoints, map, candidates, level, *prior, K, radius, floor)
                                : match_level(keypoints, map, candidates, level, floor);
        if (ms.matches.size() < 4) {
            continue;
        }
        std::vector<pnp::Correspondence> corr;
        corr.reserve(ms.matches.size());
        for (const auto& m : ms.matches) {
            const auto& kp = keypoints[static_cast<std::size_t>(m.query)];
            corr.push_back({{kp.x, kp.y}, map.landmarks[static_cast<std::size_t>(m.landmark)].position});
        }
        pnp::RansacConfig rc = config.ransac;
        rc.seed = config.ransac.seed + static_cast<std::uint64_t>(level);
        const auto rs = pnp::pnp_ransac(corr, K, rc);
        if (!rs.ok()) {
            continue;
        }
        Pose pose = rs.pose;
        std::vector<int> inliers = rs.inliers;
        for (int round = 0; round < 2; ++round) {
            std::vector<pnp::Correspondence> in;
            for (int i : inliers) in.push_back(corr[static_cast<std::size_t>(i)]);
            if (in.size() < 4) break;
            const auto refined = pnp::refine_pose(pose, in, K, config.refine);
            if (refined.singular) break;
            pose = refined.pose;
            inliers.clear();
            for (std::size_t i = 0; i < corr.size(); ++i) {
                if (pnp::reprojection_error(pose, K, corr[i]) <= rc.threshold_px) {
                    inliers.push_back(static_cast<int>(i));
                }
            }
        }
        if (static_cast<int>(inliers.size()) < 4) {
            continue;
        }
        TraceEntry e;
        e.level = level;
        e.pose = pose;
        e.matches = static_cast<int>(corr.size());
        e.inliers = static_cast<int>(inliers.size());
        for (int i : inliers) {
            e.mean_reprojection_px += pnp::reprojection_error(pose, K, corr[static_cast<std::size_t>(i)]);
        }
        e.mean_reprojection_px /= static_cast<double>(inliers.size());
        e.milliseconds = ms_since(t_level);
        result.trace.push_back(e);
        prior = pose;
    }
    result.success = !result.trace.empty() && result.trace.back().inliers >= config.min_inliers;
    return result;
}

}  // namespace sfp::localizer
