#include "sfp/map.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <set>
#include <string>
#include <unordered_map>

#include "sfp/error.hpp"

namespace sfp::map {

using features::Keypoint;
using features::normalized;

int LandmarkMap::slice_dim(int level_index) const {
    if (level_index < 1 || level_index > static_cast<int>(levels.size())) {
        throw InvalidArgument("map has no level " + std::to_string(level_index));
    }
    const int d = levels[static_cast<std::size_t>(level_index - 1)].dim;
    return mode == DescriptorMode::Full ? d : d / 2;
}

std::pair<int, int> LandmarkMap::slice_range(std::uint8_t presence, int level_index) const {
    if (!((presence >> (level_index - 1)) & 1U)) {
        throw InvalidArgument("landmark has no slice for level " + std::to_string(level_index));
    }
    int offset = 0;
    for (int i = static_cast<int>(levels.size()); i > level_index; --i) {
        if ((presence >> (i - 1)) & 1U) {
            offset += slice_dim(i);
        }
    }
    return {offset, slice_dim(level_index)};
}

int LandmarkMap::descriptor_length(std::uint8_t presence) const {
    int length = 0;
    for (int i = 1; i <= static_cast<int>(levels.size()); ++i) {
        if ((presence >> (i - 1)) & 1U) {
            length += slice_dim(i);
        }
    }
    return length;
}

void LandmarkMap::validate() const {
    pyramid::validate_levels(levels);
    const auto all = static_cast<unsigned>((1U << levels.size()) - 1U);
    for (std::size_t k = 0; k < landmarks.size(); ++k) {
        const auto& lm = landmarks[k];
        if (lm.presence == 0 || (lm.presence & ~all) != 0) {
            throw InvalidArgument("landmark " + std::to_string(k) + " has an invalid presence bitmap");
        }
        if (lm.descriptor.size() != descriptor_length(lm.presence)) {
            throw InvalidArgument("landmark " + std::to_string(k) + " descriptor length disagrees with its levels");
        }
        if (lm.level < 1 || !lm.has_level(lm.level) || (lm.presence >> lm.level) != 0) {
            throw InvalidArgument("landmark " + std::to_string(k) + " level is not its deepest slice");
        }
        if (!lm.position.allFinite() || !lm.descriptor.allFinite()) {
            throw InvalidArgument("landmark " + std::to_string(k) + " is not finite");
        }
    }
    for (const auto& f : frames) {
        for (auto id : f.landmark_ids) {
            if (id >= landmarks.size()) {
                throw InvalidArgument("frame refers to landmark " + std::to_string(id) + " out of range");
            }
        }
    }
}

namespace {

struct Candidate {
    Eigen::Vector3d position;
    std::vector<std::pair<int, const Eigen::VectorXd*>> slices;  // (level, descriptor)
    std::vector<int> frames;
};

struct Accumulator {
    Eigen::Vector3d position_sum = Eigen::Vector3d::Zero();
    int merged = 0;
    std::vector<Eigen::VectorXd> slice_sums;  // index level - 1, empty when absent
    std::set<int> frames;

    Eigen::Vector3d mean() const { return position_sum / merged; }
};

class SpatialHash {
public:
    explicit SpatialHash(double cell) : cell_(cell) {}

    // Nearest accumulated landmark within `radius` of p, or -1.
    int nearest(const Eigen::Vector3d& p, double radius, const std::vector<Accumulator>& acc) const {
        const auto base = key_of(p);
        int best = -1;
        double best_d = radius;
        for (int dx = -1; dx <= 1; ++dx) {
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dz = -1; dz <= 1; ++dz) {
                    const auto it = cells_.find(pack(base[0] + dx, base[1] + dy, base[2] + dz));
                    if (it == cells_.end()) {
                        continue;
                    }
                    for (int id : it->second) {
                        const double d = (acc[static_cast<std::size_t>(id)].mean() - p).norm();
                        if (d <= best_d && (best < 0 || d < best_d || id < best)) {
                            best = id;
                            best_d = d;
                        }
                    }
                }
            }
        }
        return best;
    }

    void insert(const Eigen::Vector3d& p, int id) {
        const auto k = key_of(p);
        cells_[pack(k[0], k[1], k[2])].push_back(id);
    }

private:
    std::array<std::int64_t, 3> key_of(const Eigen::Vector3d& p) const {
        return {static_cast<std::int64_t>(std::floor(p.x() / cell_)), static_cast<std::int64_t>(std::floor(p.y() / cell_)),
                static_cast<std::int64_t>(std::floor(p.z() / cell_))};
    }
    static std::uint64_t pack(std::int64_t x, std::int64_t y, std::int64_t z) {
        const auto m = [](std::int64_t v) { return static_cast<std::uint64_t>(v) & 0x1FFFFFU; };
        return m(x) | (m(y) << 21) | (m(z) << 42);
    }

    double cell_;
    std::unordered_map<std::uint64_t, std::vector<int>> cells_;
};

DescriptorMode infer_mode(std::span<const FrameInput> frames, const std::vector<pyramid::LevelSpec>& levels) {
    bool full = false;
    bool half = false;
    for (const auto& f : frames) {
        for (const auto& kp : f.keypoints) {
            if (kp.level < 1 || kp.level > static_cast<int>(levels.size())) {
                throw InvalidArgument("keypoint level " + std::to_string(kp.level) + " is not a map level");
            }
            const int d = levels[static_cast<std::size_t>(kp.level - 1)].dim;
            if (kp.descriptor.size() == d) {
                full = true;
            } else if (kp.descriptor.size() == d / 2) {
                half = true;
            } else {
                throw InvalidArgument("keypoint descriptor length " + std::to_string(kp.descriptor.size()) +
                                      " fits neither mode of level " + std::to_string(kp.level));
            }
        }
    }
    if (full && half) {
        throw InvalidArgument("frames mix full and short descriptors");
    }
    return half ? DescriptorMode::Short : DescriptorMode::Full;
}

// Mutual nearest neighbours by cosine between two keypoint lists.
std::vector<std::pair<int, int>> mutual_matches(const std::vector<const Keypoint*>& a,
                                                const std::vector<const Keypoint*>& b, double floor) {
    if (a.empty() || b.empty()) {
        return {};
    }
    Eigen::MatrixXd A(a.front()->descriptor.size(), static_cast<Eigen::Index>(a.size()));
    Eigen::MatrixXd B(b.front()->descriptor.size(), static_cast<Eigen::Index>(b.size()));
    for (std::size_t i = 0; i < a.size(); ++i) {
        A.col(static_cast<Eigen::Index>(i)) = a[i]->descriptor;
    }
    for (std::size_t j = 0; j < b.size(); ++j) {
        B.col(static_cast<Eigen::Index>(j)) = b[j]->descriptor;
    }
    const Eigen::MatrixXd S = A.transpose() * B;
    std::vector<std::pair<int, int>> out;
    for (Eigen::Index i = 0; i < S.rows(); ++i) {
        Eigen::Index j = 0;
        const double s = S.row(i).maxCoeff(&j);
        Eigen::Index back = 0;
        S.col(j).maxCoeff(&back);
        if (back == i && s >= floor) {
            out.emplace_back(static_cast<int>(i), static_cast<int>(j));
        }
    }
    return out;
}

}  // namespace

LandmarkMap build_map(std::span<const FrameInput> frames, const std::vector<pyramid::LevelSpec>& levels,
                      const BuildConfig& config) {
    pyramid::validate_levels(levels);
    config.intrinsics.validate();
    if (frames.empty()) {
        throw InvalidArgument("map building needs at least one frame");
    }
    if (!(config.merge_radius > 0.0)) {
        throw InvalidArgument("merge radius must be positive");
    }
    std::vector<int> without_depth;
    for (std::size_t f = 0; f < frames.size(); ++f) {
        frames[f].pose.validate();
        if (frames[f].depths.empty()) {
            without_depth.push_back(static_cast<int>(f));
        } else if (frames[f].depths.size() != frames[f].keypoints.size()) {
            throw InvalidArgument("frame " + std::to_string(f) + " has a depth count unlike its keypoint count");
        }
    }
    if (without_depth.size() == 1 && frames.size() == 1) {
        throw InvalidArgument("a single frame without depth cannot be mapped");
    }
    const DescriptorMode mode = infer_mode(frames, levels);
    const auto& K = config.intrinsics;

    std::vector<Candidate> candidates;
    for (std::size_t f = 0; f < frames.size(); ++f) {
        const auto& fr = frames[f];
        for (std::size_t k = 0; k < fr.depths.size(); ++k) {
            const auto& kp = fr.keypoints[k];
            candidates.push_back({geometry::backproject({kp.x, kp.y}, fr.depths[k], fr.pose, K),
                                  {{kp.level, &kp.descriptor}},
                                  {static_cast<int>(f)}});
        }
    }
    for (std::size_t ia = 0; ia < without_depth.size(); ++ia) {
        for (std::size_t ib = ia + 1; ib < without_depth.size(); ++ib) {
            const int fa = without_depth[ia];
            const int fb = without_depth[ib];
            const auto& A = frames[static_cast<std::size_t>(fa)];
            const auto& B = frames[static_cast<std::size_t>(fb)];
            for (const auto& spec : levels) {
                std::vector<const Keypoint*> ka;
                std::vector<const Keypoint*> kb;
                for (const auto& kp : A.keypoints) {
                    if (kp.level == spec.index) {
                        ka.push_back(&kp);
                    }
                }
                for (const auto& kp : B.keypoints) {
                    if (kp.level == spec.index) {
                        kb.push_back(&kp);
                    }
                }
                for (const auto& [i, j] : mutual_matches(ka, kb, config.match_floor)) {
                    const auto tri = geometry::triangulate({ka[i]->x, ka[i]->y}, {kb[j]->x, kb[j]->y}, A.pose, B.pose,
                                                           K, config.min_ray_angle_deg);
                    if (tri.status != geometry::TriangulationStatus::Ok ||
                        tri.reprojection_error > config.max_reprojection_px) {
                        continue;
                    }
                    candidates.push_back({tri.point,
                                          {{spec.index, &ka[i]->descriptor}, {spec.index, &kb[j]->descriptor}},
                                          {fa, fb}});
                }
            }
        }
    }
    if (candidates.empty()) {
        throw PipelineError("no landmark survived map building");
    }

    std::vector<Accumulator> acc;
    SpatialHash hash(config.merge_radius);
    std::vector<std::set<int>> frame_landmarks(frames.size());
    for (const auto& c : candidates) {
        int id = hash.nearest(c.position, config.merge_radius, acc);
        if (id < 0) {
            id = static_cast<int>(acc.size());
            acc.emplace_back();
            acc.back().slice_sums.resize(levels.size());
            hash.insert(c.position, id);
        }
        auto& a = acc[static_cast<std::size_t>(id)];
        a.position_sum += c.position;
        a.merged += 1;
        for (const auto& [level, desc] : c.slices) {
            auto& sum = a.slice_sums[static_cast<std::size_t>(level - 1)];
            if (sum.size() == 0) {
                sum = *desc;
            } else {
                sum += *desc;
            }
        }
        for (int f : c.frames) {
            a.frames.insert(f);
            frame_landmarks[static_cast<std::size_t>(f)].insert(id);
        }
    }

    LandmarkMap map;
    map.levels = levels;
    map.mode = mode;
    map.landmarks.reserve(acc.size());
    for (const auto& a : acc) {
        Landmark lm;
        lm.position = a.mean();
        lm.observations = static_cast<int>(a.frames.size());
        for (int i = 1; i <= static_cast<int>(levels.size()); ++i) {
            if (a.slice_sums[static_cast<std::size_t>(i - 1)].size() > 0) {
                lm.presence = static_cast<std::uint8_t>(lm.presence | (1U << (i - 1)));
                lm.level = i;
            }
        }
        lm.descriptor.resize(map.descriptor_length(lm.presence));
        for (int i = 1; i <= static_cast<int>(levels.size()); ++i) {
            if (lm.has_level(i)) {
                const auto [offset, length] = map.slice_range(lm.presence, i);
                lm.descriptor.segment(offset, length) = normalized(a.slice_sums[static_cast<std::size_t>(i - 1)]);
            }
        }
        map.landmarks.push_back(std::move(lm));
    }
    for (std::size_t f = 0; f < frames.size(); ++f) {
        MapFrame mf;
        mf.global = frames[f].global.size() > 0 ? normalized(frames[f].global)
                                                : features::pooled_descriptor(frames[f].keypoints);
        for (int id : frame_landmarks[f]) {
            mf.landmark_ids.push_back(static_cast<std::uint32_t>(id));
        }
        map.frames.push_back(std::move(mf));
    }
    return map;
}

LandmarkMap shorten_descriptors(const LandmarkMap& map) {
    if (map.mode != DescriptorMode::Full) {
        throw InvalidArgument("map descriptors are already short");
    }
    LandmarkMap out = map;
    out.mode = DescriptorMode::Short;
    for (std::size_t k = 0; k < map.landmarks.size(); ++k) {
        const auto& src = map.landmarks[k];
        auto& dst = out.landmarks[k];
        dst.descriptor.resize(out.descriptor_length(src.presence));
        for (int i = 1; i <= static_cast<int>(map.levels.size()); ++i) {
            if (src.has_level(i)) {
                const auto [offset, length] = out.slice_range(src.presence, i);
                dst.descriptor.segment(offset, length) = features::shorten(map.slice(src, i));
            }
        }
    }
    for (auto& f : out.frames) {
        if (f.global.size() > 0) {
            f.global = features::shorten(f.global);
        }
    }
    return out;
}

MapStats map_stats(const LandmarkMap& map) {
    MapStats s;
    s.mode = map.mode;
    s.landmarks = map.landmarks.size();
    s.frames = map.frames.size();
    s.header_bytes = 4 + 2 + 1 + 2 * map.levels.size() + 1 + 4 + 4;
    s.position_bytes = 12 * s.landmarks;
    s.landmark_meta_bytes = 2 * s.landmarks;
    s.descriptor_bytes_per_level.assign(map.levels.size(), 0);
    for (const auto& lm : map.landmarks) {
        for (int i = 1; i <= static_cast<int>(map.levels.size()); ++i) {
            if (lm.has_level(i)) {
                s.descriptor_bytes_per_level[static_cast<std::size_t>(i - 1)] +=
                    4 * static_cast<std::uint64_t>(map.slice_dim(i));
            }
        }
    }
    for (auto b : s.descriptor_bytes_per_level) {
        s.descriptor_bytes += b;
    }
    for (const auto& f : map.frames) {
        s.frame_index_bytes += 2 + 4 * static_cast<std::uint64_t>(f.global.size()) + 4 + 4 * f.landmark_ids.size();
    }
    s.total_bytes = s.header_bytes + s.position_bytes + s.landmark_meta_bytes + s.descriptor_bytes + s.frame_index_bytes;
    return s;
}

}  // namespace sfp::map
