#include "sfp/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/LU>

#include "sfp/error.hpp"

namespace sfp::synth {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

Eigen::VectorXd random_unit(std::mt19937_64& rng, int dim) {
    std::normal_distribution<double> n(0.0, 1.0);
    Eigen::VectorXd v(dim);
    for (int i = 0; i < dim; ++i) v(i) = n(rng);
    return v.normalized();
}

Eigen::VectorXd perturb(const Eigen::VectorXd& d, double sigma, std::mt19937_64& rng) {
    if (sigma <= 0.0) return d;
    std::normal_distribution<double> n(0.0, sigma);
    Eigen::VectorXd v = d;
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) += n(rng);
    return features::normalized(v);
}

// Pixel at least `min_shift` away from `px`, inside the image.
Eigen::Vector2d displaced(const Eigen::Vector2d& px, const geometry::Intrinsics& K, double min_shift,
                          std::mt19937_64& rng) {
    std::uniform_real_distribution<double> ux(0.0, K.width);
    std::uniform_real_distribution<double> uy(0.0, K.height);
    for (;;) {
        const Eigen::Vector2d q(ux(rng), uy(rng));
        if ((q - px).norm() >= min_shift) return q;
    }
}

geometry::Pose arc_pose(const SceneConfig& c, double azimuth_deg, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> elev(-10.0, 10.0);
    std::uniform_real_distribution<double> dist(-0.3, 0.3);
    std::uniform_real_distribution<double> aim(-0.2, 0.2);
    const double az = azimuth_deg * kDeg;
    const double el = elev(rng) * kDeg;
    const double r = c.camera_distance + dist(rng);
    const Eigen::Vector3d eye(r * std::sin(az) * std::cos(el), r * std::sin(el), -r * std::cos(az) * std::cos(el));
    const Eigen::Vector3d target(aim(rng), aim(rng), aim(rng));
    return geometry::look_at(eye, target);
}

}  // namespace

Frame render_frame(const Scene& scene, const geometry::Pose& pose, double noise_px, double outlier_rate,
                   double descriptor_noise, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, noise_px > 0.0 ? noise_px : 1.0);
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    Frame f;
    f.pose = pose;
    for (std::size_t k = 0; k < scene.landmarks.size(); ++k) {
        const auto px = geometry::project(pose, scene.intrinsics, scene.landmarks[k]);
        if (!px || !scene.intrinsics.contains(*px)) continue;
        const double depth = pose.transform(scene.landmarks[k]).z();
        const bool outlier = coin(rng) < outlier_rate;
        Eigen::Vector2d obs = *px;
        if (outlier) {
            obs = displaced(*px, scene.intrinsics, 20.0, rng);
        } else if (noise_px > 0.0) {
            obs += Eigen::Vector2d(noise(rng), noise(rng));
        }
        for (int level = 1; level <= scene.landmark_level[k]; ++level) {
            Observation o;
            o.landmark = static_cast<int>(k);
            o.level = level;
            o.pixel = obs;
            o.depth = depth;
            o.descriptor = perturb(scene.descriptors[k][static_cast<std::size_t>(level - 1)], descriptor_noise, rng);
            o.outlier = outlier;
            f.observations.push_back(std::move(o));
        }
    }
    return f;
}

Scene synth_scene(const SceneConfig& c) {
    if (c.n_landmarks < 10 || c.n_frames < 2) {
        throw InvalidArgument("synthetic scene needs at least 10 landmarks and 2 frames");
    }
    if (!(c.noise_px >= 0.0) || !(c.outlier_rate >= 0.0 && c.outlier_rate <= 1.0) || !(c.descriptor_noise >= 0.0)) {
        throw InvalidArgument("noise and outlier rate must be non-negative, outlier rate at most 1");
    }
    pyramid::validate_levels(c.levels);
    c.intrinsics.validate();
    if (c.level_weights.size() != c.levels.size()) {
        throw InvalidArgument("one level weight per level");
    }
    std::mt19937_64 rng(c.seed);
    Scene s;
    s.levels = c.levels;
    s.intrinsics = c.intrinsics;
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::discrete_distribution<int> pick_level(c.level_weights.begin(), c.level_weights.end());
    for (int k = 0; k < c.n_landmarks; ++k) {
        s.landmarks.emplace_back(u(rng) * c.box_half_extent.x(), u(rng) * c.box_half_extent.y(),
                                 u(rng) * c.box_half_extent.z());
        const int level = pick_level(rng) + 1;
        s.landmark_level.push_back(level);
        std::vector<Eigen::VectorXd> d;
        for (int i = 1; i <= level; ++i) {
            d.push_back(random_unit(rng, c.levels[static_cast<std::size_t>(i - 1)].dim));
        }
        s.descriptors.push_back(std::move(d));
    }
    for (int f = 0; f < c.n_frames; ++f) {
        const double az = -c.azimuth_span_deg + 2.0 * c.azimuth_span_deg * f / (c.n_frames - 1);
        const auto pose = arc_pose(c, az, rng);
        s.frames.push_back(render_frame(s, pose, c.noise_px, c.outlier_rate, c.descriptor_noise, rng()));
    }
    return s;
}

Scene synth_scene(std::uint64_t seed, int n_landmarks, int n_frames, double noise_px, double outlier_rate,
                  double descriptor_noise) {
    SceneConfig c;
    c.seed = seed;
    c.n_landmarks = n_landmarks;
    c.n_frames = n_frames;
    c.noise_px = noise_px;
    c.outlier_rate = outlier_rate;
    c.descriptor_noise = descriptor_noise;
    return synth_scene(c);
}

Frame disjoint_frame(const Scene& scene, std::uint64_t seed, int n_points) {
    std::mt19937_64 rng(seed);
    // Camera placed like the scene's own, looking at a volume 50 m behind it.
    const geometry::Pose pose = scene.frames.empty() ? geometry::Pose{} : scene.frames.front().pose;
    const Eigen::Vector3d away = pose.center() - 50.0 * pose.R.row(2).transpose();
    const geometry::Pose back = geometry::look_at(pose.center(), away);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Frame f;
    f.pose = back;
    while (static_cast<int>(f.observations.size()) < n_points) {
        const Eigen::Vector3d X = away + Eigen::Vector3d(u(rng) * 10.0, u(rng) * 8.0, u(rng) * 5.0);
        const auto px = geometry::project(back, scene.intrinsics, X);
        if (!px || !scene.intrinsics.contains(*px)) continue;
        const int top = static_cast<int>(scene.levels.size());
        for (int level = 1; level <= top; ++level) {
            Observation o;
            o.landmark = -1;
            o.level = level;
            o.pixel = *px;
            o.depth = back.transform(X).z();
            o.descriptor = random_unit(rng, scene.levels[static_cast<std::size_t>(level - 1)].dim);
            f.observations.push_back(std::move(o));
        }
    }
    return f;
}

std::vector<features::Keypoint> keypoints(const Frame& frame) {
    std::vector<features::Keypoint> out;
    out.reserve(frame.observations.size());
    for (const auto& o : frame.observations) {
        out.push_back({o.level, o.pixel.x(), o.pixel.y(), 1.0, o.descriptor});
    }
    return out;
}

std::vector<double> depths(const Frame& frame) {
    std::vector<double> out;
    out.reserve(frame.observations.size());
    for (const auto& o : frame.observations) out.push_back(o.depth);
    return out;
}

map::FrameInput frame_input(const Frame& frame, bool with_depth) {
    map::FrameInput in;
    in.keypoints = keypoints(frame);
    in.pose = frame.pose;
    if (with_depth) in.depths = depths(frame);
    return in;
}

PnpProblem synth_pnp(std::uint64_t seed, int n, double noise_px, double outlier_rate, const geometry::Intrinsics& K) {
    std::mt19937_64 rng(seed);
    SceneConfig c;
    c.intrinsics = K;
    std::uniform_real_distribution<double> az(-c.azimuth_span_deg, c.azimuth_span_deg);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    std::normal_distribution<double> noise(0.0, noise_px > 0.0 ? noise_px : 1.0);
    PnpProblem p;
    p.truth = arc_pose(c, az(rng), rng);
    const int n_out = static_cast<int>(std::lround(outlier_rate * n));
    while (static_cast<int>(p.matches.size()) < n) {
        const Eigen::Vector3d X(u(rng) * c.box_half_extent.x(), u(rng) * c.box_half_extent.y(),
                                u(rng) * c.box_half_extent.z());
        const auto px = geometry::project(p.truth, K, X);
        if (!px || !K.contains(*px)) continue;
        const bool outlier = static_cast<int>(p.matches.size()) < n_out;
        Eigen::Vector2d obs = *px;
        if (outlier) {
            obs = displaced(*px, K, 20.0, rng);
        } else if (noise_px > 0.0) {
            obs += Eigen::Vector2d(noise(rng), noise(rng));
        }
        p.matches.push_back({obs, X});
        p.outlier.push_back(outlier);
    }
    // Spread the outliers through the list.
    std::vector<std::size_t> order(p.matches.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    PnpProblem shuffled{p.truth, {}, {}};
    for (auto i : order) {
        shuffled.matches.push_back(p.matches[i]);
        shuffled.outlier.push_back(p.outlier[i]);
    }
    return shuffled;
}

std::vector<metrics::HomographyPair> synth_homography_pairs(std::uint64_t seed, int n_pairs, int n_points,
                                                            double noise_px, int descriptor_dim) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::normal_distribution<double> noise(0.0, noise_px > 0.0 ? noise_px : 1.0);
    const double W = 640.0;
    const double Hh = 480.0;
    std::vector<metrics::HomographyPair> out;
    for (int p = 0; p < n_pairs; ++p) {
        // Rotation, scale, shear and mild perspective about the image centre.
        const double angle = u(rng) * 15.0 * kDeg;
        const double scale = 1.0 + 0.15 * u(rng);
        Eigen::Matrix3d A = Eigen::Matrix3d::Identity();
        A.topLeftCorner<2, 2>() << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
        A.topLeftCorner<2, 2>() *= scale;
        A(0, 1) += 0.05 * u(rng);
        A(2, 0) = 1e-4 * u(rng);
        A(2, 1) = 1e-4 * u(rng);
        A(0, 2) = 20.0 * u(rng);
        A(1, 2) = 20.0 * u(rng);
        Eigen::Matrix3d C = Eigen::Matrix3d::Identity();
        C(0, 2) = -W / 2;
        C(1, 2) = -Hh / 2;
        metrics::HomographyPair pair;
        pair.H = C.inverse() * A * C;
        int attempts = 0;
        while (static_cast<int>(pair.a.size()) < n_points && attempts++ < 100 * n_points) {
            const Eigen::Vector2d a((u(rng) + 1.0) * 0.5 * W, (u(rng) + 1.0) * 0.5 * Hh);
            Eigen::Vector2d b = metrics::transfer(pair.H, a);
            if (noise_px > 0.0) b += Eigen::Vector2d(noise(rng), noise(rng));
            if (!(b.x() >= 0 && b.y() >= 0 && b.x() < W && b.y() < Hh)) continue;
            const Eigen::VectorXd d = random_unit(rng, descriptor_dim);
            pair.a.push_back({1, a.x(), a.y(), 1.0, d});
            pair.b.push_back({1, b.x(), b.y(), 1.0, d});
        }
        // Shuffle b so that list order carries no correspondence.
        std::shuffle(pair.b.begin(), pair.b.end(), rng);
        out.push_back(std::move(pair));
    }
    return out;
}

std::vector<Tensor> synth_images(std::uint64_t seed, int count, int rows, int cols) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<Tensor> out;
    for (int k = 0; k < count; ++k) {
        Tensor t(rows, cols, 1);
        double cx[3], cy[3], s[3], a[3];
        for (int j = 0; j < 3; ++j) {
            cx[j] = u(rng) * cols;
            cy[j] = u(rng) * rows;
            s[j] = 2.0 + 4.0 * u(rng);
            a[j] = (u(rng) - 0.5) * 0.8;
        }
        for (int r = 0; r < rows; ++r) {
            for (int c = 0; c < cols; ++c) {
                double v = 0.5;
                for (int j = 0; j < 3; ++j) {
                    v += a[j] * std::exp(-((r - cy[j]) * (r - cy[j]) + (c - cx[j]) * (c - cx[j])) / (2 * s[j] * s[j]));
                }
                t.at(r, c, 0) = std::clamp(v, 0.0, 1.0);
            }
        }
        out.push_back(std::move(t));
    }
    return out;
}

}  // namespace sfp::synth
