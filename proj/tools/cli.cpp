#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <memory>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "sfp/autoencoder.hpp"
#include "sfp/checkpoint.hpp"
#include "sfp/dataset.hpp"
#include "sfp/error.hpp"
#include "sfp/features.hpp"
#include "sfp/localizer.hpp"
#include "sfp/map.hpp"
#include "sfp/metrics.hpp"
#include "sfp/report.hpp"
#include "sfp/synth.hpp"

namespace sfp::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Settings {
    std::uint64_t seed = 0;
    std::vector<int> levels = {32, 64, 128};
    std::string mode = "full";
    double tau = 0.5;
    double lambda = 1e-3;
    int top_k = 3;
    std::vector<double> radii = {8.0, 4.0};  // gated levels, deep -> shallow
    double floor = 0.8;
    int min_inliers = 12;
    int ransac_iterations = 1000;
    double ransac_threshold_px = 4.0;
    int steps = 500;
    double learning_rate = 1e-4;
    int image_size = 32;
    int synthetic = 0;
    int nms_radius = 1;
    int max_per_level = 0;
    double merge_radius = 0.01;
    int landmarks = 200;
    int frames = 8;
    int queries = 4;
    int disjoint_queries = 0;
    double noise_px = 0.0;
    double outlier_rate = 0.0;
    double descriptor_noise = 0.0;
    int pairs = 10;
    int points = 200;
};

using Setter = std::function<void(Settings&, const json&)>;

template <typename T>
void key(std::map<std::string, Setter>& keys, const std::string& name, T Settings::*field) {
    keys[name] = [field](Settings& s, const json& j) { s.*field = j.get<T>(); };
}

std::map<std::string, Setter> config_keys() {
    std::map<std::string, Setter> k;
    key(k, "seed", &Settings::seed);
    key(k, "levels", &Settings::levels);
    key(k, "mode", &Settings::mode);
    key(k, "tau", &Settings::tau);
    key(k, "lambda", &Settings::lambda);
    key(k, "top_k", &Settings::top_k);
    key(k, "radii", &Settings::radii);
    key(k, "floor", &Settings::floor);
    key(k, "min_inliers", &Settings::min_inliers);
    key(k, "ransac_iterations", &Settings::ransac_iterations);
    key(k, "ransac_threshold_px", &Settings::ransac_threshold_px);
    key(k, "steps", &Settings::steps);
    key(k, "learning_rate", &Settings::learning_rate);
    key(k, "image_size", &Settings::image_size);
    key(k, "synthetic", &Settings::synthetic);
    key(k, "nms_radius", &Settings::nms_radius);
    key(k, "max_per_level", &Settings::max_per_level);
    key(k, "merge_radius", &Settings::merge_radius);
    key(k, "landmarks", &Settings::landmarks);
    key(k, "frames", &Settings::frames);
    key(k, "queries", &Settings::queries);
    key(k, "disjoint_queries", &Settings::disjoint_queries);
    key(k, "noise_px", &Settings::noise_px);
    key(k, "outlier_rate", &Settings::outlier_rate);
    key(k, "descriptor_noise", &Settings::descriptor_noise);
    key(k, "pairs", &Settings::pairs);
    key(k, "points", &Settings::points);
    return k;
}

void apply_config(Settings& s, const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open config " + path.string());
    }
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw InvalidArgument("config " + path.string() + " is not valid JSON");
    }
    if (!doc.is_object()) {
        throw InvalidArgument("config must be a JSON object");
    }
    const auto keys = config_keys();
    for (const auto& [name, value] : doc.items()) {
        const auto it = keys.find(name);
        if (it == keys.end()) {
            throw InvalidArgument("unknown config key '" + name + "'");
        }
        try {
            it->second(s, value);
        } catch (const json::exception&) {
            throw InvalidArgument("config key '" + name + "' has the wrong type");
        }
    }
}

// Flags parse into their own storage and overwrite the settings only when given.
class Flags {
public:
    explicit Flags(CLI::App* app) : app_(app) {}

    template <typename T>
    CLI::Option* add(const std::string& name, T Settings::*field, const std::string& help) {
        auto holder = std::make_shared<T>();
        CLI::Option* o = app_->add_option(name, *holder, help);
        apply_.push_back([o, holder, field](Settings& s) {
            if (o->count() > 0) s.*field = *holder;
        });
        return o;
    }

    CLI::Option* path(const std::string& name, fs::path& target, const std::string& help) {
        return app_->add_option(name, target, help);
    }

    Settings resolve() const {
        Settings s;
        if (!config_.empty()) apply_config(s, config_);
        for (const auto& f : apply_) f(s);
        return s;
    }

    fs::path config_;

private:
    CLI::App* app_;
    std::vector<std::function<void(Settings&)>> apply_;
};

Flags& common(CLI::App* app, std::vector<std::unique_ptr<Flags>>& store) {
    store.push_back(std::make_unique<Flags>(app));
    Flags& f = *store.back();
    app->add_option("--config", f.config_, "JSON settings file (flags override it)");
    f.add("--seed", &Settings::seed, "random seed");
    f.add("--levels", &Settings::levels, "descriptor dims per level, shallow to deep")->delimiter(',');
    f.add("--mode", &Settings::mode, "descriptor mode")->check(CLI::IsMember({"full", "short"}));
    return f;
}

features::DescriptorMode mode_of(const Settings& s) {
    if (s.mode == "full") return features::DescriptorMode::Full;
    if (s.mode == "short") return features::DescriptorMode::Short;
    throw InvalidArgument("mode must be 'full' or 'short'");
}

void require_file(const fs::path& p, const std::string& what) {
    if (p.empty()) throw InvalidArgument(what + " path is required");
    if (!fs::is_regular_file(p)) throw IoError(what + " " + p.string() + " does not exist");
}

void require_dir(const fs::path& p, const std::string& what) {
    if (p.empty()) throw InvalidArgument(what + " path is required");
    if (!fs::is_directory(p)) throw IoError(what + " " + p.string() + " is not a directory");
}

void require_output(const fs::path& p) {
    if (p.empty()) throw InvalidArgument("--out is required");
    const fs::path parent = p.has_parent_path() ? p.parent_path() : fs::path(".");
    if (!fs::is_directory(parent)) throw IoError("output directory " + parent.string() + " does not exist");
}

// ---------------------------------------------------------------- scene dirs

struct SceneDir {
    geometry::Intrinsics intrinsics;
    std::vector<int> levels;
    std::vector<std::string> map_frames;
    std::vector<std::string> query_frames;
};

SceneDir read_scene(const fs::path& dir) {
    require_dir(dir, "scene");
    const fs::path file = dir / "scene.json";
    std::ifstream in(file);
    if (!in) throw IoError("cannot open " + file.string());
    try {
        const json j = json::parse(in);
        if (j.at("format").get<std::string>() != "sfp-scene") throw FormatError(file.string() + ": not a scene file");
        SceneDir s;
        const auto& k = j.at("intrinsics");
        s.intrinsics = {k.at("fx").get<double>(), k.at("fy").get<double>(), k.at("cx").get<double>(),
                        k.at("cy").get<double>(), k.at("width").get<int>(),   k.at("height").get<int>()};
        s.levels = j.at("levels").get<std::vector<int>>();
        s.map_frames = j.at("map_frames").get<std::vector<std::string>>();
        s.query_frames = j.at("query_frames").get<std::vector<std::string>>();
        return s;
    } catch (const json::exception& e) {
        throw FormatError(file.string() + ": " + e.what());
    }
}

void write_scene(const fs::path& dir, const SceneDir& s) {
    const json j{{"format", "sfp-scene"},
                 {"version", 1},
                 {"intrinsics",
                  {{"fx", s.intrinsics.fx},
                   {"fy", s.intrinsics.fy},
                   {"cx", s.intrinsics.cx},
                   {"cy", s.intrinsics.cy},
                   {"width", s.intrinsics.width},
                   {"height", s.intrinsics.height}}},
                 {"levels", s.levels},
                 {"map_frames", s.map_frames},
                 {"query_frames", s.query_frames}};
    std::ofstream out(dir / "scene.json");
    out << j.dump(2) << '\n';
    if (!out) throw IoError("failed writing " + (dir / "scene.json").string());
}

std::vector<double> read_depths(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<double> d;
    double v = 0.0;
    while (in >> v) d.push_back(v);
    if (!in.eof()) throw FormatError(path.string() + ": expected one depth per line");
    return d;
}

void write_depths(const fs::path& path, const std::vector<double>& depths) {
    std::ofstream out(path);
    out << std::setprecision(17);
    for (double d : depths) out << d << '\n';
    if (!out) throw IoError("failed writing " + path.string());
}

void write_frame(const fs::path& dir, const std::string& stem, const synth::Frame& f) {
    features::save_keypoints(synth::keypoints(f), dir / (stem + ".sfpk"));
    dataset::write_pose_file(dir / (stem + ".pose.txt"), f.pose);
    write_depths(dir / (stem + ".depth.txt"), synth::depths(f));
}

std::string stem_of(const fs::path& p) {
    std::string s = p.filename().string();
    const auto dot = s.find('.');
    return dot == std::string::npos ? s : s.substr(0, dot);
}

// ------------------------------------------------------------------ commands

int cmd_synth(const Settings& s, const std::string& kind, const fs::path& out_dir, std::ostream& out) {
    if (out_dir.empty()) throw InvalidArgument("--out is required");
    fs::create_directories(out_dir);
    if (kind == "pairs") {
        const auto pairs = synth::synth_homography_pairs(s.seed, s.pairs, s.points, s.noise_px);
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            char stem[32];
            std::snprintf(stem, sizeof stem, "pair-%04zu", i);
            features::save_keypoints(pairs[i].a, out_dir / (std::string(stem) + ".a.sfpk"));
            features::save_keypoints(pairs[i].b, out_dir / (std::string(stem) + ".b.sfpk"));
            std::ofstream h(out_dir / (std::string(stem) + ".H.txt"));
            h << std::setprecision(17) << pairs[i].H << '\n';
            if (!h) throw IoError("failed writing homography");
        }
        out << "wrote " << pairs.size() << " pairs to " << out_dir.string() << '\n';
        return kOk;
    }
    if (s.queries < 0 || s.disjoint_queries < 0) throw InvalidArgument("query counts must be non-negative");
    synth::SceneConfig c;
    c.seed = s.seed;
    c.n_landmarks = s.landmarks;
    c.n_frames = s.frames + s.queries;
    c.noise_px = s.noise_px;
    c.outlier_rate = s.outlier_rate;
    c.descriptor_noise = s.descriptor_noise;
    c.levels = pyramid::make_levels(s.levels);
    c.level_weights.assign(c.levels.size(), 1.0);
    if (c.levels.size() == 3) c.level_weights = {0.5, 0.3, 0.2};
    const auto scene = synth::synth_scene(c);
    // Queries spread evenly along the arc, between mapping frames.
    std::vector<bool> is_query(static_cast<std::size_t>(c.n_frames), false);
    for (int q = 0; q < s.queries; ++q) {
        const auto idx = static_cast<std::size_t>(std::floor((q + 0.5) * c.n_frames / s.queries));
        is_query[std::min(idx, is_query.size() - 1)] = true;
    }
    SceneDir dir{scene.intrinsics, s.levels, {}, {}};
    for (int f = 0; f < c.n_frames; ++f) {
        const std::string stem = dataset::frame_stem(f);
        write_frame(out_dir, stem, scene.frames[static_cast<std::size_t>(f)]);
        (is_query[static_cast<std::size_t>(f)] ? dir.query_frames : dir.map_frames).push_back(stem);
    }
    for (int d = 0; d < s.disjoint_queries; ++d) {
        const std::string stem = dataset::frame_stem(c.n_frames + d);
        write_frame(out_dir, stem, synth::disjoint_frame(scene, s.seed + 1000 + static_cast<std::uint64_t>(d)));
        dir.query_frames.push_back(stem);
    }
    write_scene(out_dir, dir);
    out << "wrote scene with " << dir.map_frames.size() << " map frames and " << dir.query_frames.size()
        << " queries to " << out_dir.string() << '\n';
    return kOk;
}

int cmd_build_map(const Settings& s, const fs::path& scene_dir, bool no_depth, const fs::path& out_path,
                  std::ostream& out) {
    const SceneDir scene = read_scene(scene_dir);
    require_output(out_path);
    std::vector<map::FrameInput> frames;
    for (const auto& stem : scene.map_frames) {
        map::FrameInput f;
        f.keypoints = features::load_keypoints(scene_dir / (stem + ".sfpk"));
        f.pose = dataset::read_pose_file(scene_dir / (stem + ".pose.txt"));
        const fs::path depth = scene_dir / (stem + ".depth.txt");
        if (!no_depth && fs::exists(depth)) f.depths = read_depths(depth);
        frames.push_back(std::move(f));
    }
    map::BuildConfig bc;
    bc.intrinsics = scene.intrinsics;
    bc.merge_radius = s.merge_radius;
    bc.match_floor = s.floor;
    auto m = map::build_map(frames, pyramid::make_levels(scene.levels), bc);
    if (mode_of(s) == features::DescriptorMode::Short && m.mode == features::DescriptorMode::Full) {
        m = map::shorten_descriptors(m);
    }
    map::save_map(m, out_path);
    out << "wrote " << m.landmarks.size() << " landmarks, " << m.frames.size() << " frames to " << out_path.string()
        << '\n';
    return kOk;
}

json stats_json(const map::MapStats& st) {
    return json{{"mode", st.mode == features::DescriptorMode::Full ? "full" : "short"},
                {"landmarks", st.landmarks},
                {"frames", st.frames},
                {"header_bytes", st.header_bytes},
                {"position_bytes", st.position_bytes},
                {"landmark_meta_bytes", st.landmark_meta_bytes},
                {"descriptor_bytes", st.descriptor_bytes},
                {"descriptor_bytes_per_level", st.descriptor_bytes_per_level},
                {"frame_index_bytes", st.frame_index_bytes},
                {"total_bytes", st.total_bytes},
                {"megabytes", st.megabytes()}};
}

int cmd_map_stats(const fs::path& map_path, const fs::path& out_path, std::ostream& out) {
    require_file(map_path, "map");
    const auto st = map::map_stats(map::load_map(map_path));
    const std::string text = stats_json(st).dump(2);
    out << text << '\n';
    if (!out_path.empty()) {
        require_output(out_path);
        std::ofstream f(out_path);
        f << text << '\n';
        if (!f) throw IoError("failed writing " + out_path.string());
    }
    return kOk;
}

int cmd_shorten(const fs::path& map_path, const fs::path& out_path, std::ostream& out) {
    require_file(map_path, "map");
    require_output(out_path);
    const auto m = map::shorten_descriptors(map::load_map(map_path));
    map::save_map(m, out_path);
    out << "wrote short-descriptor map to " << out_path.string() << '\n';
    return kOk;
}

localizer::LocalizerConfig localizer_config(const Settings& s, int levels) {
    auto c = localizer::LocalizerConfig::defaults_for(levels);
    c.top_k = s.top_k;
    c.similarity_floor.assign(static_cast<std::size_t>(levels), s.floor);
    if (static_cast<int>(s.radii.size()) != levels - 1) {
        throw InvalidArgument("need " + std::to_string(levels - 1) + " gating radii, deep to shallow");
    }
    for (int i = 0; i + 1 < levels; ++i) {
        // radii[0] gates level n - 1, radii[n - 2] gates level 1.
        c.gate_radius_px[static_cast<std::size_t>(levels - 2 - i)] = s.radii[static_cast<std::size_t>(i)];
    }
    c.ransac.max_iterations = s.ransac_iterations;
    c.ransac.threshold_px = s.ransac_threshold_px;
    c.ransac.seed = s.seed;
    c.min_inliers = s.min_inliers;
    c.mode = mode_of(s);
    return c;
}

int cmd_localize(const Settings& s, const fs::path& map_path, const fs::path& scene_dir, const fs::path& out_path,
                 std::ostream& out) {
    require_file(map_path, "map");
    const SceneDir scene = read_scene(scene_dir);
    require_output(out_path);
    const auto m = map::load_map(map_path);
    const auto cfg = localizer_config(s, static_cast<int>(m.levels.size()));
    std::vector<report::QueryRecord> records;
    int localized = 0;
    for (const auto& stem : scene.query_frames) {
        localizer::Query q;
        q.keypoints = features::load_keypoints(scene_dir / (stem + ".sfpk"));
        const auto result = localizer::localize(q, m, scene.intrinsics, cfg);
        localized += result.success ? 1 : 0;
        records.push_back(report::make_record(stem, result));
    }
    report::write_reports(records, out_path);
    out << "localized " << localized << " of " << records.size() << " queries; report " << out_path.string() << '\n';
    return kOk;
}

int cmd_evaluate(const Settings& s, const fs::path& reports_path, const fs::path& scene_dir, const fs::path& map_path,
                 const std::string& method, const fs::path& out_path, std::ostream& out) {
    require_file(reports_path, "reports");
    require_dir(scene_dir, "scene");
    if (!out_path.empty()) require_output(out_path);
    const auto records = report::read_reports(reports_path);
    if (records.empty()) throw PipelineError("no reports to evaluate");
    std::vector<metrics::PoseError> errors;
    int localized = 0;
    for (const auto& r : records) {
        const auto truth = dataset::read_pose_file(scene_dir / (r.query_id + ".pose.txt"));
        if (r.success && r.final_pose()) {
            errors.push_back(metrics::pose_error(*r.final_pose(), truth));
            ++localized;
        } else {
            const double inf = std::numeric_limits<double>::infinity();
            errors.push_back({inf, inf});
        }
    }
    const auto med = metrics::median_errors(errors);
    metrics::ResultRow row;
    row.method = method.empty() ? "sfp-" + s.mode : method;
    if (!map_path.empty()) {
        require_file(map_path, "map");
        row.map_mb = map::map_stats(map::load_map(map_path)).megabytes();
    }
    row.median_cm = 100.0 * med.translation_m;
    row.median_deg = med.rotation_deg;
    const std::vector<metrics::ResultRow> rows{row};
    const std::string table = metrics::format_results_table(rows);
    out << table << "localized\t" << localized << '/' << records.size() << '\n';
    if (!out_path.empty()) {
        std::ofstream f(out_path);
        f << table;
        if (!f) throw IoError("failed writing " + out_path.string());
    }
    return kOk;
}

std::vector<Tensor> load_images(const Settings& s, const fs::path& dir) {
    if (s.synthetic > 0) return synth::synth_images(s.seed + 7, s.synthetic, s.image_size, s.image_size);
    require_dir(dir, "images");
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        const auto ext = e.path().extension().string();
        if (ext == ".pgm" || ext == ".ppm") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw IoError("no .pgm/.ppm images in " + dir.string());
    std::vector<Tensor> images;
    for (const auto& f : files) images.push_back(dataset::to_gray(dataset::read_pnm(f)));
    return images;
}

int cmd_train(const Settings& s, const fs::path& images_dir, const fs::path& out_path, const fs::path& trace_path,
              std::ostream& out) {
    require_output(out_path);
    const auto images = load_images(s, images_dir);
    autoencoder::NetConfig cfg;
    cfg.levels = pyramid::make_levels(s.levels);
    cfg.lambda = s.lambda;
    cfg.decoder_widths.clear();
    cfg.decoder_widths.push_back(8);
    for (std::size_t i = 1; i < cfg.levels.size(); ++i) cfg.decoder_widths.push_back(8 << i);
    if (s.steps < 1) throw InvalidArgument("steps must be at least 1");
    const auto params = autoencoder::init_params(cfg, s.seed + 1);
    const auto result = autoencoder::train(images, params, {s.steps, s.learning_rate, s.seed + 3, 0.1});
    autoencoder::save_checkpoint(result.params, out_path);
    const fs::path trace = trace_path.empty() ? fs::path(out_path.string() + ".trace.tsv") : trace_path;
    std::ofstream t(trace);
    t << "step\ttotal\treconstruction\tcompression\n" << std::setprecision(10);
    for (std::size_t i = 0; i < result.trace.size(); ++i) {
        const auto& r = result.trace[i];
        t << i << '\t' << r.total << '\t' << r.reconstruction << '\t' << r.compression << '\n';
    }
    if (!t) throw IoError("failed writing " + trace.string());
    out << "initial loss " << result.trace.front().total << ", final loss " << result.trace.back().total
        << "; checkpoint " << out_path.string() << '\n';
    return kOk;
}

int cmd_extract(const Settings& s, const fs::path& ckpt_path, const fs::path& images_dir, const fs::path& out_dir,
                const std::vector<int>& only, std::ostream& out) {
    require_file(ckpt_path, "checkpoint");
    require_dir(images_dir, "images");
    if (out_dir.empty()) throw InvalidArgument("--out is required");
    fs::create_directories(out_dir);
    const auto params = autoencoder::load_checkpoint(ckpt_path);
    features::ExtractConfig ec;
    ec.levels = only;
    ec.tau = s.tau;
    ec.nms_radius = s.nms_radius;
    ec.max_per_level = s.max_per_level;
    ec.mode = mode_of(s);
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(images_dir)) {
        const auto ext = e.path().extension().string();
        if (ext == ".pgm" || ext == ".ppm") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::size_t total = 0;
    for (const auto& f : files) {
        const auto image = dataset::to_gray(dataset::read_pnm(f));
        const auto kps = features::extract(autoencoder::encode(image, params), ec);
        features::save_keypoints(kps, out_dir / (stem_of(f) + ".sfpk"));
        total += kps.size();
    }
    out << "extracted " << total << " keypoints from " << files.size() << " images into " << out_dir.string() << '\n';
    return kOk;
}

Eigen::Matrix3d read_homography(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    Eigen::Matrix3d H;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
            if (!(in >> H(r, c))) throw FormatError(path.string() + ": expected 9 numbers");
    return H;
}

int cmd_mma(const Settings& s, const fs::path& pairs_dir, const fs::path& out_path, std::ostream& out) {
    std::vector<metrics::HomographyPair> pairs;
    if (s.synthetic > 0) {
        pairs = synth::synth_homography_pairs(s.seed, s.synthetic, s.points, s.noise_px);
    } else {
        require_dir(pairs_dir, "pairs");
        std::vector<std::string> stems;
        for (const auto& e : fs::directory_iterator(pairs_dir)) {
            const std::string name = e.path().filename().string();
            if (name.size() > 6 && name.ends_with(".H.txt")) stems.push_back(name.substr(0, name.size() - 6));
        }
        std::sort(stems.begin(), stems.end());
        for (const auto& stem : stems) {
            metrics::HomographyPair p;
            p.H = read_homography(pairs_dir / (stem + ".H.txt"));
            p.a = features::load_keypoints(pairs_dir / (stem + ".a.sfpk"));
            p.b = features::load_keypoints(pairs_dir / (stem + ".b.sfpk"));
            pairs.push_back(std::move(p));
        }
    }
    if (pairs.empty()) throw PipelineError("no image pairs found");
    const auto thresholds = metrics::default_thresholds();
    const auto acc = metrics::mma(pairs, metrics::mutual_nearest_matcher, thresholds);
    const std::string curve = metrics::format_mma_curve(thresholds, acc);
    out << curve;
    if (!out_path.empty()) {
        require_output(out_path);
        std::ofstream f(out_path);
        f << curve;
        if (!f) throw IoError("failed writing " + out_path.string());
    }
    return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Sparse feature pyramid toolkit", "sfp"};
    app.require_subcommand(1, 1);
    std::vector<std::unique_ptr<Flags>> flags;

    fs::path out_path, scene_dir, map_path, images_dir, ckpt_path, reports_path, pairs_dir, trace_path;
    std::string kind = "scene";
    std::string method;
    bool no_depth = false;
    std::vector<int> only;

    auto* train = app.add_subcommand("train-toy", "train the toy autoencoder");
    {
        Flags& f = common(train, flags);
        f.add("--lambda", &Settings::lambda, "compression weight");
        f.add("--steps", &Settings::steps, "SGD steps");
        f.add("--lr", &Settings::learning_rate, "learning rate");
        f.add("--synthetic", &Settings::synthetic, "train on N generated images instead of --images");
        f.add("--size", &Settings::image_size, "side of generated images");
        f.path("--images", images_dir, "directory of .pgm/.ppm images");
        f.path("--out", out_path, "checkpoint path");
        f.path("--trace", trace_path, "loss trace path (default <out>.trace.tsv)");
    }
    auto* extract = app.add_subcommand("extract", "extract keypoints with a trained checkpoint");
    {
        Flags& f = common(extract, flags);
        f.add("--tau", &Settings::tau, "score threshold");
        f.add("--nms-radius", &Settings::nms_radius, "suppression radius in cells");
        f.add("--max-per-level", &Settings::max_per_level, "keypoint cap per level, 0 = none");
        f.path("--checkpoint", ckpt_path, "checkpoint file");
        f.path("--images", images_dir, "directory of .pgm/.ppm images");
        f.path("--out", out_path, "output directory for .sfpk files");
        extract->add_option("--only", only, "level indices to extract")->delimiter(',');
    }
    auto* build = app.add_subcommand("build-map", "build a landmark map from posed keypoint frames");
    {
        Flags& f = common(build, flags);
        f.add("--merge-radius", &Settings::merge_radius, "landmark merge radius, meters");
        f.add("--floor", &Settings::floor, "two-view match similarity floor");
        f.path("--scene", scene_dir, "scene directory");
        f.path("--out", out_path, "map file");
        build->add_flag("--no-depth", no_depth, "triangulate instead of using depth");
    }
    auto* stats = app.add_subcommand("map-stats", "byte accounting of a map");
    {
        Flags& f = common(stats, flags);
        stats->add_option("map", map_path, "map file")->required();
        f.path("--out", out_path, "also write the report here");
    }
    auto* shorten = app.add_subcommand("shorten", "convert a map to short descriptors");
    {
        Flags& f = common(shorten, flags);
        shorten->add_option("map", map_path, "map file")->required();
        f.path("--out", out_path, "output map file");
    }
    auto* localize = app.add_subcommand("localize", "localize query frames against a map");
    {
        Flags& f = common(localize, flags);
        f.add("--top-k", &Settings::top_k, "retrieved frames");
        f.add("--floor", &Settings::floor, "similarity floor");
        f.add("--radii", &Settings::radii, "gating radii in px, deep to shallow, below the deepest level")
            ->delimiter(',');
        f.add("--min-inliers", &Settings::min_inliers, "inliers needed for success");
        f.path("--map", map_path, "map file");
        f.path("--scene", scene_dir, "scene directory with query frames");
        f.path("--out", out_path, "report file (JSON lines)");
    }
    auto* evaluate = app.add_subcommand("evaluate", "median pose errors of localization reports");
    {
        Flags& f = common(evaluate, flags);
        f.path("--reports", reports_path, "report file");
        f.path("--scene", scene_dir, "scene directory with ground-truth poses");
        f.path("--map", map_path, "map file for the size column");
        evaluate->add_option("--method", method, "row label");
        f.path("--out", out_path, "also write the table here");
    }
    auto* synth_cmd = app.add_subcommand("synth", "write a synthetic scene or homography pairs");
    {
        Flags& f = common(synth_cmd, flags);
        synth_cmd->add_option("--kind", kind, "scene or pairs")->check(CLI::IsMember({"scene", "pairs"}));
        f.add("--landmarks", &Settings::landmarks, "landmark count");
        f.add("--frames", &Settings::frames, "mapping frames");
        f.add("--queries", &Settings::queries, "held-out query frames");
        f.add("--disjoint-queries", &Settings::disjoint_queries, "queries of an unrelated volume");
        f.add("--noise", &Settings::noise_px, "pixel noise sigma");
        f.add("--outliers", &Settings::outlier_rate, "outlier rate");
        f.add("--descriptor-noise", &Settings::descriptor_noise, "descriptor noise sigma");
        f.add("--pairs", &Settings::pairs, "homography pairs");
        f.add("--points", &Settings::points, "points per pair");
        f.path("--out", out_path, "output directory");
    }
    auto* mma_cmd = app.add_subcommand("mma", "mean matching accuracy curve over homography pairs");
    {
        Flags& f = common(mma_cmd, flags);
        f.add("--synthetic", &Settings::synthetic, "use N generated pairs instead of --pairs");
        f.add("--noise", &Settings::noise_px, "pixel noise of generated pairs");
        f.add("--points", &Settings::points, "points per generated pair");
        f.path("--pairs", pairs_dir, "directory of pair-XXXX.{a,b}.sfpk and .H.txt");
        f.path("--out", out_path, "also write the curve here");
    }

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            app.exit(e, out, err);
            return kOk;
        }
        err << "sfp: usage error: " << e.what() << '\n';
        return kUsage;
    }

    CLI::App* chosen = app.get_subcommands().front();
    Flags* f = nullptr;
    const std::vector<CLI::App*> order{train, extract, build, stats, shorten, localize, evaluate, synth_cmd, mma_cmd};
    for (std::size_t i = 0; i < order.size(); ++i) {
        if (order[i] == chosen) f = flags[i].get();
    }

    try {
        const Settings s = f->resolve();
        mode_of(s);
        if (chosen == train) return cmd_train(s, images_dir, out_path, trace_path, out);
        if (chosen == extract) return cmd_extract(s, ckpt_path, images_dir, out_path, only, out);
        if (chosen == build) return cmd_build_map(s, scene_dir, no_depth, out_path, out);
        if (chosen == stats) return cmd_map_stats(map_path, out_path, out);
        if (chosen == shorten) return cmd_shorten(map_path, out_path, out);
        if (chosen == localize) return cmd_localize(s, map_path, scene_dir, out_path, out);
        if (chosen == evaluate) return cmd_evaluate(s, reports_path, scene_dir, map_path, method, out_path, out);
        if (chosen == synth_cmd) return cmd_synth(s, kind, out_path, out);
        if (chosen == mma_cmd) return cmd_mma(s, pairs_dir, out_path, out);
        return kUsage;
    } catch (const InvalidArgument& e) {
        err << "sfp: invalid argument: " << e.what() << '\n';
        return kUsage;
    } catch (const IoError& e) {
        err << "sfp: i/o error: " << e.what() << '\n';
        return kIo;
    } catch (const FormatError& e) {
        err << "sfp: corrupt input: " << e.what() << '\n';
        return kIo;
    } catch (const fs::filesystem_error& e) {
        err << "sfp: i/o error: " << e.what() << '\n';
        return kIo;
    } catch (const Error& e) {
        err << "sfp: pipeline failure: " << e.what() << '\n';
        return kPipeline;
    } catch (const std::exception& e) {
        err << "sfp: pipeline failure: " << e.what() << '\n';
        return kPipeline;
    }
}

}  // namespace sfp::cli
