#include <benchmark/benchmark.h>

#include <random>

#include "sfp/autoencoder.hpp"
#include "sfp/features.hpp"
#include "sfp/localizer.hpp"
#include "sfp/map.hpp"
#include "sfp/pnp.hpp"
#include "sfp/synth.hpp"

namespace {

using namespace sfp;

void BM_Nms(benchmark::State& state) {
    const int side = static_cast<int>(state.range(0));
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    ScoreMap s(side, side);
    for (Eigen::Index i = 0; i < s.size(); ++i) s.data()[i] = u(rng);
    for (auto _ : state) benchmark::DoNotOptimize(features::nms(s, 2, 0.5));
    state.SetItemsProcessed(state.iterations() * s.size());
}
BENCHMARK(BM_Nms)->Arg(32)->Arg(64)->Arg(128);

void BM_PnpRansac(benchmark::State& state) {
    const auto prob = synth::synth_pnp(2, static_cast<int>(state.range(0)), 1.0, 0.2);
    const geometry::Intrinsics K;
    for (auto _ : state) benchmark::DoNotOptimize(pnp::pnp_ransac(prob.matches, K, {1000, 4.0, 0.999, 4, 0}));
}
BENCHMARK(BM_PnpRansac)->Arg(50)->Arg(200)->Unit(benchmark::kMicrosecond);

void BM_RefinePose(benchmark::State& state) {
    const auto prob = synth::synth_pnp(3, 200, 1.0, 0.0);
    const geometry::Intrinsics K;
    for (auto _ : state) benchmark::DoNotOptimize(pnp::refine_pose(prob.truth, prob.matches, K));
}
BENCHMARK(BM_RefinePose)->Unit(benchmark::kMicrosecond);

struct LocalizationFixture {
    synth::Scene scene;
    map::LandmarkMap map;
    std::vector<features::Keypoint> query;

    LocalizationFixture() {
        scene = synth::synth_scene(3, 400, 9, 0.0, 0.0, 0.0);
        std::vector<map::FrameInput> frames;
        for (std::size_t f = 0; f + 1 < scene.frames.size(); ++f) frames.push_back(synth::frame_input(scene.frames[f], true));
        map::BuildConfig c;
        c.intrinsics = scene.intrinsics;
        map = map::build_map(frames, scene.levels, c);
        query = synth::keypoints(scene.frames.back());
    }
};

const LocalizationFixture& fixture() {
    static const LocalizationFixture fx;
    return fx;
}

void BM_MatchLevel(benchmark::State& state) {
    const auto& fx = fixture();
    const int level = static_cast<int>(state.range(0));
    std::vector<int> ids(fx.map.landmarks.size());
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(i);
    const auto q = features::at_level(fx.query, level);
    for (auto _ : state) benchmark::DoNotOptimize(localizer::match_level(q, fx.map, ids, level, 0.8));
}
BENCHMARK(BM_MatchLevel)->DenseRange(1, 3)->Unit(benchmark::kMicrosecond);

void BM_Localize(benchmark::State& state) {
    const auto& fx = fixture();
    const auto config = localizer::LocalizerConfig::defaults_for(3);
    const localizer::Query q{fx.query, {}};
    for (auto _ : state) benchmark::DoNotOptimize(localizer::localize(q, fx.map, fx.scene.intrinsics, config));
}
BENCHMARK(BM_Localize)->Unit(benchmark::kMillisecond);

void BM_SerializeMap(benchmark::State& state) {
    const auto& fx = fixture();
    for (auto _ : state) benchmark::DoNotOptimize(map::serialize(fx.map));
    state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(map::map_stats(fx.map).total_bytes));
}
BENCHMARK(BM_SerializeMap)->Unit(benchmark::kMicrosecond);

void BM_Encode(benchmark::State& state) {
    const int side = static_cast<int>(state.range(0));
    const auto params = autoencoder::init_params(autoencoder::NetConfig{}, 1);
    const auto image = synth::synth_images(4, 1, side, side).front();
    for (auto _ : state) benchmark::DoNotOptimize(autoencoder::encode(image, params));
}
BENCHMARK(BM_Encode)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
    const auto batch = synth::synth_images(7, 4, 32, 32);
    const auto params = autoencoder::init_params(autoencoder::NetConfig{}, 1);
    std::uint64_t seed = 0;
    for (auto _ : state) benchmark::DoNotOptimize(autoencoder::backward(batch, params, seed++));
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
