#include <benchmark/benchmark.h>

#include <random>

#include "voxpipe/audio_io.hpp"
#include "voxpipe/clustering.hpp"
#include "voxpipe/features.hpp"
#include "voxpipe/synth.hpp"
#include "voxpipe/vad.hpp"

namespace {

using namespace voxpipe;

audio::AudioBuffer clip(double seconds) {
  auto spec = synth::preset("low");
  return synth::synthesize_clip(spec, 110.0, seconds, 16000, 0.2, 3).noisy;
}

void BM_FeatureVector(benchmark::State& state) {
  const auto buf = clip(static_cast<double>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(features::extract_feature_vector(buf));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(buf.samples.size()));
}
BENCHMARK(BM_FeatureVector)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

void BM_Yin(benchmark::State& state) {
  const auto buf = clip(2.0);
  for (auto _ : state) benchmark::DoNotOptimize(features::f0_yin(buf));
}
BENCHMARK(BM_Yin)->Unit(benchmark::kMillisecond);

void BM_Resample(benchmark::State& state) {
  auto buf = clip(2.0);
  buf = audio::resample(buf, 44100);
  for (auto _ : state) benchmark::DoNotOptimize(audio::resample(buf, static_cast<int>(state.range(0))));
}
BENCHMARK(BM_Resample)->Arg(16000)->Arg(22050)->Unit(benchmark::kMillisecond);

void BM_Vad(benchmark::State& state) {
  const auto buf = clip(4.0);
  for (auto _ : state) benchmark::DoNotOptimize(vad::detect_segments(buf, {}));
}
BENCHMARK(BM_Vad)->Unit(benchmark::kMicrosecond);

Eigen::MatrixXd points(Eigen::Index n, Eigen::Index d) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXd x(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) x(i, j) = g(rng) + (i % 3) * 4.0;
  }
  return x;
}

void BM_DisjointSet(benchmark::State& state) {
  const auto x = points(state.range(0), 31);
  for (auto _ : state) benchmark::DoNotOptimize(cluster::disjoint_set_cluster(x, 0.8));
}
BENCHMARK(BM_DisjointSet)->Arg(100)->Arg(400);

void BM_Agglomerative(benchmark::State& state) {
  const auto x = points(state.range(0), 31);
  cluster::AgglomerativeParams p;
  p.n_clusters = 3;
  for (auto _ : state) benchmark::DoNotOptimize(cluster::agglomerative(x, p));
}
BENCHMARK(BM_Agglomerative)->Arg(100)->Arg(200);

void BM_Gmm(benchmark::State& state) {
  const auto x = points(state.range(0), 4);
  cluster::GmmParams p;
  p.k = 3;
  for (auto _ : state) benchmark::DoNotOptimize(cluster::gmm_fit(x, p));
}
BENCHMARK(BM_Gmm)->Arg(300);

}  // namespace
BENCHMARK_MAIN();
