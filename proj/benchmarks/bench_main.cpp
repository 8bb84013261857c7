#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "beamkit/beamform.hpp"
#include "beamkit/features.hpp"
#include "beamkit/metrics.hpp"
#include "beamkit/neural/model.hpp"
#include "beamkit/neural/tensor.hpp"
#include "beamkit/room_sim.hpp"
#include "beamkit/signal_io.hpp"

namespace {

using namespace beamkit;

MultichannelWave noise(int channels, int length) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n;
  MultichannelWave w;
  w.samples.resize(channels, length);
  for (Eigen::Index i = 0; i < w.samples.size(); ++i) w.samples.data()[i] = n(rng);
  w.sample_rate = 16000;
  return w;
}

// Four seconds of four-channel audio per iteration.
void BM_StftRoundtrip(benchmark::State& state) {
  const auto x = noise(4, 64000);
  const StftConfig cfg;
  for (auto _ : state) {
    auto y = istft(stft(x, cfg), 64000);
    benchmark::DoNotOptimize(y.samples.data());
  }
  state.SetItemsProcessed(state.iterations() * 4 * 64000);
}
BENCHMARK(BM_StftRoundtrip)->Unit(benchmark::kMillisecond);

void BM_MvdrWeights(benchmark::State& state) {
  const int m = static_cast<int>(state.range(0));
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n;
  Eigen::MatrixXcd a(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) a(i, j) = {n(rng), n(rng)};
  const Eigen::MatrixXcd phi = a * a.adjoint() + 0.1 * Eigen::MatrixXcd::Identity(m, m);
  Eigen::VectorXcd steer(m);
  for (int i = 0; i < m; ++i) steer(i) = std::polar(1.0, 0.3 * i);
  for (auto _ : state) {
    auto w = mvdr_weights(phi, steer);
    benchmark::DoNotOptimize(w.data());
  }
}
BENCHMARK(BM_MvdrWeights)->Arg(4)->Arg(8)->Arg(16);

void BM_RoomImpulseResponse(benchmark::State& state) {
  RoomConfig room;
  room.dimensions = Vec3(6.0, 5.0, 2.5);
  room.rt60 = static_cast<double>(state.range(0)) / 1000.0;
  const auto array = ArrayGeometry::uniform_linear(4, 0.03, Vec3(3.0, 2.5, 1.2));
  for (auto _ : state) {
    auto rir = simulate_rir(room, Vec3(1.5, 1.0, 1.5), array);
    benchmark::DoNotOptimize(rir.rir.data());
  }
}
BENCHMARK(BM_RoomImpulseResponse)->Arg(200)->Arg(600)->Unit(benchmark::kMillisecond);

void BM_SceneGeneration(benchmark::State& state) {
  const SimulationConfig cfg;
  std::uint64_t seed = 0;
  for (auto _ : state) {
    auto scene = generate_scene(seed++, cfg);
    benchmark::DoNotOptimize(scene.mixture.samples.data());
  }
}
BENCHMARK(BM_SceneGeneration)->Unit(benchmark::kMillisecond);

void BM_ExtractorForward(benchmark::State& state) {
  const SimulationConfig sim;
  const auto scene = generate_scene(3, sim);
  const auto length = static_cast<std::size_t>(state.range(0)) * 16000 / 1000;
  MultichannelWave clip{scene.mixture.samples.leftCols(static_cast<Eigen::Index>(length)), 16000};
  const StftConfig cfg;
  const auto mix = stft(clip, cfg);
  const auto features = compute_features(mix, scene.array, scene.target_doa);
  const nn::NeuralExtractor model(nn::ExtractorConfig{}, 1);
  for (auto _ : state) {
    nn::NoGradGuard guard;
    auto out = model.forward(mix, features, length);
    benchmark::DoNotOptimize(out.waveform.values().data());
  }
}
BENCHMARK(BM_ExtractorForward)->Arg(500)->Arg(1000)->Unit(benchmark::kMillisecond);

void BM_SiSdr(benchmark::State& state) {
  const auto x = noise(2, 64000);
  std::vector<double> ref(64000), est(64000);
  for (int i = 0; i < 64000; ++i) {
    ref[i] = x.samples(0, i);
    est[i] = ref[i] + 0.3 * x.samples(1, i);
  }
  for (auto _ : state) benchmark::DoNotOptimize(si_sdr(est, ref));
}
BENCHMARK(BM_SiSdr);

}  // namespace

BENCHMARK_MAIN();
