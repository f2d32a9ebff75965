#include <benchmark/benchmark.h>

#include <cmath>
#include <cstdint>

#include "qcs/ensemble.hpp"
#include "qcs/estimation.hpp"
#include "qcs/protocol.hpp"
#include "qcs/random.hpp"

namespace {

using namespace qcs;

const ClockSpecies kSpecies("cs", kTwoPi);

void BM_Collapse(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) {
    state.PauseTiming();
    Ensemble e(n, kSpecies, 0.0);
    RandomStream rng(1, streams::collapse);
    state.ResumeTiming();
    benchmark::DoNotOptimize(alice_collapse_all(e, 0.0, BasisPhase(0.0), rng));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Collapse)->Arg(100000)->Arg(1000000)->Unit(benchmark::kMillisecond);

void BM_SampleBatch(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  Ensemble e(1000000, kSpecies, 0.0);
  SubensembleHandle handle;
  std::uint64_t refills = 0;
  const auto refill = [&] {
    e = Ensemble(1000000, kSpecies, 0.0);
    RandomStream collapse(refills++, streams::collapse);
    const auto part = alice_collapse_all(e, 0.0, BasisPhase(0.0), collapse);
    handle = select_subensemble(e, part.type_ii, PairPhase::type_ii);
  };
  refill();
  RandomStream rng(2, streams::bob_sampling);
  double t = 0.0;
  for (auto _ : state) {
    if (handle.available(Party::bob) < batch) {
      state.PauseTiming();
      refill();
      state.ResumeTiming();
    }
    benchmark::DoNotOptimize(sample_batch(handle, t, batch, Party::bob, BasisPhase(0.0), rng));
    t += 0.01;
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_SampleBatch)->Arg(1000)->Arg(10000);

PopulationSeries synthetic_series(double omega, double phase, std::size_t n_points, double span) {
  PopulationSeries s;
  for (std::size_t k = 0; k < n_points; ++k) {
    const double t = span * static_cast<double>(k) / static_cast<double>(n_points);
    const auto pos = static_cast<std::uint64_t>(std::lround(4000.0 * 0.5 * (1.0 + std::cos(omega * t + phase))));
    s.points.push_back({t, pos, 4000 - pos, 4000});
  }
  return s;
}

void BM_EstimatePhase(benchmark::State& state) {
  const auto series = synthetic_series(kTwoPi, 0.3, static_cast<std::size_t>(state.range(0)), 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(estimate_phase(series, kSpecies));
}
BENCHMARK(BM_EstimatePhase)->Arg(20)->Arg(100)->Arg(1000);

void BM_EnvelopePhase(benchmark::State& state) {
  const double w1 = kTwoPi, w2 = 1.1 * kTwoPi;
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto beats = beat_difference(synthetic_series(w1, 0.3, n, 10.0), synthetic_series(w2, 0.3, n, 10.0));
  for (auto _ : state) benchmark::DoNotOptimize(envelope_phase(beats, w1, w2));
}
BENCHMARK(BM_EnvelopePhase)->Arg(100)->Arg(1000);

}  // namespace

BENCHMARK_MAIN();
