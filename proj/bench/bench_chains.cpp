// revise_parallel vs revise_serial on a freshly initialised GMM model.
#include <benchmark/benchmark.h>

#include <vector>

#include "nrf/chains.hpp"
#include "nrf/training.hpp"

namespace {

struct Fixture {
  nrf::TrainState state;
  nrf::SamplerConfig cfg;

  Fixture() {
    nrf::Rng rng(7);
    state = nrf::init_state(nrf::gmm_potential_spec(), 1, nrf::gmm_generator_spec(), 0.1, rng);
    cfg.steps = 10;
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

nrf::ChainBatch start(std::size_t n) {
  nrf::Rng rng(11);
  nrf::Tensor x({n, 2}), h({n, 2});
  rng.fill_normal(x.values());
  rng.fill_normal(h.values());
  return nrf::ChainBatch::at(std::move(x), std::move(h));
}

template <bool Parallel>
void BM_Revise(benchmark::State& st) {
  const auto& f = fixture();
  nrf::NrfTarget target(f.state.pot, f.state.gen);
  const auto n = static_cast<std::size_t>(st.range(0));
  if constexpr (Parallel) nrf::set_num_threads(static_cast<std::size_t>(st.range(1)));
  for (auto _ : st) {
    st.PauseTiming();
    auto chains = start(n);
    auto rngs = nrf::chain_streams(3, 0, n);
    st.ResumeTiming();
    if constexpr (Parallel)
      nrf::revise_parallel(f.cfg, target, chains, rngs);
    else
      nrf::revise_serial(f.cfg, target, chains, rngs);
    benchmark::DoNotOptimize(chains.x.data());
  }
  st.SetItemsProcessed(st.iterations() * static_cast<int64_t>(n * f.cfg.steps));
}

}  // namespace

BENCHMARK(BM_Revise<false>)->Name("revise_serial")->Arg(100)->Arg(1000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Revise<true>)
    ->Name("revise_parallel")
    ->ArgsProduct({{100, 1000}, {1, 2, 4}})
    ->Unit(benchmark::kMillisecond)
    ->UseRealTime();

BENCHMARK_MAIN();
