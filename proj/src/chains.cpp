#include "nrf/chains.hpp"

#include <algorithm>
#include <exception>
#include <vector>

#include <omp.h>

#include "nrf/error.hpp"

namespace nrf {

namespace {
std::size_t g_threads = 0;
}

void set_num_threads(std::size_t threads) {
  g_threads = threads;
  if (threads > 0) omp_set_num_threads(static_cast<int>(threads));
}

std::size_t num_threads() {
  return g_threads > 0 ? g_threads : static_cast<std::size_t>(omp_get_max_threads());
}

std::vector<Rng> chain_streams(std::uint64_t seed, std::uint64_t tag, std::size_t n) {
  std::vector<Rng> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(Rng::stream(seed, tag, i));
  return out;
}

RevisionStats revise_parallel(const SamplerConfig& cfg, const SamplerTarget& target, ChainBatch& chains,
                              std::span<Rng> rngs) {
  const std::size_t n = chains.size();
  if (rngs.size() != n) throw ShapeError("revise_parallel: one rng stream per chain required");
  const std::size_t blocks = std::min(n, num_threads());
  if (blocks <= 1) return revise(cfg, target, chains, rngs);

  std::vector<RevisionStats> stats(blocks);
  std::vector<std::exception_ptr> errors(blocks);
  const std::size_t t0 = chains.t;
  std::size_t t_end = t0;
#pragma omp parallel for schedule(static, 1) num_threads(static_cast<int>(blocks))
  for (std::size_t b = 0; b < blocks; ++b) {
    const std::size_t begin = n * b / blocks, end = n * (b + 1) / blocks;
    try {
      ChainBatch part = chains.slice(begin, end);
      stats[b] = revise(cfg, target, part, rngs.subspan(begin, end - begin));
      chains.assign_slice(begin, part);
      if (b == 0) t_end = part.t;
    } catch (...) {
      errors[b] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  chains.t = t_end;
  RevisionStats total;
  for (auto& s : stats) total += s;
  return total;
}

RevisionStats revise_serial(const SamplerConfig& cfg, const SamplerTarget& target, ChainBatch& chains,
                            std::span<Rng> rngs) {
  const std::size_t n = chains.size();
  if (rngs.size() != n) throw ShapeError("revise_serial: one rng stream per chain required");
  RevisionStats total;
  std::size_t t_end = chains.t;
  for (std::size_t i = 0; i < n; ++i) {
    ChainBatch part = chains.slice(i, i + 1);
    total += revise(cfg, target, part, rngs.subspan(i, 1));
    chains.assign_slice(i, part);
    t_end = part.t;
  }
  chains.t = t_end;
  return total;
}

}  // namespace nrf
