#pragma once

#include <cstddef>
#include <span>

#include "nrf/samplers.hpp"

namespace nrf {

// Number of OpenMP threads used by the parallel drivers. 0 keeps the runtime default.
void set_num_threads(std::size_t threads);
std::size_t num_threads();

// Splits the chains into contiguous blocks and revises the blocks in
// parallel. Every kernel is row-independent and each chain owns its rng
// stream, so the result does not depend on the thread count.
RevisionStats revise_parallel(const SamplerConfig& cfg, const SamplerTarget& target, ChainBatch& chains,
                              std::span<Rng> rngs);

// Reference: one chain at a time, no threading.
RevisionStats revise_serial(const SamplerConfig& cfg, const SamplerTarget& target, ChainBatch& chains,
                            std::span<Rng> rngs);

// Independent rng streams (seed, tag, i) for i in [0, n).
std::vector<Rng> chain_streams(std::uint64_t seed, std::uint64_t tag, std::size_t n);

}  // namespace nrf
