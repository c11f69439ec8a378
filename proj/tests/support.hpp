#pragma once

#include <cstdint>
#include <vector>

#include "nrf/models.hpp"
#include "nrf/network.hpp"
#include "nrf/rng.hpp"

namespace nrf::testing {

// Largest |a - b| / max(1, |b|) over all entries.
double max_rel_err(const Tensor& a, const Tensor& b);

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double scale = 1.0);

// Randomizes biases, weight-norm gains and batch-norm affine parameters so
// that gradient checks do not sit at special points.
void perturb_params(ParamSet& params, Rng& rng, double scale = 0.3);

// Random MLP with at most `max_dense` dense layers of width <= max_width.
NetworkSpec random_spec(Rng& rng, std::size_t input_dim, std::size_t output_dim, std::size_t max_dense,
                        std::size_t max_width, bool allow_batch_norm);

// Single linear layer h -> h W + b.
GeneratorNet linear_generator(std::size_t latent_dim, std::size_t obs_dim, double sigma, Rng& rng);

}  // namespace nrf::testing
