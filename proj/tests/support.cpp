#include "support.hpp"

#include <algorithm>
#include <cmath>

namespace nrf::testing {

double max_rel_err(const Tensor& a, const Tensor& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a[i] - b[i]) / std::max(1.0, std::abs(b[i])));
  return worst;
}

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double scale) {
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = scale * rng.normal();
  return t;
}

void perturb_params(ParamSet& params, Rng& rng, double scale) {
  for (const auto& [name, t] : params.entries()) {
    Tensor& p = params.get(name);
    if (name.ends_with(".b") || name.ends_with(".beta")) {
      for (auto& v : p.values()) v += scale * rng.normal();
    } else if (name.ends_with(".g") || name.ends_with(".gamma")) {
      for (auto& v : p.values()) v *= 1.0 + scale * rng.normal();
    } else if (name.ends_with(".running_mean")) {
      for (auto& v : p.values()) v = scale * rng.normal();
    } else if (name.ends_with(".running_var")) {
      for (auto& v : p.values()) v = 0.5 + rng.uniform();
    }
  }
}

NetworkSpec random_spec(Rng& rng, std::size_t input_dim, std::size_t output_dim, std::size_t max_dense,
                        std::size_t max_width, bool allow_batch_norm) {
  static const Activation acts[] = {Activation::linear, Activation::relu,     Activation::leaky_relu,
                                    Activation::tanh,   Activation::softplus, Activation::sigmoid};
  NetworkSpec s;
  s.input_dim = input_dim;
  const std::size_t dense = 1 + rng.index(max_dense);
  for (std::size_t l = 0; l + 1 < dense; ++l) {
    s.dense(1 + rng.index(max_width), rng.index(2) == 1);
    if (allow_batch_norm && rng.index(3) == 0) s.batch_norm();
    s.act(acts[rng.index(6)], 0.1 + 0.3 * rng.uniform());
  }
  s.dense(output_dim, rng.index(2) == 1);
  return s;
}

GeneratorNet linear_generator(std::size_t latent_dim, std::size_t obs_dim, double sigma, Rng& rng) {
  NetworkSpec s;
  s.input_dim = latent_dim;
  s.dense(obs_dim);
  GeneratorNet g{s, init_params(s, rng), sigma};
  perturb_params(g.params, rng, 0.5);
  return g;
}

}  // namespace nrf::testing
