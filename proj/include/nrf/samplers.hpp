#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "nrf/models.hpp"
#include "nrf/rng.hpp"
#include "nrf/targets.hpp"
#include "nrf/tensor.hpp"

namespace nrf {

enum class SamplerKind { sgld, sghmc, ld_exact, hmc_exact, coopnet };

std::string_view to_string(SamplerKind kind);
SamplerKind parse_sampler_kind(std::string_view name);
bool uses_momentum(SamplerKind kind);
bool uses_exact_gradient(SamplerKind kind);

// delta_t = (a (1 + t / b))^{-c}
double step_size(std::size_t t, double a, double b, double c);

struct StepSchedule {
  bool constant = true;
  double delta = 0.01;
  double a = 10.0, b = 1000.0, c = 2.0;

  double at(std::size_t t) const { return constant ? delta : step_size(t, a, b, c); }
  static StepSchedule fixed(double delta) { return {true, delta, 10.0, 1000.0, 2.0}; }
  static StepSchedule decaying(double a, double b, double c) { return {false, 0.0, a, b, c}; }
};

struct SamplerConfig {
  SamplerKind kind = SamplerKind::sgld;
  std::size_t steps = 10;  // L; for coopnet the number of (Lx, Lh) sweeps
  StepSchedule schedule;
  double beta = 0.1;
  std::size_t inner_steps = 1;
  std::optional<double> delta_star;  // inner LD step; defaults to the current delta_l
  std::size_t coop_lx = 20;
  std::size_t coop_lh = 20;

  void validate() const;
};

// One particle z = (x, h) with momenta. Rank-1 tensors.
struct ChainState {
  Tensor x, h, vx, vh;
  std::size_t t = 0;

  static ChainState at(Tensor x, Tensor h);
};

// Chains advanced in lockstep, one row per chain.
struct ChainBatch {
  Tensor x, h, vx, vh;
  std::size_t t = 0;

  static ChainBatch at(Tensor x, Tensor h);
  static ChainBatch from_states(std::span<const ChainState> states);
  std::size_t size() const { return x.rows(); }
  ChainState chain(std::size_t i) const;
  void set_chain(std::size_t i, const ChainState& s);
  ChainBatch slice(std::size_t begin, std::size_t end) const;
  void assign_slice(std::size_t begin, const ChainBatch& part);
};

// Gradient source for a revision. Rows of x and h are chains; row i draws
// any randomness from rngs[i] only.
class SamplerTarget {
 public:
  virtual ~SamplerTarget() = default;

  virtual std::size_t obs_dim() const = 0;
  virtual std::size_t latent_dim() const = 0;
  virtual bool exact() const = 0;
  // False when the latent is held fixed (class-conditional x revision).
  virtual bool moves_latent() const { return true; }

  // Delta(z) for revision step `step` (1-based) with step size `delta`.
  virtual void joint_gradient(const Tensor& x, const Tensor& h, std::size_t step, double delta,
                              std::span<Rng> rngs, Tensor& grad_x, Tensor& grad_h) const = 0;
  // d/dx log p(x) and d/dh log q(h, x): the two interleaved coopnet phases.
  virtual void potential_gradient(const Tensor& x, Tensor& grad_x) const = 0;
  virtual void latent_gradient(const Tensor& x, const Tensor& h, Tensor& grad_h) const = 0;

  // Replaces row `row` with a fresh proposal. Returns false if unsupported.
  virtual bool reset_chain(std::size_t /*row*/, ChainBatch& /*batch*/, Rng& /*rng*/) const { return false; }
};

inline constexpr double kDivergenceBound = 1e6;

struct RevisionStats {
  std::size_t resets = 0;
  RevisionStats& operator+=(const RevisionStats& o) {
    resets += o.resets;
    return *this;
  }
};

// Runs cfg.steps revision steps on every chain. Diverged chains are handed
// to target.reset_chain; if that fails a NumericalError names the step.
RevisionStats revise(const SamplerConfig& cfg, const SamplerTarget& target, ChainBatch& chains,
                     std::span<Rng> rngs);
ChainState revise(const SamplerConfig& cfg, const SamplerTarget& target, ChainState state, Rng& rng);

// ---- NRF targets ----------------------------------------------------------

// p(x) q(h | x) for a potential and a generator, using the stochastic
// gradient with an inner-LD draw h*. At step 1, h* = h.
class NrfTarget final : public SamplerTarget {
 public:
  NrfTarget(const PotentialNet& pot, const GeneratorNet& gen, std::size_t inner_steps = 1,
            std::optional<double> delta_star = std::nullopt);

  std::size_t obs_dim() const override { return gen_->output_dim(); }
  std::size_t latent_dim() const override { return gen_->input_dim(); }
  bool exact() const override { return false; }
  void joint_gradient(const Tensor& x, const Tensor& h, std::size_t step, double delta, std::span<Rng> rngs,
                      Tensor& grad_x, Tensor& grad_h) const override;
  void potential_gradient(const Tensor& x, Tensor& grad_x) const override;
  void latent_gradient(const Tensor& x, const Tensor& h, Tensor& grad_h) const override;
  bool reset_chain(std::size_t row, ChainBatch& batch, Rng& rng) const override;

 private:
  BoundPtr pot_, gen_;
  std::size_t num_outputs_;
  double sigma_;
  std::size_t inner_steps_;
  std::optional<double> delta_star_;
};

// p(x | y) for a fixed class head; x moves, h stays.
class ClassConditionalTarget final : public SamplerTarget {
 public:
  ClassConditionalTarget(const PotentialNet& pot, std::size_t latent_dim, std::vector<std::size_t> labels);

  std::size_t obs_dim() const override { return pot_->input_dim(); }
  std::size_t latent_dim() const override { return latent_dim_; }
  bool exact() const override { return true; }
  bool moves_latent() const override { return false; }
  void joint_gradient(const Tensor& x, const Tensor& h, std::size_t step, double delta, std::span<Rng> rngs,
                      Tensor& grad_x, Tensor& grad_h) const override;
  void potential_gradient(const Tensor& x, Tensor& grad_x) const override;
  void latent_gradient(const Tensor& x, const Tensor& h, Tensor& grad_h) const override;

 private:
  BoundPtr pot_;
  std::size_t num_outputs_;
  std::size_t latent_dim_;
  std::vector<std::size_t> labels_;
};

// ---- Gaussian benchmark target --------------------------------------------

// pi(x, h) = p_x(x) q(h | x). Exact mode uses the closed-form gradient; the
// stochastic mode mirrors NrfTarget with Gaussian p_x and q_joint.
class GaussianBenchTarget final : public SamplerTarget {
 public:
  GaussianBenchTarget(const GaussianJointBenchmark& bench, bool exact, std::size_t inner_steps = 1,
                      std::optional<double> delta_star = std::nullopt);

  std::size_t obs_dim() const override { return bench_->dim(); }
  std::size_t latent_dim() const override { return bench_->dim(); }
  bool exact() const override { return exact_; }
  void joint_gradient(const Tensor& x, const Tensor& h, std::size_t step, double delta, std::span<Rng> rngs,
                      Tensor& grad_x, Tensor& grad_h) const override;
  void potential_gradient(const Tensor& x, Tensor& grad_x) const override;
  void latent_gradient(const Tensor& x, const Tensor& h, Tensor& grad_h) const override;
  bool reset_chain(std::size_t row, ChainBatch& batch, Rng& rng) const override;

 private:
  const GaussianJointBenchmark* bench_;
  bool exact_;
  std::size_t inner_steps_;
  std::optional<double> delta_star_;
};

// ---- single-chain operations ----------------------------------------------

// h* = h + delta* d/dh log q(h, x) + sqrt(2 delta*) eta, `steps` times.
Tensor inner_ld_refresh(const GeneratorNet& gen, const Tensor& x, const Tensor& h, double delta_star, Rng& rng,
                        std::size_t steps = 1);

// Delta(z): x-part d/dx [u(x) + log q(h, x) - log q(h*, x)], h-part d/dh log q(h, x).
JointGrad stochastic_gradient(const PotentialNet& pot, const GeneratorNet& gen, const Tensor& x, const Tensor& h,
                              const Tensor& h_star);

// Batched form used by NrfTarget; h_star == nullptr means h* = h.
void stochastic_gradient_batch(const BoundPtr& pot, std::size_t num_outputs, const BoundPtr& gen, double sigma,
                               const Tensor& x, const Tensor& h, const Tensor* h_star, Tensor& grad_x,
                               Tensor& grad_h);

ChainState coopnet_revise(const PotentialNet& pot, const GeneratorNet& gen, ChainState state, std::size_t lx,
                          std::size_t lh, double delta, Rng& rng);

// Ancestral proposal followed by cfg.steps revision steps.
LatentSample sample_model(const PotentialNet& pot, const GeneratorNet& gen, const SamplerConfig& cfg, Rng& rng);

// Unconditional proposal, then x-revision under head `label` (argmax of the
// classifier when absent). `used_label` receives the head that was used.
Tensor conditional_revise(const PotentialNet& pot, const GeneratorNet& gen, std::optional<std::size_t> label,
                          const SamplerConfig& cfg, Rng& rng, std::size_t* used_label = nullptr);

// Noise-free decodes of (1 - t) h1 + t h2 for t = i / (n - 1).
std::vector<Tensor> interpolate_latent(const GeneratorNet& gen, const Tensor& h1, const Tensor& h2, std::size_t n);

// Ancestral draws for every row; row i uses rngs[i] (h first, then the noise).
ChainBatch ancestral_batch(const GeneratorNet& gen, std::span<Rng> rngs);

}  // namespace nrf
