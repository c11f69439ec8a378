#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "nrf/models.hpp"
#include "nrf/rng.hpp"
#include "nrf/samplers.hpp"

namespace nrf {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.5;
  double beta2 = 0.9;
  double eps = 1e-8;
};

struct AdamState {
  std::map<std::string, Tensor> m, v;
  std::size_t step = 0;
};

// Bias-corrected Adam, descending on `grads`. Buffers (batch-norm running
// statistics) are never touched; parameters without a gradient are skipped.
void adam_step(AdamState& state, ParamSet& params, const ParamSet& grads, const AdamConfig& cfg);

struct TrainConfig {
  std::size_t batch_size = 100;
  std::size_t labeled_batch_size = 100;
  std::size_t iterations = 1000;
  AdamConfig potential_opt;
  AdamConfig generator_opt;
  SamplerConfig sampler;
  double alpha_d = 0.0;
  double alpha_c = 0.0;
  double alpha_p = 0.0;
  std::uint64_t seed = 1;
  std::size_t metric_every = 200;

  void validate() const;
};

struct TrainState {
  PotentialNet pot;
  GeneratorNet gen;
  AdamState pot_opt, gen_opt;
  std::size_t iteration = 0;
};

struct UpdateStats {
  double mean_data_potential = 0.0;
  double mean_model_potential = 0.0;
  double loss_c = 0.0;
  double loss_p = 0.0;
  std::size_t resets = 0;
};

// Mean entropy of the classifier over the rows of X and its theta-gradient.
struct LossGrad {
  double value = 0.0;
  ParamSet grad;
};
LossGrad confidence_loss(const PotentialNet& pot, const Tensor& X);
// Mean of u(x)^2 over the rows of X and its theta-gradient.
LossGrad potential_control_loss(const PotentialNet& pot, const Tensor& X);

// Ascent direction for theta:
//   mean grad u(data) - mean grad u(model) + alpha_d mean grad log p(y|x)
//   - alpha_c grad L_c(data) - alpha_p grad L_p(data).
// The regularizers are skipped when their weight is zero; L_c needs K >= 2.
struct PotentialObjective {
  ParamSet grad;
  UpdateStats stats;
};
PotentialObjective potential_objective(const PotentialNet& pot, const Tensor& data, const Tensor& model_x,
                                       const std::vector<LabeledExample>& labeled, const TrainConfig& cfg);

// Draws one revised model sample per row of `data`, then takes one Adam step
// for each network. Chain randomness comes from streams keyed by rng.
UpdateStats unsup_update(TrainState& state, const Tensor& data, const TrainConfig& cfg, Rng& rng);
UpdateStats semi_update(TrainState& state, const Tensor& unlabeled, const std::vector<LabeledExample>& labeled,
                        const TrainConfig& cfg, Rng& rng);

struct TrainData {
  Tensor unlabeled;                     // N x d_x
  std::vector<LabeledExample> labeled;  // empty for unsupervised runs
};

struct MetricRow {
  std::size_t iteration = 0;
  UpdateStats stats;
};

inline constexpr const char* kMetricHeader = "iteration,mean_data_potential,mean_model_potential,loss_c,loss_p,resets";
void write_metric_row(std::ostream& out, const MetricRow& row);

using CheckpointSink = std::function<void(const TrainState&)>;
// Called after every iteration; lets a caller evaluate intermediate models.
using ProgressHook = std::function<void(const TrainState&)>;

// Runs cfg.iterations updates (semi-supervised when data.labeled is non-empty).
// A metric row is logged every cfg.metric_every iterations and after the last
// one; resets are counted since the previous row. `sink` receives the final
// state.
struct TrainResult {
  TrainState state;
  std::vector<MetricRow> metrics;
};
TrainResult train(const TrainConfig& cfg, TrainState init, const TrainData& data, const CheckpointSink& sink = {},
                  std::ostream* metric_log = nullptr, const ProgressHook& progress = {});

// ---- network presets ------------------------------------------------------

// 2-D GMM nets: potential 100-100 leaky-ReLU with weight norm, generator
// 50-50 ReLU with batch norm and a linear output.
NetworkSpec gmm_potential_spec(std::size_t num_outputs = 1);
NetworkSpec gmm_generator_spec(std::size_t latent_dim = 2);
// Anomaly nets: tanh MLPs 60-30-10 (potential) and 10-30-60 (generator).
NetworkSpec anomaly_potential_spec(std::size_t obs_dim);
NetworkSpec anomaly_generator_spec(std::size_t latent_dim, std::size_t obs_dim);

TrainState init_state(const NetworkSpec& pot_spec, std::size_t num_outputs, const NetworkSpec& gen_spec,
                      double sigma, Rng& rng);

}  // namespace nrf
