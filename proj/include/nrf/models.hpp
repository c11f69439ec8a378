#pragma once

#include <filesystem>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "nrf/autodiff.hpp"
#include "nrf/network.hpp"
#include "nrf/rng.hpp"
#include "nrf/tensor.hpp"

namespace nrf {

using BoundPtr = std::shared_ptr<const BoundNetwork>;

// Potential u(x). With num_outputs K > 1 the network emits one head per class
// and u(x) is the logsumexp of the heads.
struct PotentialNet {
  NetworkSpec spec;
  ParamSet params;
  std::size_t num_outputs = 1;

  std::size_t obs_dim() const { return spec.input_dim; }
  void validate() const;
  BoundPtr bind() const { return std::make_shared<const BoundNetwork>(spec, params); }
};

// x = g(h) + sigma * eps with h ~ N(0, I).
struct GeneratorNet {
  NetworkSpec spec;
  ParamSet params;
  double sigma = 1.0;

  std::size_t latent_dim() const { return spec.input_dim; }
  std::size_t obs_dim() const { return spec.output_dim(); }
  void validate() const;
  BoundPtr bind() const { return std::make_shared<const BoundNetwork>(spec, params); }
};

// Class labels are 0-based inside the library.
struct LabeledExample {
  Tensor x;
  std::size_t label = 0;
};

// ---- single-observation accessors -------------------------------------

double potential(const PotentialNet& net, const Tensor& x);
Tensor class_potentials(const PotentialNet& net, const Tensor& x);
Tensor classifier_probs(const PotentialNet& net, const Tensor& x);
Tensor grad_potential_x(const PotentialNet& net, const Tensor& x);

struct LatentSample {
  Tensor h;
  Tensor x;
};
LatentSample ancestral_sample(const GeneratorNet& gen, Rng& rng);

Tensor decode(const GeneratorNet& gen, const Tensor& h);
double log_q_joint(const GeneratorNet& gen, const Tensor& x, const Tensor& h);

struct JointGrad {
  Tensor x;
  Tensor h;
};
JointGrad grad_log_q_joint(const GeneratorNet& gen, const Tensor& x, const Tensor& h);

// Parameter gradient of sum_i log q(x_i, h_i) with batch norm in train mode.
// Rank-1 x/h are a batch of one. When `graph_out` is given it receives the
// train-mode graph, e.g. for commit_batch_stats.
ParamSet grad_log_q_joint_params(const GeneratorNet& gen, const Tensor& x, const Tensor& h,
                                 Graph* graph_out = nullptr);

// ---- batched kernels (rows are chains / examples) ---------------------

struct PotentialBatch {
  std::vector<double> value;  // marginal u per row
  Tensor heads;               // rows x K
  Tensor grad_x;              // rows x d_x, empty unless requested
};

// Evaluates u on every row of X. Rows are independent (no batch norm in
// potential networks is assumed; eval mode is used regardless).
PotentialBatch eval_potential(const BoundPtr& net, std::size_t num_outputs, const Tensor& X,
                              bool want_grad_x);
// Same, but the input gradient is taken for a single fixed head per row.
PotentialBatch eval_class_potential(const BoundPtr& net, std::size_t num_outputs,
                                    const Tensor& X, std::span<const std::size_t> labels);

struct GeneratorBatch {
  Tensor mean;         // g(H), rows x d_x
  Tensor residual;     // (X - g(H)) / sigma^2
  Tensor grad_h;       // J^T residual - H
  std::vector<double> log_q;
};

// Eval-mode evaluation of log q(x, h) and its (x, h) gradients per row.
GeneratorBatch eval_generator(const BoundPtr& net, double sigma, const Tensor& X, const Tensor& H,
                              bool want_grad_h);
Tensor decode_batch(const BoundPtr& net, const Tensor& H);

// Sum over rows of seed_row . heads(x_row), differentiated w.r.t. theta.
ParamSet potential_head_param_grad(const PotentialNet& net, const Tensor& X, const Tensor& head_seed);
// Sum over rows of w_i * grad_theta u(x_i) for the marginal potential.
ParamSet potential_param_grad(const PotentialNet& net, const Tensor& X, std::span<const double> weights);

double gaussian_log_density_isotropic(std::span<const double> x, std::span<const double> mean, double sd);

// ---- checkpoints --------------------------------------------------------

void save_checkpoint(const PotentialNet& net, const std::filesystem::path& path);
void save_checkpoint(const GeneratorNet& net, const std::filesystem::path& path);
PotentialNet load_potential(const std::filesystem::path& path);
GeneratorNet load_generator(const std::filesystem::path& path);
std::string checkpoint_json(const PotentialNet& net);
std::string checkpoint_json(const GeneratorNet& net);
PotentialNet potential_from_json(const std::string& text);
GeneratorNet generator_from_json(const std::string& text);

}  // namespace nrf
