#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "nrf/network.hpp"
#include "nrf/tensor.hpp"

namespace nrf {

enum class Mode { train, eval };

inline constexpr double kBatchNormEps = 1e-5;

// Spec plus parameters resolved into effective dense weights. Building one is
// O(#params); share it across every chain that evaluates the same network.
class BoundNetwork {
 public:
  BoundNetwork(NetworkSpec spec, const ParamSet& params);

  const NetworkSpec& spec() const { return spec_; }
  std::size_t input_dim() const { return spec_.input_dim; }
  std::size_t output_dim() const { return spec_.output_dim(); }

  struct Layer {
    LayerSpec spec;
    std::size_t in = 0;
    std::size_t out = 0;
    std::vector<double> w;   // in x out, effective weight
    std::vector<double> wt;  // out x in, transpose of w
    std::vector<double> b;
    // weight norm: w[:,j] = g[j] * vhat[:,j]
    std::vector<double> vhat;
    std::vector<double> vnorm;
    std::vector<double> g;
    // batch norm
    std::vector<double> gamma, beta, running_mean, running_var;
  };

  const std::vector<Layer>& layers() const { return layers_; }

 private:
  NetworkSpec spec_;
  std::vector<Layer> layers_;
};

// One recorded evaluation. Node 0 holds the input; node i+1 the output of
// layer i. Backward reads the graph without modifying it.
class Graph {
 public:
  struct Node {
    Tensor value;
    // batch norm: normalized input and 1/sqrt(var+eps) per feature
    Tensor xhat;
    std::vector<double> inv_std;
    std::vector<double> batch_mean;
    std::vector<double> batch_var;
  };

  Graph() = default;
  Graph(std::shared_ptr<const BoundNetwork> net, Mode mode, bool rank1_input)
      : net_(std::move(net)), mode_(mode), rank1_input_(rank1_input) {}

  bool valid() const { return net_ != nullptr && !nodes_.empty(); }
  Mode mode() const { return mode_; }
  const BoundNetwork& network() const { return *net_; }
  const std::vector<Node>& nodes() const { return nodes_; }
  std::vector<Node>& mutable_nodes() { return nodes_; }
  std::size_t batch() const { return nodes_.front().value.rows(); }
  bool rank1_input() const { return rank1_input_; }

  // Output with the same rank as the input that produced it.
  Tensor output() const;
  const Tensor& output_matrix() const { return nodes_.back().value; }

 private:
  std::shared_ptr<const BoundNetwork> net_;
  Mode mode_ = Mode::eval;
  bool rank1_input_ = false;
  std::vector<Node> nodes_;
};

// Rank-1 input is a single row; rank-2 input is (batch x input_dim). Rows are
// evaluated independently except by train-mode batch norm.
Graph forward(std::shared_ptr<const BoundNetwork> net, const Tensor& input, Mode mode);
Graph forward(const NetworkSpec& spec, const ParamSet& params, const Tensor& input, Mode mode);

enum class GradTarget { params_and_input, input_only, params_only };

struct Gradients {
  ParamSet params;
  Tensor input;
};

// Gradients of sum(seed * output). Parameter gradients accumulate over rows.
Gradients backward(const Graph& graph, const Tensor& output_seed,
                   GradTarget target = GradTarget::params_and_input);

// Moves running statistics toward the batch statistics a train-mode graph saw:
// running = (1 - momentum) * running + momentum * batch (unbiased variance).
void commit_batch_stats(const Graph& graph, ParamSet& params, double momentum = 0.1);

// Central differences: (f(x + eps e_i) - f(x - eps e_i)) / (2 eps).
Tensor finite_diff(const std::function<double(const Tensor&)>& f, const Tensor& x, double eps = 1e-5);

double logsumexp(std::span<const double> v);
// Softmax of v, max-shifted.
std::vector<double> softmax(std::span<const double> v);

}  // namespace nrf
