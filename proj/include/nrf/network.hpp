#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "nrf/rng.hpp"
#include "nrf/tensor.hpp"

namespace nrf {

enum class LayerKind { dense, activation, batch_norm };
enum class Activation { linear, relu, leaky_relu, tanh, softplus, sigmoid };

std::string_view to_string(LayerKind kind);
std::string_view to_string(Activation act);
LayerKind parse_layer_kind(std::string_view name);
Activation parse_activation(std::string_view name);

struct LayerSpec {
  LayerKind kind = LayerKind::dense;
  std::size_t width = 0;
  Activation activation = Activation::linear;
  double slope = 0.2;  // leaky_relu only
  bool weight_norm = false;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

// Feed-forward chain. `width` of activation and batch_norm layers must equal
// the width of the layer before them.
struct NetworkSpec {
  std::size_t input_dim = 0;
  std::vector<LayerSpec> layers;

  std::size_t output_dim() const;
  void validate() const;

  NetworkSpec& dense(std::size_t width, bool weight_norm = false);
  NetworkSpec& act(Activation a, double slope = 0.2);
  NetworkSpec& batch_norm();

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

// Named tensors of one network. Running batch-norm statistics live here too
// but are buffers: they never receive gradients.
class ParamSet {
 public:
  using Map = std::map<std::string, Tensor>;

  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  const Tensor& get(const std::string& name) const;
  Tensor& get(const std::string& name);
  void set(const std::string& name, Tensor value) { entries_[name] = std::move(value); }

  const Map& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t num_scalars() const;

  // Same names and shapes, all zeros.
  ParamSet zeros_like() const;
  void axpy(double a, const ParamSet& other);
  void scale(double s);
  ParamSet& operator+=(const ParamSet& other) {
    axpy(1.0, other);
    return *this;
  }

  friend bool operator==(const ParamSet&, const ParamSet&) = default;

 private:
  Map entries_;
};

bool is_buffer(std::string_view name);

std::string param_name(std::size_t layer, std::string_view field);

// g=1, b=0, v ~ N(0, 1/fan_in) for weight-normed layers; raw W ~ N(0, 1/fan_in);
// batch-norm gamma=1, beta=0, running mean 0, running var 1.
ParamSet init_params(const NetworkSpec& spec, Rng& rng);

// Throws ShapeError if a parameter is missing or mis-shaped.
void check_params(const NetworkSpec& spec, const ParamSet& params);

}  // namespace nrf
