#include "nrf/network.hpp"

#include <cmath>

#include "nrf/error.hpp"

namespace nrf {

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::dense: return "dense";
    case LayerKind::activation: return "activation";
    case LayerKind::batch_norm: return "batch_norm";
  }
  return "?";
}

std::string_view to_string(Activation act) {
  switch (act) {
    case Activation::linear: return "linear";
    case Activation::relu: return "relu";
    case Activation::leaky_relu: return "leaky_relu";
    case Activation::tanh: return "tanh";
    case Activation::softplus: return "softplus";
    case Activation::sigmoid: return "sigmoid";
  }
  return "?";
}

LayerKind parse_layer_kind(std::string_view name) {
  for (auto k : {LayerKind::dense, LayerKind::activation, LayerKind::batch_norm})
    if (to_string(k) == name) return k;
  throw ConfigError("unknown layer kind '" + std::string(name) + "'");
}

Activation parse_activation(std::string_view name) {
  for (auto a : {Activation::linear, Activation::relu, Activation::leaky_relu, Activation::tanh,
                 Activation::softplus, Activation::sigmoid})
    if (to_string(a) == name) return a;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

std::size_t NetworkSpec::output_dim() const {
  return layers.empty() ? input_dim : layers.back().width;
}

void NetworkSpec::validate() const {
  if (input_dim == 0) throw ShapeError("network input width must be positive");
  std::size_t width = input_dim;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (l.width == 0) throw ShapeError("layer " + std::to_string(i) + " has zero width");
    if (l.kind != LayerKind::dense && l.width != width)
      throw ShapeError("layer " + std::to_string(i) + " width " + std::to_string(l.width) +
                       " incompatible with incoming width " + std::to_string(width));
    width = l.width;
  }
}

NetworkSpec& NetworkSpec::dense(std::size_t width, bool weight_norm) {
  layers.push_back({LayerKind::dense, width, Activation::linear, 0.2, weight_norm});
  return *this;
}

NetworkSpec& NetworkSpec::act(Activation a, double slope) {
  layers.push_back({LayerKind::activation, output_dim(), a, slope, false});
  return *this;
}

NetworkSpec& NetworkSpec::batch_norm() {
  layers.push_back({LayerKind::batch_norm, output_dim(), Activation::linear, 0.2, false});
  return *this;
}

const Tensor& ParamSet::get(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ShapeError("missing parameter '" + name + "'");
  return it->second;
}

Tensor& ParamSet::get(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ShapeError("missing parameter '" + name + "'");
  return it->second;
}

std::size_t ParamSet::num_scalars() const {
  std::size_t n = 0;
  for (const auto& [name, t] : entries_) n += t.size();
  return n;
}

ParamSet ParamSet::zeros_like() const {
  ParamSet out;
  for (const auto& [name, t] : entries_) out.set(name, Tensor::zeros_like(t));
  return out;
}

void ParamSet::axpy(double a, const ParamSet& other) {
  for (const auto& [name, t] : other.entries_) {
    auto it = entries_.find(name);
    if (it == entries_.end()) {
      Tensor z = Tensor::zeros_like(t);
      z.axpy(a, t);
      entries_.emplace(name, std::move(z));
    } else {
      it->second.axpy(a, t);
    }
  }
}

void ParamSet::scale(double s) {
  for (auto& [name, t] : entries_) t *= s;
}

bool is_buffer(std::string_view name) {
  return name.ends_with(".running_mean") || name.ends_with(".running_var");
}

std::string param_name(std::size_t layer, std::string_view field) {
  return "layer" + std::to_string(layer) + "." + std::string(field);
}

namespace {

struct Expected {
  std::string name;
  std::vector<std::size_t> shape;
};

std::vector<Expected> expected_params(const NetworkSpec& spec) {
  spec.validate();
  std::vector<Expected> out;
  std::size_t width = spec.input_dim;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& l = spec.layers[i];
    if (l.kind == LayerKind::dense) {
      if (l.weight_norm) {
        out.push_back({param_name(i, "v"), {width, l.width}});
        out.push_back({param_name(i, "g"), {l.width}});
      } else {
        out.push_back({param_name(i, "w"), {width, l.width}});
      }
      out.push_back({param_name(i, "b"), {l.width}});
    } else if (l.kind == LayerKind::batch_norm) {
      out.push_back({param_name(i, "gamma"), {l.width}});
      out.push_back({param_name(i, "beta"), {l.width}});
      out.push_back({param_name(i, "running_mean"), {l.width}});
      out.push_back({param_name(i, "running_var"), {l.width}});
    }
    width = l.width;
  }
  return out;
}

}  // namespace

ParamSet init_params(const NetworkSpec& spec, Rng& rng) {
  ParamSet p;
  for (const auto& e : expected_params(spec)) {
    Tensor t(e.shape);
    if (e.name.ends_with(".v") || e.name.ends_with(".w")) {
      const double sd = 1.0 / std::sqrt(static_cast<double>(e.shape[0]));
      for (auto& v : t.values()) v = sd * rng.normal();
    } else if (e.name.ends_with(".g") || e.name.ends_with(".gamma") ||
               e.name.ends_with(".running_var")) {
      t.fill(1.0);
    }
    p.set(e.name, std::move(t));
  }
  return p;
}

void check_params(const NetworkSpec& spec, const ParamSet& params) {
  for (const auto& e : expected_params(spec)) {
    const Tensor& t = params.get(e.name);
    if (t.shape() != e.shape)
      throw ShapeError("parameter '" + e.name + "' has shape " + t.shape_string());
  }
}

}  // namespace nrf
