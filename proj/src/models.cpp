#include "nrf/models.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "nrf/error.hpp"

namespace nrf {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;  // log(2 pi)

void require_dim(const Tensor& t, std::size_t dim, const char* what) {
  if (t.empty() || t.cols() != dim)
    throw ShapeError(std::string(what) + ": expected width " + std::to_string(dim) + ", got shape " +
                     t.shape_string());
}

void require_positive_sigma(const GeneratorNet& gen) {
  if (!(gen.sigma > 0.0) || !std::isfinite(gen.sigma))
    throw ShapeError("generator density needs sigma > 0");
}

}  // namespace

void PotentialNet::validate() const {
  spec.validate();
  if (num_outputs == 0) throw ShapeError("potential needs at least one output");
  if (spec.output_dim() != num_outputs)
    throw ShapeError("potential network emits " + std::to_string(spec.output_dim()) + " values, expected " +
                     std::to_string(num_outputs));
  for (const auto& l : spec.layers)
    if (l.kind == LayerKind::batch_norm)
      throw ShapeError("potential networks may not use batch norm (rows must stay independent)");
  check_params(spec, params);
}

void GeneratorNet::validate() const {
  spec.validate();
  if (!std::isfinite(sigma) || sigma < 0.0) throw ShapeError("generator sigma must be finite and >= 0");
  check_params(spec, params);
}

// ---- batched kernels ----------------------------------------------------

PotentialBatch eval_potential(const BoundPtr& net, std::size_t num_outputs, const Tensor& X,
                              bool want_grad_x) {
  require_dim(X, net->input_dim(), "potential");
  Graph g = forward(net, X.as_matrix(), Mode::eval);
  PotentialBatch out;
  out.heads = g.output_matrix();
  const std::size_t n = out.heads.rows();
  out.value.resize(n);
  Tensor seed({n, num_outputs});
  for (std::size_t i = 0; i < n; ++i) {
    auto row = out.heads.row(i);
    if (num_outputs == 1) {
      out.value[i] = row[0];
      seed.at(i, 0) = 1.0;
    } else {
      out.value[i] = logsumexp(row);
      auto p = softmax(row);
      seed.set_row(i, p);
    }
  }
  if (want_grad_x) out.grad_x = backward(g, seed, GradTarget::input_only).input;
  return out;
}

PotentialBatch eval_class_potential(const BoundPtr& net, std::size_t num_outputs, const Tensor& X,
                                    std::span<const std::size_t> labels) {
  require_dim(X, net->input_dim(), "class potential");
  Graph g = forward(net, X.as_matrix(), Mode::eval);
  PotentialBatch out;
  out.heads = g.output_matrix();
  const std::size_t n = out.heads.rows();
  if (labels.size() != n) throw ShapeError("class potential: one label per row required");
  out.value.resize(n);
  Tensor seed({n, num_outputs});
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] >= num_outputs) throw ShapeError("class label out of range");
    out.value[i] = out.heads.at(i, labels[i]);
    seed.at(i, labels[i]) = 1.0;
  }
  out.grad_x = backward(g, seed, GradTarget::input_only).input;
  return out;
}

GeneratorBatch eval_generator(const BoundPtr& net, double sigma, const Tensor& X, const Tensor& H,
                              bool want_grad_h) {
  require_dim(H, net->input_dim(), "generator latent");
  require_dim(X, net->output_dim(), "generator observation");
  if (X.rows() != H.rows()) throw ShapeError("generator: x and h batch sizes differ");
  if (!(sigma > 0.0)) throw ShapeError("generator density needs sigma > 0");
  const Tensor Hm = H.as_matrix();
  Graph g = forward(net, Hm, Mode::eval);
  GeneratorBatch out;
  out.mean = g.output_matrix();
  const std::size_t n = Hm.rows(), dx = out.mean.cols(), dh = Hm.cols();
  const double inv_var = 1.0 / (sigma * sigma);
  const double log_norm = -0.5 * static_cast<double>(dx) * (kLog2Pi + 2.0 * std::log(sigma)) -
                          0.5 * static_cast<double>(dh) * kLog2Pi;
  out.residual = Tensor({n, dx});
  out.log_q.resize(n);
  const Tensor Xm = X.as_matrix();
  for (std::size_t i = 0; i < n; ++i) {
    double sq = 0.0, hh = 0.0;
    for (std::size_t j = 0; j < dx; ++j) {
      const double r = Xm.at(i, j) - out.mean.at(i, j);
      sq += r * r;
      out.residual.at(i, j) = r * inv_var;
    }
    for (std::size_t j = 0; j < dh; ++j) hh += Hm.at(i, j) * Hm.at(i, j);
    out.log_q[i] = -0.5 * sq * inv_var - 0.5 * hh + log_norm;
  }
  if (want_grad_h) {
    out.grad_h = backward(g, out.residual, GradTarget::input_only).input;
    out.grad_h -= Hm;
  }
  return out;
}

Tensor decode_batch(const BoundPtr& net, const Tensor& H) {
  require_dim(H, net->input_dim(), "decode");
  return forward(net, H.as_matrix(), Mode::eval).output_matrix();
}

ParamSet potential_head_param_grad(const PotentialNet& net, const Tensor& X, const Tensor& head_seed) {
  Graph g = forward(net.spec, net.params, X.as_matrix(), Mode::eval);
  return backward(g, head_seed, GradTarget::params_only).params;
}

ParamSet potential_param_grad(const PotentialNet& net, const Tensor& X, std::span<const double> weights) {
  Graph g = forward(net.spec, net.params, X.as_matrix(), Mode::eval);
  const Tensor& heads = g.output_matrix();
  const std::size_t n = heads.rows();
  if (weights.size() != n) throw ShapeError("potential_param_grad: one weight per row required");
  Tensor seed({n, net.num_outputs});
  for (std::size_t i = 0; i < n; ++i) {
    if (net.num_outputs == 1) {
      seed.at(i, 0) = weights[i];
    } else {
      auto p = softmax(heads.row(i));
      for (std::size_t k = 0; k < p.size(); ++k) seed.at(i, k) = weights[i] * p[k];
    }
  }
  return backward(g, seed, GradTarget::params_only).params;
}

double gaussian_log_density_isotropic(std::span<const double> x, std::span<const double> mean, double sd) {
  if (x.size() != mean.size()) throw ShapeError("gaussian density: dimension mismatch");
  double sq = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) sq += (x[i] - mean[i]) * (x[i] - mean[i]);
  const double d = static_cast<double>(x.size());
  return -0.5 * sq / (sd * sd) - d * std::log(sd) - 0.5 * d * kLog2Pi;
}

// ---- single-observation accessors -------------------------------------

double potential(const PotentialNet& net, const Tensor& x) {
  require_dim(x, net.obs_dim(), "potential");
  return eval_potential(net.bind(), net.num_outputs, x, false).value.front();
}

Tensor class_potentials(const PotentialNet& net, const Tensor& x) {
  if (net.num_outputs < 2) throw ShapeError("class_potentials needs K >= 2");
  require_dim(x, net.obs_dim(), "class_potentials");
  return eval_potential(net.bind(), net.num_outputs, x, false).heads.row_tensor(0);
}

Tensor classifier_probs(const PotentialNet& net, const Tensor& x) {
  Tensor heads = class_potentials(net, x);
  return Tensor::vector(softmax(heads.values()));
}

Tensor grad_potential_x(const PotentialNet& net, const Tensor& x) {
  require_dim(x, net.obs_dim(), "grad_potential_x");
  return eval_potential(net.bind(), net.num_outputs, x, true).grad_x.row_tensor(0);
}

LatentSample ancestral_sample(const GeneratorNet& gen, Rng& rng) {
  LatentSample s;
  s.h = Tensor({gen.latent_dim()});
  rng.fill_normal(s.h.values());
  s.x = decode_batch(gen.bind(), s.h).row_tensor(0);
  for (auto& v : s.x.values()) v += gen.sigma * rng.normal();
  if (!s.x.all_finite()) throw NumericalError("ancestral sample is not finite");
  return s;
}

Tensor decode(const GeneratorNet& gen, const Tensor& h) {
  Tensor out = decode_batch(gen.bind(), h);
  return h.rank() == 1 ? out.row_tensor(0) : out;
}

double log_q_joint(const GeneratorNet& gen, const Tensor& x, const Tensor& h) {
  require_positive_sigma(gen);
  return eval_generator(gen.bind(), gen.sigma, x, h, false).log_q.front();
}

JointGrad grad_log_q_joint(const GeneratorNet& gen, const Tensor& x, const Tensor& h) {
  require_positive_sigma(gen);
  auto b = eval_generator(gen.bind(), gen.sigma, x, h, true);
  // grad_x = -(x - g(h)) / sigma^2
  b.residual *= -1.0;
  if (x.rank() == 1) return {b.residual.row_tensor(0), b.grad_h.row_tensor(0)};
  return {std::move(b.residual), std::move(b.grad_h)};
}

ParamSet grad_log_q_joint_params(const GeneratorNet& gen, const Tensor& x, const Tensor& h,
                                 Graph* graph_out) {
  require_positive_sigma(gen);
  require_dim(h, gen.latent_dim(), "generator latent");
  require_dim(x, gen.obs_dim(), "generator observation");
  const Tensor Xm = x.as_matrix();
  Graph g = forward(gen.spec, gen.params, h.as_matrix(), Mode::train);
  if (Xm.rows() != g.batch()) throw ShapeError("generator: x and h batch sizes differ");
  Tensor seed = Xm;
  seed -= g.output_matrix();
  seed *= 1.0 / (gen.sigma * gen.sigma);
  ParamSet grads = backward(g, seed, GradTarget::params_only).params;
  if (graph_out) *graph_out = std::move(g);
  return grads;
}

// ---- checkpoints --------------------------------------------------------

namespace {

using nlohmann::json;

json spec_to_json(const NetworkSpec& spec) {
  json layers = json::array();
  for (const auto& l : spec.layers) {
    json j{{"kind", to_string(l.kind)}, {"width", l.width}};
    if (l.kind == LayerKind::dense) j["weight_norm"] = l.weight_norm;
    if (l.kind == LayerKind::activation) {
      j["activation"] = to_string(l.activation);
      if (l.activation == Activation::leaky_relu) j["slope"] = l.slope;
    }
    layers.push_back(std::move(j));
  }
  return {{"input_dim", spec.input_dim}, {"layers", std::move(layers)}};
}

NetworkSpec spec_from_json(const json& j) {
  NetworkSpec spec;
  spec.input_dim = j.at("input_dim").get<std::size_t>();
  for (const auto& lj : j.at("layers")) {
    LayerSpec l;
    l.kind = parse_layer_kind(lj.at("kind").get<std::string>());
    l.width = lj.at("width").get<std::size_t>();
    if (l.kind == LayerKind::dense) l.weight_norm = lj.value("weight_norm", false);
    if (l.kind == LayerKind::activation) {
      l.activation = parse_activation(lj.at("activation").get<std::string>());
      l.slope = lj.value("slope", 0.2);
    }
    spec.layers.push_back(l);
  }
  spec.validate();
  return spec;
}

json params_to_json(const ParamSet& params) {
  json arr = json::array();
  for (const auto& [name, t] : params.entries())
    arr.push_back({{"name", name},
                   {"shape", t.shape()},
                   {"data", std::vector<double>(t.data(), t.data() + t.size())}});
  return arr;
}

ParamSet params_from_json(const json& arr) {
  ParamSet p;
  for (const auto& e : arr) {
    const auto name = e.at("name").get<std::string>();
    if (p.contains(name)) throw ConfigError("checkpoint repeats parameter '" + name + "'");
    p.set(name, Tensor(e.at("shape").get<std::vector<std::size_t>>(), e.at("data").get<std::vector<double>>()));
  }
  return p;
}

json parse_document(const std::string& text, const char* role) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("corrupt checkpoint: ") + e.what());
  }
  if (j.value("format", "") != "nrf-checkpoint" || j.value("role", "") != role)
    throw ConfigError(std::string("not a ") + role + " checkpoint");
  return j;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text << '\n';
  if (!out) throw ConfigError("failed writing " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

template <class F>
auto wrap_json_errors(F&& f) {
  try {
    return f();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("corrupt checkpoint: ") + e.what());
  } catch (const ShapeError& e) {
    throw ConfigError(std::string("inconsistent checkpoint: ") + e.what());
  }
}

}  // namespace

std::string checkpoint_json(const PotentialNet& net) {
  json j{{"format", "nrf-checkpoint"},
         {"version", 1},
         {"role", "potential"},
         {"network", spec_to_json(net.spec)},
         {"num_outputs", net.num_outputs},
         {"params", params_to_json(net.params)}};
  return j.dump();
}

std::string checkpoint_json(const GeneratorNet& net) {
  json j{{"format", "nrf-checkpoint"},
         {"version", 1},
         {"role", "generator"},
         {"network", spec_to_json(net.spec)},
         {"sigma", net.sigma},
         {"params", params_to_json(net.params)}};
  return j.dump();
}

PotentialNet potential_from_json(const std::string& text) {
  return wrap_json_errors([&] {
    json j = parse_document(text, "potential");
    PotentialNet net{spec_from_json(j.at("network")), params_from_json(j.at("params")),
                     j.at("num_outputs").get<std::size_t>()};
    net.validate();
    return net;
  });
}

GeneratorNet generator_from_json(const std::string& text) {
  return wrap_json_errors([&] {
    json j = parse_document(text, "generator");
    GeneratorNet net{spec_from_json(j.at("network")), params_from_json(j.at("params")),
                     j.at("sigma").get<double>()};
    net.validate();
    return net;
  });
}

void save_checkpoint(const PotentialNet& net, const std::filesystem::path& path) {
  write_text(path, checkpoint_json(net));
}
void save_checkpoint(const GeneratorNet& net, const std::filesystem::path& path) {
  write_text(path, checkpoint_json(net));
}
PotentialNet load_potential(const std::filesystem::path& path) { return potential_from_json(read_text(path)); }
GeneratorNet load_generator(const std::filesystem::path& path) { return generator_from_json(read_text(path)); }

}  // namespace nrf
