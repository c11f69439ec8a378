#include "nrf/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "nrf/error.hpp"

namespace nrf {

BoundNetwork::BoundNetwork(NetworkSpec spec, const ParamSet& params) : spec_(std::move(spec)) {
  check_params(spec_, params);
  std::size_t width = spec_.input_dim;
  layers_.reserve(spec_.layers.size());
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    Layer L;
    L.spec = spec_.layers[i];
    L.in = width;
    L.out = L.spec.width;
    if (L.spec.kind == LayerKind::dense) {
      const auto& bias = params.get(param_name(i, "b"));
      L.b.assign(bias.data(), bias.data() + bias.size());
      if (L.spec.weight_norm) {
        const auto& v = params.get(param_name(i, "v"));
        const auto& g = params.get(param_name(i, "g"));
        L.g.assign(g.data(), g.data() + g.size());
        L.vnorm.assign(L.out, 0.0);
        L.vhat.resize(L.in * L.out);
        L.w.resize(L.in * L.out);
        for (std::size_t k = 0; k < L.in; ++k)
          for (std::size_t j = 0; j < L.out; ++j) L.vnorm[j] += v[k * L.out + j] * v[k * L.out + j];
        for (std::size_t j = 0; j < L.out; ++j) {
          L.vnorm[j] = std::sqrt(L.vnorm[j]);
          if (!(L.vnorm[j] > 0.0))
            throw NumericalError("weight-norm direction of layer " + std::to_string(i) +
                                 " unit " + std::to_string(j) + " is zero");
        }
        for (std::size_t k = 0; k < L.in; ++k)
          for (std::size_t j = 0; j < L.out; ++j) {
            const double vh = v[k * L.out + j] / L.vnorm[j];
            L.vhat[k * L.out + j] = vh;
            L.w[k * L.out + j] = L.g[j] * vh;
          }
      } else {
        const auto& w = params.get(param_name(i, "w"));
        L.w.assign(w.data(), w.data() + w.size());
      }
      L.wt.resize(L.in * L.out);
      for (std::size_t k = 0; k < L.in; ++k)
        for (std::size_t j = 0; j < L.out; ++j) L.wt[j * L.in + k] = L.w[k * L.out + j];
    } else if (L.spec.kind == LayerKind::batch_norm) {
      auto copy = [&](const char* field, std::vector<double>& dst) {
        const auto& t = params.get(param_name(i, field));
        dst.assign(t.data(), t.data() + t.size());
      };
      copy("gamma", L.gamma);
      copy("beta", L.beta);
      copy("running_mean", L.running_mean);
      copy("running_var", L.running_var);
    }
    width = L.out;
    layers_.push_back(std::move(L));
  }
}

Tensor Graph::output() const {
  const Tensor& out = nodes_.back().value;
  if (rank1_input_) return out.reshaped({out.cols()});
  return out;
}

namespace {

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) { return std::log1p(std::exp(-std::abs(x))) + std::max(x, 0.0); }

void dense_forward(const BoundNetwork::Layer& L, const Tensor& x, Tensor& y) {
  const std::size_t n = x.rows(), in = L.in, out = L.out;
  const double* __restrict w = L.w.data();
  for (std::size_t i = 0; i < n; ++i) {
    const double* __restrict xi = x.data() + i * in;
    double* __restrict yi = y.data() + i * out;
    std::copy(L.b.begin(), L.b.end(), yi);
    for (std::size_t k = 0; k < in; ++k) {
      const double a = xi[k];
      if (a == 0.0) continue;
      const double* __restrict wk = w + k * out;
      for (std::size_t j = 0; j < out; ++j) yi[j] += a * wk[j];
    }
  }
}

void activation_forward(const LayerSpec& s, const Tensor& x, Tensor& y) {
  const double* xs = x.data();
  double* ys = y.data();
  const std::size_t n = x.size();
  switch (s.activation) {
    case Activation::linear: std::copy(xs, xs + n, ys); break;
    case Activation::relu:
      for (std::size_t i = 0; i < n; ++i) ys[i] = xs[i] > 0.0 ? xs[i] : 0.0;
      break;
    case Activation::leaky_relu:
      for (std::size_t i = 0; i < n; ++i) ys[i] = xs[i] > 0.0 ? xs[i] : s.slope * xs[i];
      break;
    case Activation::tanh:
      for (std::size_t i = 0; i < n; ++i) ys[i] = std::tanh(xs[i]);
      break;
    case Activation::softplus:
      for (std::size_t i = 0; i < n; ++i) ys[i] = softplus(xs[i]);
      break;
    case Activation::sigmoid:
      for (std::size_t i = 0; i < n; ++i) ys[i] = sigmoid(xs[i]);
      break;
  }
}

void batch_norm_forward(const BoundNetwork::Layer& L, Mode mode, const Tensor& x, Graph::Node& node) {
  const std::size_t n = x.rows(), d = L.out;
  node.xhat = Tensor({n, d});
  node.inv_std.assign(d, 0.0);
  std::vector<double> mean(d, 0.0), var(d, 0.0);
  if (mode == Mode::train) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) mean[j] += x.at(i, j);
    for (auto& m : mean) m /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        const double c = x.at(i, j) - mean[j];
        var[j] += c * c;
      }
    for (auto& v : var) v /= static_cast<double>(n);
    node.batch_mean = mean;
    node.batch_var = var;
  } else {
    mean = L.running_mean;
    var = L.running_var;
  }
  for (std::size_t j = 0; j < d; ++j) node.inv_std[j] = 1.0 / std::sqrt(var[j] + kBatchNormEps);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      const double xh = (x.at(i, j) - mean[j]) * node.inv_std[j];
      node.xhat.at(i, j) = xh;
      node.value.at(i, j) = L.gamma[j] * xh + L.beta[j];
    }
}

}  // namespace

Graph forward(std::shared_ptr<const BoundNetwork> net, const Tensor& input, Mode mode) {
  if (!net) throw ShapeError("forward: null network");
  const bool rank1 = input.rank() == 1;
  if (input.empty() || input.cols() != net->input_dim())
    throw ShapeError("forward: input shape " + input.shape_string() + " does not match input width " +
                     std::to_string(net->input_dim()));
  Graph graph(net, mode, rank1);
  auto& nodes = graph.mutable_nodes();
  nodes.reserve(net->layers().size() + 1);
  nodes.push_back({input.as_matrix(), {}, {}, {}, {}});
  const std::size_t n = input.rows();
  for (std::size_t li = 0; li < net->layers().size(); ++li) {
    const auto& L = net->layers()[li];
    Graph::Node node;
    node.value = Tensor({n, L.out});
    const Tensor& x = nodes.back().value;
    switch (L.spec.kind) {
      case LayerKind::dense: dense_forward(L, x, node.value); break;
      case LayerKind::activation: activation_forward(L.spec, x, node.value); break;
      case LayerKind::batch_norm: batch_norm_forward(L, mode, x, node); break;
    }
    if (!node.value.all_finite())
      throw NumericalError("non-finite activation after layer " + std::to_string(li) + " (" +
                           std::string(to_string(L.spec.kind)) + ")");
    nodes.push_back(std::move(node));
  }
  return graph;
}

Graph forward(const NetworkSpec& spec, const ParamSet& params, const Tensor& input, Mode mode) {
  return forward(std::make_shared<const BoundNetwork>(spec, params), input, mode);
}

Gradients backward(const Graph& graph, const Tensor& output_seed, GradTarget target) {
  if (!graph.valid()) throw ShapeError("backward: graph is empty or invalid");
  const Tensor& out = graph.output_matrix();
  if (output_seed.size() != out.size() || output_seed.cols() != out.cols())
    throw ShapeError("backward: seed shape " + output_seed.shape_string() +
                     " does not match output " + out.shape_string());
  const bool want_params = target != GradTarget::input_only;
  const auto& layers = graph.network().layers();
  const auto& nodes = graph.nodes();
  const std::size_t n = graph.batch();

  Gradients result;
  Tensor dy = output_seed.as_matrix();
  for (std::size_t li = layers.size(); li-- > 0;) {
    const auto& L = layers[li];
    const Tensor& x = nodes[li].value;
    const Tensor& y = nodes[li + 1].value;
    const bool last_needed = li > 0 || target != GradTarget::params_only;
    Tensor dx({n, L.in});
    switch (L.spec.kind) {
      case LayerKind::dense: {
        if (last_needed) {
          const double* __restrict wt = L.wt.data();
          for (std::size_t i = 0; i < n; ++i) {
            const double* __restrict dyi = dy.data() + i * L.out;
            double* __restrict dxi = dx.data() + i * L.in;
            for (std::size_t j = 0; j < L.out; ++j) {
              const double a = dyi[j];
              if (a == 0.0) continue;
              const double* __restrict wj = wt + j * L.in;
              for (std::size_t k = 0; k < L.in; ++k) dxi[k] += a * wj[k];
            }
          }
        }
        if (want_params) {
          std::vector<double> dw(L.in * L.out, 0.0), db(L.out, 0.0);
          for (std::size_t i = 0; i < n; ++i) {
            const double* __restrict xi = x.data() + i * L.in;
            const double* __restrict dyi = dy.data() + i * L.out;
            for (std::size_t j = 0; j < L.out; ++j) db[j] += dyi[j];
            for (std::size_t k = 0; k < L.in; ++k) {
              const double a = xi[k];
              if (a == 0.0) continue;
              double* __restrict dwk = dw.data() + k * L.out;
              for (std::size_t j = 0; j < L.out; ++j) dwk[j] += a * dyi[j];
            }
          }
          result.params.set(param_name(li, "b"), Tensor({L.out}, std::move(db)));
          if (L.spec.weight_norm) {
            std::vector<double> dg(L.out, 0.0), dv(L.in * L.out);
            for (std::size_t k = 0; k < L.in; ++k)
              for (std::size_t j = 0; j < L.out; ++j) dg[j] += dw[k * L.out + j] * L.vhat[k * L.out + j];
            for (std::size_t k = 0; k < L.in; ++k)
              for (std::size_t j = 0; j < L.out; ++j) {
                const std::size_t idx = k * L.out + j;
                dv[idx] = (L.g[j] / L.vnorm[j]) * (dw[idx] - dg[j] * L.vhat[idx]);
              }
            result.params.set(param_name(li, "g"), Tensor({L.out}, std::move(dg)));
            result.params.set(param_name(li, "v"), Tensor({L.in, L.out}, std::move(dv)));
          } else {
            result.params.set(param_name(li, "w"), Tensor({L.in, L.out}, std::move(dw)));
          }
        }
        break;
      }
      case LayerKind::activation: {
        const double* xs = x.data();
        const double* ys = y.data();
        const double* g = dy.data();
        double* d = dx.data();
        const std::size_t m = x.size();
        switch (L.spec.activation) {
          case Activation::linear: std::copy(g, g + m, d); break;
          case Activation::relu:
            for (std::size_t i = 0; i < m; ++i) d[i] = xs[i] > 0.0 ? g[i] : 0.0;
            break;
          case Activation::leaky_relu:
            for (std::size_t i = 0; i < m; ++i) d[i] = xs[i] > 0.0 ? g[i] : L.spec.slope * g[i];
            break;
          case Activation::tanh:
            for (std::size_t i = 0; i < m; ++i) d[i] = g[i] * (1.0 - ys[i] * ys[i]);
            break;
          case Activation::softplus:
            for (std::size_t i = 0; i < m; ++i) d[i] = g[i] * sigmoid(xs[i]);
            break;
          case Activation::sigmoid:
            for (std::size_t i = 0; i < m; ++i) d[i] = g[i] * ys[i] * (1.0 - ys[i]);
            break;
        }
        break;
      }
      case LayerKind::batch_norm: {
        const auto& node = nodes[li + 1];
        const std::size_t d = L.out;
        std::vector<double> dgamma(d, 0.0), dbeta(d, 0.0);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < d; ++j) {
            dbeta[j] += dy.at(i, j);
            dgamma[j] += dy.at(i, j) * node.xhat.at(i, j);
          }
        if (graph.mode() == Mode::eval) {
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) dx.at(i, j) = dy.at(i, j) * L.gamma[j] * node.inv_std[j];
        } else {
          // dxhat = dy * gamma; dx = inv/n (n dxhat - sum dxhat - xhat sum(dxhat xhat))
          const double nn = static_cast<double>(n);
          std::vector<double> s1(d, 0.0), s2(d, 0.0);
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) {
              const double dxh = dy.at(i, j) * L.gamma[j];
              s1[j] += dxh;
              s2[j] += dxh * node.xhat.at(i, j);
            }
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) {
              const double dxh = dy.at(i, j) * L.gamma[j];
              dx.at(i, j) = node.inv_std[j] / nn * (nn * dxh - s1[j] - node.xhat.at(i, j) * s2[j]);
            }
        }
        if (want_params) {
          result.params.set(param_name(li, "gamma"), Tensor({d}, std::move(dgamma)));
          result.params.set(param_name(li, "beta"), Tensor({d}, std::move(dbeta)));
        }
        break;
      }
    }
    dy = std::move(dx);
  }
  if (target != GradTarget::params_only)
    result.input = graph.rank1_input() ? dy.reshaped({dy.cols()}) : std::move(dy);
  return result;
}

void commit_batch_stats(const Graph& graph, ParamSet& params, double momentum) {
  if (graph.mode() != Mode::train) return;
  const auto& layers = graph.network().layers();
  const double n = static_cast<double>(graph.batch());
  const double unbias = n > 1.0 ? n / (n - 1.0) : 1.0;
  for (std::size_t li = 0; li < layers.size(); ++li) {
    if (layers[li].spec.kind != LayerKind::batch_norm) continue;
    const auto& node = graph.nodes()[li + 1];
    Tensor& rm = params.get(param_name(li, "running_mean"));
    Tensor& rv = params.get(param_name(li, "running_var"));
    for (std::size_t j = 0; j < rm.size(); ++j) {
      rm[j] = (1.0 - momentum) * rm[j] + momentum * node.batch_mean[j];
      rv[j] = (1.0 - momentum) * rv[j] + momentum * node.batch_var[j] * unbias;
    }
  }
}

Tensor finite_diff(const std::function<double(const Tensor&)>& f, const Tensor& x, double eps) {
  Tensor grad = Tensor::zeros_like(x);
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + eps;
    const double fp = f(probe);
    probe[i] = x[i] - eps;
    const double fm = f(probe);
    probe[i] = x[i];
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw NumericalError("finite_diff: non-finite function value at coordinate " + std::to_string(i));
    grad[i] = (fp - fm) / (2.0 * eps);
  }
  return grad;
}

double logsumexp(std::span<const double> v) {
  if (v.empty()) throw ShapeError("logsumexp of an empty vector");
  const double m = *std::max_element(v.begin(), v.end());
  if (v.size() == 1) return m;
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

std::vector<double> softmax(std::span<const double> v) {
  if (v.empty()) throw ShapeError("softmax of an empty vector");
  const double m = *std::max_element(v.begin(), v.end());
  std::vector<double> p(v.size());
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) s += (p[i] = std::exp(v[i] - m));
  for (auto& x : p) x /= s;
  return p;
}

}  // namespace nrf
