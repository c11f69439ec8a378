#include "nrf/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "nrf/chains.hpp"
#include "nrf/error.hpp"
#include "nrf/io.hpp"

namespace nrf {

void adam_step(AdamState& state, ParamSet& params, const ParamSet& grads, const AdamConfig& cfg) {
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (const auto& [name, g] : grads.entries()) {
    if (is_buffer(name)) continue;
    if (!params.contains(name)) throw ShapeError("adam_step: gradient for unknown parameter " + name);
    Tensor& p = params.get(name);
    if (p.shape() != g.shape()) throw ShapeError("adam_step: shape mismatch for " + name);
    auto [mit, fresh_m] = state.m.try_emplace(name, Tensor::zeros_like(p));
    auto [vit, fresh_v] = state.v.try_emplace(name, Tensor::zeros_like(p));
    Tensor& m = mit->second;
    Tensor& v = vit->second;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      p[i] -= cfg.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.eps);
    }
  }
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (labeled_batch_size == 0) throw ConfigError("labeled_batch_size must be positive");
  for (const auto* o : {&potential_opt, &generator_opt}) {
    if (!(o->lr > 0.0)) throw ConfigError("learning rates must be positive");
    if (!(o->beta1 >= 0.0 && o->beta1 < 1.0) || !(o->beta2 >= 0.0 && o->beta2 < 1.0))
      throw ConfigError("Adam betas must lie in [0, 1)");
    if (!(o->eps > 0.0)) throw ConfigError("Adam epsilon must be positive");
  }
  if (!(alpha_d >= 0.0) || !(alpha_c >= 0.0) || !(alpha_p >= 0.0))
    throw ConfigError("regularizer weights must be non-negative");
  if (metric_every == 0) throw ConfigError("metric_every must be positive");
  sampler.validate();
}

namespace {

// H(p) and dH/dlogit_k = -p_k (log p_k + H).
double entropy_and_seed(std::span<const double> heads, std::span<double> seed, double scale) {
  const auto p = softmax(heads);
  double h = 0.0;
  for (double pk : p)
    if (pk > 0.0) h -= pk * std::log(pk);
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double lp = p[k] > 0.0 ? std::log(p[k]) : 0.0;
    seed[k] += scale * (-p[k] * (lp + h));
  }
  return h;
}

// du/dhead_k: 1 for a single head, softmax otherwise.
void marginal_seed(std::span<const double> heads, std::span<double> seed, double scale) {
  if (heads.size() == 1) {
    seed[0] += scale;
    return;
  }
  const auto p = softmax(heads);
  for (std::size_t k = 0; k < p.size(); ++k) seed[k] += scale * p[k];
}

double marginal_value(std::span<const double> heads) {
  return heads.size() == 1 ? heads[0] : logsumexp(heads);
}

}  // namespace

LossGrad confidence_loss(const PotentialNet& pot, const Tensor& X) {
  if (pot.num_outputs < 2) throw ShapeError("confidence_loss needs K >= 2");
  const Tensor Xm = X.as_matrix();
  Graph g = forward(pot.spec, pot.params, Xm, Mode::eval);
  const Tensor& heads = g.output_matrix();
  const std::size_t n = heads.rows();
  Tensor seed = Tensor::zeros_like(heads);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += entropy_and_seed(heads.row(i), seed.row(i), 1.0 / n);
  return {total / n, backward(g, seed, GradTarget::params_only).params};
}

LossGrad potential_control_loss(const PotentialNet& pot, const Tensor& X) {
  const Tensor Xm = X.as_matrix();
  Graph g = forward(pot.spec, pot.params, Xm, Mode::eval);
  const Tensor& heads = g.output_matrix();
  const std::size_t n = heads.rows();
  Tensor seed = Tensor::zeros_like(heads);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double u = marginal_value(heads.row(i));
    total += u * u;
    marginal_seed(heads.row(i), seed.row(i), 2.0 * u / n);
  }
  return {total / n, backward(g, seed, GradTarget::params_only).params};
}

PotentialObjective potential_objective(const PotentialNet& pot, const Tensor& data, const Tensor& model_x,
                                       const std::vector<LabeledExample>& labeled, const TrainConfig& cfg) {
  const Tensor D = data.as_matrix(), M = model_x.as_matrix();
  const std::size_t nd = D.rows(), nm = M.rows(), nl = labeled.size();
  const std::size_t d = pot.obs_dim(), K = pot.num_outputs;
  if (D.cols() != d || M.cols() != d) throw ShapeError("potential_objective: observation width mismatch");
  if (nd == 0 || nm == 0) throw ShapeError("potential_objective: empty minibatch");
  const bool use_labeled = nl > 0 && cfg.alpha_d > 0.0;
  const bool use_c = cfg.alpha_c > 0.0;
  if ((use_labeled || use_c) && K < 2) throw ShapeError("supervised and confidence terms need K >= 2");

  // One forward/backward over [data; model; labeled].
  const std::size_t n = nd + nm + (use_labeled ? nl : 0);
  Tensor X({n, d});
  std::copy(D.data(), D.data() + D.size(), X.data());
  std::copy(M.data(), M.data() + M.size(), X.data() + nd * d);
  if (use_labeled) {
    for (std::size_t i = 0; i < nl; ++i) {
      if (labeled[i].x.size() != d) throw ShapeError("potential_objective: labeled width mismatch");
      if (labeled[i].label >= K) throw ShapeError("potential_objective: label out of range");
      X.set_row(nd + nm + i, labeled[i].x.values());
    }
  }
  Graph g = forward(pot.spec, pot.params, X, Mode::eval);
  const Tensor& heads = g.output_matrix();
  Tensor seed = Tensor::zeros_like(heads);
  PotentialObjective out;
  auto& st = out.stats;

  for (std::size_t i = 0; i < nd; ++i) {
    const double u = marginal_value(heads.row(i));
    st.mean_data_potential += u / nd;
    st.loss_p += u * u / nd;
    marginal_seed(heads.row(i), seed.row(i), (1.0 - cfg.alpha_p * 2.0 * u) / nd);
    if (K >= 2) {
      std::vector<double> scratch(K, 0.0);
      const double h = entropy_and_seed(heads.row(i), use_c ? seed.row(i) : std::span<double>(scratch),
                                        -cfg.alpha_c / nd);
      st.loss_c += h / nd;
    }
  }
  for (std::size_t i = nd; i < nd + nm; ++i) {
    st.mean_model_potential += marginal_value(heads.row(i)) / nm;
    marginal_seed(heads.row(i), seed.row(i), -1.0 / nm);
  }
  if (use_labeled) {
    for (std::size_t i = 0; i < nl; ++i) {
      const std::size_t r = nd + nm + i;
      const auto p = softmax(heads.row(r));
      auto s = seed.row(r);
      for (std::size_t k = 0; k < K; ++k)
        s[k] += cfg.alpha_d / nl * ((k == labeled[i].label ? 1.0 : 0.0) - p[k]);
    }
  }
  out.grad = backward(g, seed, GradTarget::params_only).params;
  return out;
}

namespace {

constexpr std::uint64_t kChainTag = 0x636861696eULL;

UpdateStats joint_update(TrainState& state, const Tensor& data, const std::vector<LabeledExample>& labeled,
                         const TrainConfig& cfg, Rng& rng) {
  const Tensor D = data.as_matrix();
  const std::size_t n = D.rows();
  if (n == 0) throw ShapeError("training update: empty minibatch");

  // Model samples: ancestral proposal then revision, one chain per data row.
  std::vector<Rng> streams = chain_streams(rng.next_u64(), kChainTag, n);
  ChainBatch chains = ancestral_batch(state.gen, streams);
  RevisionStats rs;
  if (cfg.sampler.steps > 0) {
    NrfTarget target(state.pot, state.gen, cfg.sampler.inner_steps, cfg.sampler.delta_star);
    rs = revise_parallel(cfg.sampler, target, chains, streams);
  }

  PotentialObjective obj = potential_objective(state.pot, D, chains.x, labeled, cfg);
  obj.stats.resets = rs.resets;

  Graph gen_graph;
  ParamSet gen_grad = grad_log_q_joint_params(state.gen, chains.x, chains.h, &gen_graph);
  gen_grad.scale(1.0 / static_cast<double>(n));

  // Adam descends; both objectives are ascended.
  obj.grad.scale(-1.0);
  gen_grad.scale(-1.0);
  adam_step(state.pot_opt, state.pot.params, obj.grad, cfg.potential_opt);
  adam_step(state.gen_opt, state.gen.params, gen_grad, cfg.generator_opt);
  commit_batch_stats(gen_graph, state.gen.params);
  ++state.iteration;
  return obj.stats;
}

}  // namespace

UpdateStats unsup_update(TrainState& state, const Tensor& data, const TrainConfig& cfg, Rng& rng) {
  return joint_update(state, data, {}, cfg, rng);
}

UpdateStats semi_update(TrainState& state, const Tensor& unlabeled, const std::vector<LabeledExample>& labeled,
                        const TrainConfig& cfg, Rng& rng) {
  if (state.pot.num_outputs < 2) throw ShapeError("semi_update needs K >= 2");
  for (const auto& e : labeled)
    if (e.label >= state.pot.num_outputs) throw ShapeError("semi_update: label out of range");
  return joint_update(state, unlabeled, labeled, cfg, rng);
}

void write_metric_row(std::ostream& out, const MetricRow& row) {
  const auto& s = row.stats;
  out << row.iteration << ',' << format_double(s.mean_data_potential) << ','
      << format_double(s.mean_model_potential) << ',' << format_double(s.loss_c) << ','
      << format_double(s.loss_p) << ',' << s.resets << '\n';
}

namespace {

// Draws minibatches by walking shuffled epochs.
class EpochSampler {
 public:
  EpochSampler(std::size_t n, Rng& rng) : order_(n), rng_(&rng) { reshuffle(); }

  std::vector<std::size_t> next(std::size_t k) {
    std::vector<std::size_t> out;
    out.reserve(k);
    while (out.size() < k) {
      if (pos_ == order_.size()) reshuffle();
      out.push_back(order_[pos_++]);
    }
    return out;
  }

 private:
  void reshuffle() {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    for (std::size_t i = order_.size(); i > 1; --i) std::swap(order_[i - 1], order_[rng_->index(i)]);
    pos_ = 0;
  }

  std::vector<std::size_t> order_;
  Rng* rng_;
  std::size_t pos_ = 0;
};

constexpr std::uint64_t kTrainTag = 0x747261696eULL;

}  // namespace

TrainResult train(const TrainConfig& cfg, TrainState init, const TrainData& data, const CheckpointSink& sink,
                  std::ostream* metric_log, const ProgressHook& progress) {
  cfg.validate();
  init.pot.validate();
  init.gen.validate();
  const Tensor U = data.unlabeled.as_matrix();
  const bool semi = !data.labeled.empty();
  if (U.rows() == 0) throw ConfigError("training data is empty");
  if (U.cols() != init.pot.obs_dim()) throw ShapeError("training data width does not match the potential");

  TrainResult result{std::move(init), {}};
  TrainState& state = result.state;
  Rng rng = Rng::stream(cfg.seed, kTrainTag);
  EpochSampler unl(U.rows(), rng);
  std::optional<EpochSampler> lab;
  if (semi) lab.emplace(data.labeled.size(), rng);
  const std::size_t bu = std::min(cfg.batch_size, U.rows());
  const std::size_t bl = semi ? std::min(cfg.labeled_batch_size, data.labeled.size()) : 0;

  if (metric_log) *metric_log << kMetricHeader << '\n';
  std::size_t resets = 0;
  for (std::size_t it = 1; it <= cfg.iterations; ++it) {
    Tensor batch({bu, U.cols()});
    const auto idx = unl.next(bu);
    for (std::size_t i = 0; i < bu; ++i) batch.set_row(i, U.row(idx[i]));
    UpdateStats st;
    if (semi) {
      std::vector<LabeledExample> lb;
      for (auto j : lab->next(bl)) lb.push_back(data.labeled[j]);
      st = semi_update(state, batch, lb, cfg, rng);
    } else {
      st = unsup_update(state, batch, cfg, rng);
    }
    resets += st.resets;
    if (it % cfg.metric_every == 0 || it == cfg.iterations) {
      st.resets = resets;
      resets = 0;
      MetricRow row{it, st};
      if (metric_log) write_metric_row(*metric_log, row);
      result.metrics.push_back(row);
    }
    if (progress) progress(state);
  }
  if (sink) sink(state);
  return result;
}

// ---- presets --------------------------------------------------------------

NetworkSpec gmm_potential_spec(std::size_t num_outputs) {
  NetworkSpec s;
  s.input_dim = 2;
  s.dense(100, true).act(Activation::leaky_relu, 0.2);
  s.dense(100, true).act(Activation::leaky_relu, 0.2);
  s.dense(num_outputs, true);
  return s;
}

NetworkSpec gmm_generator_spec(std::size_t latent_dim) {
  NetworkSpec s;
  s.input_dim = latent_dim;
  s.dense(50).batch_norm().act(Activation::relu);
  s.dense(50).batch_norm().act(Activation::relu);
  s.dense(2);
  return s;
}

NetworkSpec anomaly_potential_spec(std::size_t obs_dim) {
  NetworkSpec s;
  s.input_dim = obs_dim;
  s.dense(60, true).act(Activation::tanh);
  s.dense(30, true).act(Activation::tanh);
  s.dense(10, true).act(Activation::tanh);
  s.dense(1, true);
  return s;
}

NetworkSpec anomaly_generator_spec(std::size_t latent_dim, std::size_t obs_dim) {
  NetworkSpec s;
  s.input_dim = latent_dim;
  s.dense(10).batch_norm().act(Activation::tanh);
  s.dense(30).batch_norm().act(Activation::tanh);
  s.dense(60).batch_norm().act(Activation::tanh);
  s.dense(obs_dim, true);
  return s;
}

TrainState init_state(const NetworkSpec& pot_spec, std::size_t num_outputs, const NetworkSpec& gen_spec,
                      double sigma, Rng& rng) {
  TrainState s;
  s.pot = {pot_spec, init_params(pot_spec, rng), num_outputs};
  s.gen = {gen_spec, init_params(gen_spec, rng), sigma};
  s.pot.validate();
  s.gen.validate();
  return s;
}

}  // namespace nrf
