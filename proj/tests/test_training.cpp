#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "nrf/error.hpp"
#include "nrf/training.hpp"
#include "support.hpp"

namespace nrf {
namespace {

using testing::max_rel_err;
using testing::random_tensor;

double max_param_err(const ParamSet& a, const ParamSet& b) {
  double worst = 0.0;
  for (const auto& [name, t] : b.entries()) {
    if (is_buffer(name)) continue;
    worst = std::max(worst, max_rel_err(a.get(name), t));
  }
  return worst;
}

PotentialNet small_potential(std::size_t din, std::size_t K, Rng& rng) {
  NetworkSpec s;
  s.input_dim = din;
  s.dense(6, true).act(Activation::tanh).dense(K, true);
  PotentialNet net{s, init_params(s, rng), K};
  testing::perturb_params(net.params, rng);
  return net;
}

// Finite differences of a scalar functional of the potential parameters.
template <class F>
ParamSet param_fd(const PotentialNet& pot, F&& f) {
  ParamSet out;
  for (const auto& [name, value] : pot.params.entries()) {
    out.set(name, finite_diff(
                      [&, name = name](const Tensor& v) {
                        PotentialNet q = pot;
                        q.params.set(name, v);
                        return f(q);
                      },
                      value));
  }
  return out;
}

TEST(Adam, FirstStepIsLearningRate) {
  ParamSet p, g;
  p.set("w", Tensor::vector({2.0}));
  g.set("w", Tensor::vector({1.0}));
  AdamState st;
  AdamConfig cfg;
  adam_step(st, p, g, cfg);
  EXPECT_NEAR(p.get("w")[0], 2.0 - 1e-3 / (1.0 + 1e-8), 1e-15);
  EXPECT_EQ(st.step, 1u);
}

TEST(Adam, MatchesReferenceRecursion) {
  ParamSet p, g;
  p.set("w", Tensor::vector({0.5, -1.0}));
  AdamState st;
  AdamConfig cfg{0.01, 0.5, 0.9, 1e-8};
  double w = 0.5, m = 0.0, v = 0.0;
  for (int t = 1; t <= 5; ++t) {
    const double grad = 0.3 * t - 1.0;
    g.set("w", Tensor::vector({grad, 0.0}));
    adam_step(st, p, g, cfg);
    m = 0.5 * m + 0.5 * grad;
    v = 0.9 * v + 0.1 * grad * grad;
    const double mh = m / (1 - std::pow(0.5, t)), vh = v / (1 - std::pow(0.9, t));
    w -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
    EXPECT_NEAR(p.get("w")[0], w, 1e-14);
  }
  EXPECT_EQ(p.get("w")[1], -1.0);
}

TEST(Adam, ZeroGradientAndBuffersUnchanged) {
  ParamSet p, g;
  p.set("layer1.w", Tensor::vector({0.7}));
  p.set("layer2.running_mean", Tensor::vector({0.1}));
  g.set("layer1.w", Tensor::vector({0.0}));
  g.set("layer2.running_mean", Tensor::vector({5.0}));
  const ParamSet before = p;
  AdamState st;
  for (int i = 0; i < 10; ++i) adam_step(st, p, g, AdamConfig{});
  EXPECT_EQ(p, before);
}

TEST(Adam, Deterministic) {
  Rng rng(1);
  ParamSet p, g;
  p.set("w", random_tensor({3, 3}, rng));
  g.set("w", random_tensor({3, 3}, rng));
  ParamSet a = p, b = p;
  AdamState sa, sb;
  for (int i = 0; i < 4; ++i) {
    adam_step(sa, a, g, AdamConfig{});
    adam_step(sb, b, g, AdamConfig{});
  }
  EXPECT_EQ(a, b);
}

TEST(ConfidenceLoss, Examples) {
  NetworkSpec s;
  s.input_dim = 1;
  s.dense(2);
  ParamSet p;
  p.set("layer0.w", Tensor({1, 2}));
  p.set("layer0.b", Tensor::vector({0, 0}));
  PotentialNet pot{s, p, 2};
  EXPECT_NEAR(confidence_loss(pot, Tensor({3, 1})).value, std::log(2.0), 1e-15);
  pot.params.set("layer0.b", Tensor::vector({40, 0}));
  EXPECT_LT(confidence_loss(pot, Tensor({3, 1})).value, 1e-15);
  EXPECT_THROW(confidence_loss(PotentialNet{s, p, 1}, Tensor({1, 1})), ShapeError);
}

TEST(ConfidenceLoss, BoundsAndFiniteDifferences) {
  Rng rng(2);
  for (std::size_t K : {2, 3, 5}) {
    const PotentialNet pot = small_potential(2, K, rng);
    const Tensor X = random_tensor({5, 2}, rng, 2.0);
    const LossGrad lg = confidence_loss(pot, X);
    EXPECT_GE(lg.value, 0.0);
    EXPECT_LE(lg.value, std::log(static_cast<double>(K)));
    const ParamSet fd = param_fd(pot, [&](const PotentialNet& q) { return confidence_loss(q, X).value; });
    EXPECT_LT(max_param_err(lg.grad, fd), 1e-6) << K;
  }
}

TEST(PotentialControlLoss, Examples) {
  NetworkSpec s;
  s.input_dim = 2;
  s.dense(1);
  ParamSet p;
  p.set("layer0.w", Tensor({2, 1}));
  p.set("layer0.b", Tensor::vector({0}));
  PotentialNet pot{s, p, 1};
  Rng rng(3);
  const Tensor X = random_tensor({4, 2}, rng);
  const LossGrad zero = potential_control_loss(pot, X);
  EXPECT_EQ(zero.value, 0.0);
  EXPECT_EQ(zero.grad.get("layer0.w").max_abs(), 0.0);
  pot.params.set("layer0.b", Tensor::vector({2}));
  const LossGrad two = potential_control_loss(pot, X);
  EXPECT_DOUBLE_EQ(two.value, 4.0);
  // d/db mean u^2 = 2 u = 4
  EXPECT_DOUBLE_EQ(two.grad.get("layer0.b")[0], 4.0);
}

TEST(PotentialControlLoss, FiniteDifferences) {
  Rng rng(4);
  for (std::size_t K : {1, 3}) {
    const PotentialNet pot = small_potential(2, K, rng);
    const Tensor X = random_tensor({6, 2}, rng);
    const LossGrad lg = potential_control_loss(pot, X);
    const ParamSet fd = param_fd(pot, [&](const PotentialNet& q) { return potential_control_loss(q, X).value; });
    EXPECT_LT(max_param_err(lg.grad, fd), 1e-6) << K;
  }
}

TEST(PotentialObjective, IdenticalBatchesCancel) {
  Rng rng(5);
  const PotentialNet pot = small_potential(2, 3, rng);
  const Tensor X = random_tensor({1, 2}, rng);
  const PotentialObjective one = potential_objective(pot, X, X, {}, TrainConfig{});
  // Zero up to the rounding of fused multiply-adds in the shared backward pass.
  for (const auto& [name, t] : one.grad.entries()) EXPECT_LT(t.max_abs(), 1e-15) << name;
  const Tensor B = random_tensor({8, 2}, rng);
  const PotentialObjective many = potential_objective(pot, B, B, {}, TrainConfig{});
  for (const auto& [name, t] : many.grad.entries()) EXPECT_LT(t.max_abs(), 1e-15) << name;
}

TEST(PotentialObjective, MatchesPerSampleBackward) {
  Rng rng(6);
  for (std::size_t K : {1, 4}) {
    const PotentialNet pot = small_potential(2, K, rng);
    const Tensor D = random_tensor({5, 2}, rng), M = random_tensor({7, 2}, rng);
    const PotentialObjective obj = potential_objective(pot, D, M, {}, TrainConfig{});
    ParamSet ref = pot.params.zeros_like();
    for (std::size_t i = 0; i < 5; ++i) ref.axpy(1.0 / 5, potential_param_grad(pot, D.row_tensor(i).as_matrix(), std::vector<double>{1.0}));
    for (std::size_t i = 0; i < 7; ++i) ref.axpy(-1.0 / 7, potential_param_grad(pot, M.row_tensor(i).as_matrix(), std::vector<double>{1.0}));
    EXPECT_LT(max_param_err(obj.grad, ref), 1e-13);
    const ParamSet fd = param_fd(pot, [&](const PotentialNet& q) {
      double s = 0.0;
      for (std::size_t i = 0; i < 5; ++i) s += potential(q, D.row_tensor(i)) / 5;
      for (std::size_t i = 0; i < 7; ++i) s -= potential(q, M.row_tensor(i)) / 7;
      return s;
    });
    EXPECT_LT(max_param_err(obj.grad, fd), 1e-6);
    double md = 0.0;
    for (std::size_t i = 0; i < 5; ++i) md += potential(pot, D.row_tensor(i)) / 5;
    EXPECT_NEAR(obj.stats.mean_data_potential, md, 1e-13);
  }
}

TEST(PotentialObjective, RegularizersCombine) {
  Rng rng(7);
  const PotentialNet pot = small_potential(2, 3, rng);
  const Tensor D = random_tensor({4, 2}, rng), M = random_tensor({4, 2}, rng);
  const std::vector<LabeledExample> L{{Tensor::vector({0.1, 0.2}), 0}, {Tensor::vector({-1, 0.5}), 2}};
  TrainConfig cfg;
  cfg.alpha_d = 2.0;
  cfg.alpha_c = 0.5;
  cfg.alpha_p = 0.25;
  const PotentialObjective obj = potential_objective(pot, D, M, L, cfg);
  const ParamSet fd = param_fd(pot, [&](const PotentialNet& q) {
    double s = 0.0;
    for (std::size_t i = 0; i < 4; ++i) s += (potential(q, D.row_tensor(i)) - potential(q, M.row_tensor(i))) / 4;
    for (const auto& e : L) s += cfg.alpha_d * std::log(classifier_probs(q, e.x)[e.label]) / 2;
    s -= cfg.alpha_c * confidence_loss(q, D).value;
    s -= cfg.alpha_p * potential_control_loss(q, D).value;
    return s;
  });
  EXPECT_LT(max_param_err(obj.grad, fd), 1e-6);
  EXPECT_NEAR(obj.stats.loss_c, confidence_loss(pot, D).value, 1e-13);
  EXPECT_NEAR(obj.stats.loss_p, potential_control_loss(pot, D).value, 1e-13);
}

TEST(PotentialObjective, SupervisedTermIsLogisticGradient) {
  // Linear two-class head: d/dW_k log p(y|x) = (1[y=k] - p_k) x.
  NetworkSpec s;
  s.input_dim = 2;
  s.dense(2);
  ParamSet p;
  p.set("layer0.w", Tensor::matrix(2, 2, {0.3, -0.2, 0.5, 0.1}));
  p.set("layer0.b", Tensor::vector({0.05, -0.1}));
  const PotentialNet pot{s, p, 2};
  const std::vector<LabeledExample> L{{Tensor::vector({1, 2}), 0}, {Tensor::vector({-0.5, 0.3}), 1},
                                      {Tensor::vector({0.2, -1}), 1}};
  Rng rng(8);
  const Tensor D = random_tensor({3, 2}, rng);
  TrainConfig cfg;
  cfg.alpha_d = 3.0;
  const PotentialObjective obj = potential_objective(pot, D, D, L, cfg);
  Tensor W({2, 2}), b({2});
  for (const auto& e : L) {
    const double z0 = 0.3 * e.x[0] + 0.5 * e.x[1] + 0.05, z1 = -0.2 * e.x[0] + 0.1 * e.x[1] - 0.1;
    const double p0 = 1.0 / (1.0 + std::exp(z1 - z0));
    const double r[2] = {(e.label == 0 ? 1.0 : 0.0) - p0, (e.label == 1 ? 1.0 : 0.0) - (1 - p0)};
    for (std::size_t k = 0; k < 2; ++k) {
      b[k] += 3.0 / 3 * r[k];
      for (std::size_t j = 0; j < 2; ++j) W.at(j, k) += 3.0 / 3 * r[k] * e.x[j];
    }
  }
  EXPECT_LT(max_rel_err(obj.grad.get("layer0.w"), W), 1e-14);
  EXPECT_LT(max_rel_err(obj.grad.get("layer0.b"), b), 1e-14);
}

GeneratorNet shifted_generator(double shift) {
  NetworkSpec s;
  s.input_dim = 1;
  s.dense(1);
  ParamSet p;
  p.set("layer0.w", Tensor({1, 1}));
  p.set("layer0.b", Tensor::vector({shift}));
  return {s, p, 0.1};
}

TrainConfig no_revision() {
  TrainConfig cfg;
  cfg.sampler.steps = 0;
  return cfg;
}

TEST(UnsupUpdate, AscentDirection) {
  // u(x) = w x + b: data to the right of the model samples pushes w up.
  NetworkSpec s;
  s.input_dim = 1;
  s.dense(1);
  ParamSet p;
  p.set("layer0.w", Tensor::matrix(1, 1, {0.2}));
  p.set("layer0.b", Tensor::vector({0}));
  TrainState st{PotentialNet{s, p, 1}, shifted_generator(-5.0), {}, {}, 0};
  Rng rng(9);
  const Tensor D = random_tensor({10, 1}, rng, 0.1) + Tensor({10, 1}, 3.0);
  unsup_update(st, D, no_revision(), rng);
  EXPECT_GT(st.pot.params.get("layer0.w")[0], 0.2);
  EXPECT_EQ(st.iteration, 1u);
  // The bias gradient cancels; Adam scales its rounding residue by lr / eps.
  EXPECT_NEAR(st.pot.params.get("layer0.b")[0], 0.0, 1e-9);
}

TEST(UnsupUpdate, RaisesDataPotentialOverModel) {
  // Two-component 1-D mixture at +-2 against a fixed batch of model samples.
  Rng rng(10);
  NetworkSpec s;
  s.input_dim = 1;
  s.dense(8, true).act(Activation::tanh).dense(1, true);
  PotentialNet pot{s, init_params(s, rng), 1};
  Tensor D({40, 1}), M({40, 1});
  for (std::size_t i = 0; i < 40; ++i) {
    D[i] = (i % 2 ? 2.0 : -2.0) + 0.2 * rng.normal();
    M[i] = 1.5 * rng.normal();
  }
  auto gap = [&](const PotentialNet& q) {
    double g = 0.0;
    for (std::size_t i = 0; i < 40; ++i) g += (potential(q, D.row_tensor(i)) - potential(q, M.row_tensor(i))) / 40;
    return g;
  };
  AdamState opt;
  double prev = gap(pot), first = prev;
  int rises = 0;
  for (int t = 0; t < 100; ++t) {
    PotentialObjective obj = potential_objective(pot, D, M, {}, TrainConfig{});
    obj.grad.scale(-1.0);
    adam_step(opt, pot.params, obj.grad, AdamConfig{0.01, 0.5, 0.9, 1e-8});
    const double now = gap(pot);
    rises += now > prev;
    prev = now;
  }
  EXPECT_GT(prev, first + 0.5);
  EXPECT_GE(rises, 90);
}

TEST(SemiUpdate, ZeroWeightsMatchUnsupervised) {
  Rng rng(11);
  TrainState a = init_state(gmm_potential_spec(2), 2, gmm_generator_spec(2), 0.1, rng);
  TrainState b = a;
  const Tensor D = random_tensor({16, 2}, rng);
  const std::vector<LabeledExample> L{{Tensor::vector({1, 0}), 0}, {Tensor::vector({0, 2}), 1}};
  TrainConfig cfg;
  cfg.sampler.steps = 3;
  Rng ra(12), rb(12);
  const UpdateStats sa = unsup_update(a, D, cfg, ra);
  const UpdateStats sb = semi_update(b, D, L, cfg, rb);
  EXPECT_LT(max_param_err(a.pot.params, b.pot.params), 1e-13);
  EXPECT_EQ(a.gen.params, b.gen.params);
  EXPECT_NEAR(sa.mean_model_potential, sb.mean_model_potential, 1e-13);
  EXPECT_THROW(semi_update(b, D, {{Tensor::vector({1, 0}), 5}}, cfg, rb), ShapeError);
}

TEST(GeneratorUpdate, MovesTowardRevisedSamples) {
  // With no revision the samples are the generator's own; with revision under
  // a potential that favours x > 0 the bias follows the samples up.
  NetworkSpec s;
  s.input_dim = 1;
  s.dense(1);
  ParamSet p;
  p.set("layer0.w", Tensor::matrix(1, 1, {4.0}));
  p.set("layer0.b", Tensor::vector({0}));
  TrainState st{PotentialNet{s, p, 1}, shifted_generator(0.0), {}, {}, 0};
  TrainConfig cfg;
  cfg.sampler.steps = 20;
  cfg.sampler.schedule = StepSchedule::fixed(0.01);
  Rng rng(13);
  const Tensor D({10, 1}, 1.0);
  unsup_update(st, D, cfg, rng);
  EXPECT_GT(st.gen.params.get("layer0.b")[0], 0.0);
}

TEST(Train, ZeroIterations) {
  Rng rng(14);
  const TrainState init = init_state(gmm_potential_spec(1), 1, gmm_generator_spec(2), 0.1, rng);
  TrainConfig cfg;
  cfg.iterations = 0;
  int calls = 0;
  std::ostringstream log;
  const TrainResult r = train(cfg, init, TrainData{random_tensor({5, 2}, rng), {}},
                              [&](const TrainState& s) {
                                ++calls;
                                EXPECT_EQ(s.pot.params, init.pot.params);
                              },
                              &log);
  EXPECT_EQ(calls, 1);
  EXPECT_TRUE(r.metrics.empty());
  EXPECT_EQ(log.str(), std::string(kMetricHeader) + "\n");
}

TEST(Train, DeterministicMetricLog) {
  Rng rng(15);
  const TrainState init = init_state(gmm_potential_spec(1), 1, gmm_generator_spec(2), 0.1, rng);
  const Tensor data = random_tensor({30, 2}, rng);
  TrainConfig cfg;
  cfg.iterations = 7;
  cfg.batch_size = 8;
  cfg.metric_every = 3;
  cfg.sampler.steps = 2;
  std::ostringstream a, b;
  const TrainResult ra = train(cfg, init, TrainData{data, {}}, {}, &a);
  const TrainResult rb = train(cfg, init, TrainData{data, {}}, {}, &b);
  EXPECT_EQ(a.str(), b.str());
  EXPECT_EQ(ra.state.pot.params, rb.state.pot.params);
  ASSERT_EQ(ra.metrics.size(), 3u);
  EXPECT_EQ(ra.metrics[0].iteration, 3u);
  EXPECT_EQ(ra.metrics[2].iteration, 7u);
  EXPECT_EQ(ra.state.iteration, 7u);
  cfg.seed = 2;
  std::ostringstream c;
  train(cfg, init, TrainData{data, {}}, {}, &c);
  EXPECT_NE(a.str(), c.str());
}

TEST(Train, LargeSupervisedWeightSeparatesLabels) {
  Rng rng(16);
  TrainState init = init_state(gmm_potential_spec(2), 2, gmm_generator_spec(2), 0.1, rng);
  std::vector<LabeledExample> L;
  for (int i = 0; i < 4; ++i) {
    L.push_back({Tensor::vector({1.5 + 0.1 * i, 0.3 * i}), 0});
    L.push_back({Tensor::vector({-1.5 - 0.1 * i, -0.3 * i}), 1});
  }
  TrainConfig cfg;
  cfg.iterations = 150;
  cfg.batch_size = 20;
  cfg.labeled_batch_size = 8;
  cfg.alpha_d = 50.0;
  cfg.sampler.steps = 1;
  const TrainResult r = train(cfg, init, TrainData{random_tensor({40, 2}, rng, 2.0), L});
  for (const auto& e : L) {
    const Tensor p = classifier_probs(r.state.pot, e.x);
    EXPECT_GT(p[e.label], 0.5);
  }
}

TEST(Train, RejectsBadConfig) {
  Rng rng(17);
  const TrainState init = init_state(gmm_potential_spec(1), 1, gmm_generator_spec(2), 0.1, rng);
  TrainConfig cfg;
  cfg.batch_size = 0;
  EXPECT_THROW(train(cfg, init, TrainData{random_tensor({5, 2}, rng), {}}), ConfigError);
  cfg = TrainConfig{};
  cfg.potential_opt.beta1 = 1.0;
  EXPECT_THROW(train(cfg, init, TrainData{random_tensor({5, 2}, rng), {}}), ConfigError);
  EXPECT_THROW(train(TrainConfig{}, init, TrainData{random_tensor({5, 3}, rng), {}}), ShapeError);
}

}  // namespace
}  // namespace nrf
