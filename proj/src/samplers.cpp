#include "nrf/samplers.hpp"

#include <algorithm>
#include <cmath>

#include "nrf/error.hpp"

namespace nrf {

std::string_view to_string(SamplerKind kind) {
  switch (kind) {
    case SamplerKind::sgld: return "sgld";
    case SamplerKind::sghmc: return "sghmc";
    case SamplerKind::ld_exact: return "ld";
    case SamplerKind::hmc_exact: return "hmc";
    case SamplerKind::coopnet: return "coopnet";
  }
  return "?";
}

SamplerKind parse_sampler_kind(std::string_view name) {
  for (auto k : {SamplerKind::sgld, SamplerKind::sghmc, SamplerKind::ld_exact, SamplerKind::hmc_exact,
                 SamplerKind::coopnet})
    if (to_string(k) == name) return k;
  if (name == "ld_exact") return SamplerKind::ld_exact;
  if (name == "hmc_exact") return SamplerKind::hmc_exact;
  throw ConfigError("unknown sampler '" + std::string(name) + "'");
}

bool uses_momentum(SamplerKind kind) { return kind == SamplerKind::sghmc || kind == SamplerKind::hmc_exact; }
bool uses_exact_gradient(SamplerKind kind) {
  return kind == SamplerKind::ld_exact || kind == SamplerKind::hmc_exact;
}

double step_size(std::size_t t, double a, double b, double c) {
  if (!(a > 0.0) || !(b > 0.0) || !(c > 0.0)) throw ConfigError("step-size schedule needs a, b, c > 0");
  return std::pow(a * (1.0 + static_cast<double>(t) / b), -c);
}

void SamplerConfig::validate() const {
  if (schedule.constant && !(schedule.delta > 0.0)) throw ConfigError("sampler step size must be positive");
  if (!schedule.constant) (void)step_size(0, schedule.a, schedule.b, schedule.c);
  if (!(beta > 0.0 && beta <= 1.0)) throw ConfigError("SGHMC friction beta must lie in (0, 1]");
  if (delta_star && !(*delta_star >= 0.0)) throw ConfigError("inner LD step size must be non-negative");
  if (kind == SamplerKind::coopnet && (coop_lx == 0 || coop_lh == 0))
    throw ConfigError("coopnet needs Lx, Lh >= 1");
}

// ---- chain containers -------------------------------------------------------

ChainState ChainState::at(Tensor x, Tensor h) {
  ChainState s;
  s.vx = Tensor::zeros_like(x);
  s.vh = Tensor::zeros_like(h);
  s.x = std::move(x);
  s.h = std::move(h);
  return s;
}

ChainBatch ChainBatch::at(Tensor x, Tensor h) {
  ChainBatch b;
  b.x = x.as_matrix();
  b.h = h.as_matrix();
  if (b.x.rows() != b.h.rows()) throw ShapeError("chain batch: x and h row counts differ");
  b.vx = Tensor::zeros_like(b.x);
  b.vh = Tensor::zeros_like(b.h);
  return b;
}

ChainBatch ChainBatch::from_states(std::span<const ChainState> states) {
  if (states.empty()) throw ShapeError("chain batch needs at least one chain");
  ChainBatch b;
  const std::size_t n = states.size(), dx = states[0].x.size(), dh = states[0].h.size();
  b.x = Tensor({n, dx});
  b.h = Tensor({n, dh});
  b.vx = Tensor({n, dx});
  b.vh = Tensor({n, dh});
  b.t = states[0].t;
  for (std::size_t i = 0; i < n; ++i) b.set_chain(i, states[i]);
  return b;
}

ChainState ChainBatch::chain(std::size_t i) const {
  return {x.row_tensor(i), h.row_tensor(i), vx.row_tensor(i), vh.row_tensor(i), t};
}

void ChainBatch::set_chain(std::size_t i, const ChainState& s) {
  x.set_row(i, s.x.values());
  h.set_row(i, s.h.values());
  vx.set_row(i, s.vx.values());
  vh.set_row(i, s.vh.values());
}

namespace {
Tensor slice_rows(const Tensor& t, std::size_t begin, std::size_t end) {
  const std::size_t c = t.cols();
  return Tensor({end - begin, c}, std::vector<double>(t.data() + begin * c, t.data() + end * c));
}
void assign_rows(Tensor& t, std::size_t begin, const Tensor& part) {
  std::copy(part.data(), part.data() + part.size(), t.data() + begin * t.cols());
}
}  // namespace

ChainBatch ChainBatch::slice(std::size_t begin, std::size_t end) const {
  return {slice_rows(x, begin, end), slice_rows(h, begin, end), slice_rows(vx, begin, end),
          slice_rows(vh, begin, end), t};
}

void ChainBatch::assign_slice(std::size_t begin, const ChainBatch& part) {
  assign_rows(x, begin, part.x);
  assign_rows(h, begin, part.h);
  assign_rows(vx, begin, part.vx);
  assign_rows(vh, begin, part.vh);
}

// ---- revision -----------------------------------------------------------------

namespace {

bool row_diverged(const Tensor& t, std::size_t i) {
  for (double v : t.row(i))
    if (!std::isfinite(v) || std::abs(v) > kDivergenceBound) return true;
  return false;
}

void handle_divergence(const SamplerTarget& target, ChainBatch& chains, std::span<Rng> rngs, std::size_t step,
                       RevisionStats& stats) {
  for (std::size_t i = 0; i < chains.size(); ++i) {
    if (!row_diverged(chains.x, i) && !row_diverged(chains.h, i) && !row_diverged(chains.vx, i) &&
        !row_diverged(chains.vh, i))
      continue;
    if (!target.reset_chain(i, chains, rngs[i]))
      throw NumericalError("chain " + std::to_string(i) + " diverged at revision step " + std::to_string(step));
    ++stats.resets;
  }
}

// z <- z + delta g + sqrt(2 delta) eta            (LD)
// v <- (1 - beta) v + delta g + sqrt(2 beta delta) eta; z <- z + v   (HMC)
void update_block(bool momentum, double beta, double delta, Tensor& z, Tensor& v, const Tensor& g,
                  std::size_t row, Rng& rng) {
  auto zr = z.row(row);
  auto gr = g.row(row);
  if (momentum) {
    auto vr = v.row(row);
    const double noise = std::sqrt(2.0 * beta * delta);
    for (std::size_t j = 0; j < zr.size(); ++j) {
      vr[j] = (1.0 - beta) * vr[j] + delta * gr[j] + noise * rng.normal();
      zr[j] += vr[j];
    }
  } else {
    const double noise = std::sqrt(2.0 * delta);
    for (std::size_t j = 0; j < zr.size(); ++j) zr[j] += delta * gr[j] + noise * rng.normal();
  }
}

RevisionStats revise_joint(const SamplerConfig& cfg, const SamplerTarget& target, ChainBatch& chains,
                           std::span<Rng> rngs) {
  RevisionStats stats;
  const bool momentum = uses_momentum(cfg.kind);
  Tensor gx, gh;
  for (std::size_t l = 1; l <= cfg.steps; ++l) {
    const double delta = cfg.schedule.at(chains.t);
    target.joint_gradient(chains.x, chains.h, l, delta, rngs, gx, gh);
    for (std::size_t i = 0; i < chains.size(); ++i) {
      update_block(momentum, cfg.beta, delta, chains.x, chains.vx, gx, i, rngs[i]);
      if (target.moves_latent()) update_block(momentum, cfg.beta, delta, chains.h, chains.vh, gh, i, rngs[i]);
    }
    ++chains.t;
    handle_divergence(target, chains, rngs, l, stats);
  }
  return stats;
}

RevisionStats revise_coopnet(const SamplerConfig& cfg, const SamplerTarget& target, ChainBatch& chains,
                             std::span<Rng> rngs) {
  RevisionStats stats;
  Tensor gx, gh, unused;
  for (std::size_t sweep = 1; sweep <= cfg.steps; ++sweep) {
    const std::size_t t0 = chains.t;
    for (std::size_t j = 0; j < cfg.coop_lx; ++j) {
      const double delta = cfg.schedule.at(t0 + j);
      target.potential_gradient(chains.x, gx);
      for (std::size_t i = 0; i < chains.size(); ++i)
        update_block(false, 1.0, delta, chains.x, unused, gx, i, rngs[i]);
    }
    for (std::size_t j = 0; j < cfg.coop_lh; ++j) {
      const double delta = cfg.schedule.at(t0 + j);
      target.latent_gradient(chains.x, chains.h, gh);
      for (std::size_t i = 0; i < chains.size(); ++i)
        update_block(false, 1.0, delta, chains.h, unused, gh, i, rngs[i]);
    }
    chains.t += cfg.coop_lx;
    handle_divergence(target, chains, rngs, sweep, stats);
  }
  return stats;
}

}  // namespace

RevisionStats revise(const SamplerConfig& cfg, const SamplerTarget& target, ChainBatch& chains,
                     std::span<Rng> rngs) {
  cfg.validate();
  if (rngs.size() != chains.size()) throw ShapeError("revise: one rng stream per chain required");
  if (chains.x.cols() != target.obs_dim() || chains.h.cols() != target.latent_dim())
    throw ShapeError("revise: chain dimensions do not match the target");
  if (uses_exact_gradient(cfg.kind) && !target.exact())
    throw ConfigError("exact-gradient sampler requested for a target without exact gradients");
  if (cfg.kind == SamplerKind::coopnet) return revise_coopnet(cfg, target, chains, rngs);
  return revise_joint(cfg, target, chains, rngs);
}

ChainState revise(const SamplerConfig& cfg, const SamplerTarget& target, ChainState state, Rng& rng) {
  ChainBatch b = ChainBatch::from_states(std::span<const ChainState>(&state, 1));
  revise(cfg, target, b, std::span<Rng>(&rng, 1));
  return b.chain(0);
}

// ---- NRF targets ----------------------------------------------------------

void stochastic_gradient_batch(const BoundPtr& pot, std::size_t num_outputs, const BoundPtr& gen, double sigma,
                               const Tensor& x, const Tensor& h, const Tensor* h_star, Tensor& grad_x,
                               Tensor& grad_h) {
  auto pu = eval_potential(pot, num_outputs, x, true);
  auto gq = eval_generator(gen, sigma, x, h, true);
  grad_h = std::move(gq.grad_h);
  grad_x = std::move(pu.grad_x);
  if (h_star == nullptr) return;
  // d/dx log q(h, x) - d/dx log q(h*, x) = -r + r*, r = (x - g(h)) / sigma^2
  auto gs = eval_generator(gen, sigma, x, *h_star, false);
  for (std::size_t i = 0; i < grad_x.size(); ++i) grad_x[i] += gs.residual[i] - gq.residual[i];
}

NrfTarget::NrfTarget(const PotentialNet& pot, const GeneratorNet& gen, std::size_t inner_steps,
                     std::optional<double> delta_star)
    : pot_(pot.bind()),
      gen_(gen.bind()),
      num_outputs_(pot.num_outputs),
      sigma_(gen.sigma),
      inner_steps_(inner_steps),
      delta_star_(delta_star) {
  if (pot.obs_dim() != gen.obs_dim()) throw ShapeError("potential and generator observation widths differ");
  if (!(sigma_ > 0.0)) throw ShapeError("revision needs generator sigma > 0");
}

void NrfTarget::joint_gradient(const Tensor& x, const Tensor& h, std::size_t step, double delta,
                               std::span<Rng> rngs, Tensor& grad_x, Tensor& grad_h) const {
  if (step <= 1 || inner_steps_ == 0) {
    stochastic_gradient_batch(pot_, num_outputs_, gen_, sigma_, x, h, nullptr, grad_x, grad_h);
    return;
  }
  const double ds = delta_star_.value_or(delta);
  const double noise = std::sqrt(2.0 * ds);
  auto pu = eval_potential(pot_, num_outputs_, x, true);
  auto gq = eval_generator(gen_, sigma_, x, h, true);
  Tensor h_star = h;
  Tensor gstar = gq.grad_h;
  for (std::size_t k = 0; k < inner_steps_; ++k) {
    if (k > 0) gstar = eval_generator(gen_, sigma_, x, h_star, true).grad_h;
    for (std::size_t i = 0; i < h_star.rows(); ++i) {
      auto hr = h_star.row(i);
      auto gr = gstar.row(i);
      for (std::size_t j = 0; j < hr.size(); ++j) hr[j] += ds * gr[j] + noise * rngs[i].normal();
    }
  }
  if (!h_star.all_finite()) throw NumericalError("inner LD refresh produced a non-finite latent");
  auto gs = eval_generator(gen_, sigma_, x, h_star, false);
  grad_x = std::move(pu.grad_x);
  for (std::size_t i = 0; i < grad_x.size(); ++i) grad_x[i] += gs.residual[i] - gq.residual[i];
  grad_h = std::move(gq.grad_h);
}

void NrfTarget::potential_gradient(const Tensor& x, Tensor& grad_x) const {
  grad_x = eval_potential(pot_, num_outputs_, x, true).grad_x;
}

void NrfTarget::latent_gradient(const Tensor& x, const Tensor& h, Tensor& grad_h) const {
  grad_h = eval_generator(gen_, sigma_, x, h, true).grad_h;
}

bool NrfTarget::reset_chain(std::size_t row, ChainBatch& batch, Rng& rng) const {
  Tensor h({1, latent_dim()});
  rng.fill_normal(h.values());
  Tensor x = decode_batch(gen_, h);
  for (auto& v : x.values()) v += sigma_ * rng.normal();
  batch.x.set_row(row, x.values());
  batch.h.set_row(row, h.values());
  batch.vx.set_row(row, Tensor({obs_dim()}).values());
  batch.vh.set_row(row, Tensor({latent_dim()}).values());
  return true;
}

ClassConditionalTarget::ClassConditionalTarget(const PotentialNet& pot, std::size_t latent_dim,
                                               std::vector<std::size_t> labels)
    : pot_(pot.bind()), num_outputs_(pot.num_outputs), latent_dim_(latent_dim), labels_(std::move(labels)) {
  if (num_outputs_ < 2) throw ShapeError("class-conditional revision needs K >= 2");
  for (auto y : labels_)
    if (y >= num_outputs_) throw ShapeError("class label out of range");
}

void ClassConditionalTarget::joint_gradient(const Tensor& x, const Tensor& h, std::size_t, double,
                                            std::span<Rng>, Tensor& grad_x, Tensor& grad_h) const {
  potential_gradient(x, grad_x);
  grad_h = Tensor::zeros_like(h);
}

void ClassConditionalTarget::potential_gradient(const Tensor& x, Tensor& grad_x) const {
  if (labels_.size() != x.rows()) throw ShapeError("class-conditional revision: one label per chain");
  grad_x = eval_class_potential(pot_, num_outputs_, x, labels_).grad_x;
}

void ClassConditionalTarget::latent_gradient(const Tensor&, const Tensor& h, Tensor& grad_h) const {
  grad_h = Tensor::zeros_like(h);
}

// ---- Gaussian benchmark target --------------------------------------------

namespace {
Eigen::VectorXd row_vec(const Tensor& t, std::size_t i) {
  auto r = t.row(i);
  return Eigen::Map<const Eigen::VectorXd>(r.data(), static_cast<Eigen::Index>(r.size()));
}
void put_row(Tensor& t, std::size_t i, const Eigen::VectorXd& v) {
  std::copy(v.data(), v.data() + v.size(), t.row(i).begin());
}
}  // namespace

GaussianBenchTarget::GaussianBenchTarget(const GaussianJointBenchmark& bench, bool exact, std::size_t inner_steps,
                                         std::optional<double> delta_star)
    : bench_(&bench), exact_(exact), inner_steps_(inner_steps), delta_star_(delta_star) {}

void GaussianBenchTarget::joint_gradient(const Tensor& x, const Tensor& h, std::size_t step, double delta,
                                         std::span<Rng> rngs, Tensor& grad_x, Tensor& grad_h) const {
  const std::size_t n = x.rows();
  grad_x = Tensor({n, obs_dim()});
  grad_h = Tensor({n, latent_dim()});
  const double ds = delta_star_.value_or(delta);
  const double noise = std::sqrt(2.0 * ds);
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::VectorXd xi = row_vec(x, i), hi = row_vec(h, i);
    if (exact_) {
      auto [gx, gh] = bench_->exact_grad(xi, hi);
      put_row(grad_x, i, gx);
      put_row(grad_h, i, gh);
      continue;
    }
    auto [qx, qh] = bench_->grad_log_q_joint(xi, hi);
    Eigen::VectorXd gx = bench_->grad_log_px(xi);
    if (step > 1 && inner_steps_ > 0) {
      Eigen::VectorXd hs = hi;
      Eigen::VectorXd gs = qh;
      for (std::size_t k = 0; k < inner_steps_; ++k) {
        if (k > 0) gs = bench_->grad_log_q_joint(xi, hs).second;
        for (Eigen::Index j = 0; j < hs.size(); ++j) hs[j] += ds * gs[j] + noise * rngs[i].normal();
      }
      gx += qx - bench_->grad_log_q_joint(xi, hs).first;
    }
    put_row(grad_x, i, gx);
    put_row(grad_h, i, qh);
  }
}

void GaussianBenchTarget::potential_gradient(const Tensor& x, Tensor& grad_x) const {
  grad_x = Tensor({x.rows(), obs_dim()});
  for (std::size_t i = 0; i < x.rows(); ++i) put_row(grad_x, i, bench_->grad_log_px(row_vec(x, i)));
}

void GaussianBenchTarget::latent_gradient(const Tensor& x, const Tensor& h, Tensor& grad_h) const {
  grad_h = Tensor({x.rows(), latent_dim()});
  for (std::size_t i = 0; i < x.rows(); ++i)
    put_row(grad_h, i, bench_->grad_log_q_joint(row_vec(x, i), row_vec(h, i)).second);
}

bool GaussianBenchTarget::reset_chain(std::size_t row, ChainBatch& batch, Rng& rng) const {
  const Eigen::VectorXd z = bench_->q_joint().sample(rng);
  const auto d = static_cast<Eigen::Index>(obs_dim());
  put_row(batch.x, row, z.head(d));
  put_row(batch.h, row, z.tail(d));
  batch.vx.set_row(row, Tensor({obs_dim()}).values());
  batch.vh.set_row(row, Tensor({latent_dim()}).values());
  return true;
}

// ---- single-chain operations ----------------------------------------------

Tensor inner_ld_refresh(const GeneratorNet& gen, const Tensor& x, const Tensor& h, double delta_star, Rng& rng,
                        std::size_t steps) {
  if (delta_star < 0.0) throw ConfigError("inner LD step size must be non-negative");
  Tensor hs = h;
  if (delta_star == 0.0) return hs;
  const double noise = std::sqrt(2.0 * delta_star);
  for (std::size_t k = 0; k < steps; ++k) {
    const Tensor g = grad_log_q_joint(gen, x, hs).h;
    if (!g.all_finite()) throw NumericalError("inner LD refresh: non-finite gradient");
    for (std::size_t j = 0; j < hs.size(); ++j) hs[j] += delta_star * g[j] + noise * rng.normal();
  }
  return hs;
}

JointGrad stochastic_gradient(const PotentialNet& pot, const GeneratorNet& gen, const Tensor& x, const Tensor& h,
                              const Tensor& h_star) {
  if (pot.obs_dim() != gen.obs_dim()) throw ShapeError("potential and generator observation widths differ");
  if (h_star.shape() != h.shape()) throw ShapeError("stochastic_gradient: h and h* shapes differ");
  Tensor gx, gh;
  const bool same = h_star == h;
  stochastic_gradient_batch(pot.bind(), pot.num_outputs, gen.bind(), gen.sigma, x, h, same ? nullptr : &h_star, gx,
                            gh);
  if (!gx.all_finite() || !gh.all_finite()) throw NumericalError("stochastic gradient is not finite");
  if (x.rank() == 1) return {gx.row_tensor(0), gh.row_tensor(0)};
  return {gx, gh};
}

ChainState coopnet_revise(const PotentialNet& pot, const GeneratorNet& gen, ChainState state, std::size_t lx,
                          std::size_t lh, double delta, Rng& rng) {
  if (lx == 0 && lh == 0) return state;
  SamplerConfig cfg;
  cfg.kind = SamplerKind::coopnet;
  cfg.steps = 1;
  cfg.schedule = StepSchedule::fixed(delta);
  cfg.coop_lx = lx;
  cfg.coop_lh = lh;
  if (lx == 0 || lh == 0) {
    // one phase only
    NrfTarget target(pot, gen);
    ChainBatch b = ChainBatch::from_states(std::span<const ChainState>(&state, 1));
    Tensor g, unused;
    for (std::size_t j = 0; j < lx; ++j) {
      target.potential_gradient(b.x, g);
      update_block(false, 1.0, delta, b.x, unused, g, 0, rng);
    }
    for (std::size_t j = 0; j < lh; ++j) {
      target.latent_gradient(b.x, b.h, g);
      update_block(false, 1.0, delta, b.h, unused, g, 0, rng);
    }
    b.t += lx;
    return b.chain(0);
  }
  return revise(cfg, NrfTarget(pot, gen), std::move(state), rng);
}

ChainBatch ancestral_batch(const GeneratorNet& gen, std::span<Rng> rngs) {
  const std::size_t n = rngs.size(), dh = gen.latent_dim(), dx = gen.obs_dim();
  if (n == 0) throw ShapeError("ancestral_batch: no chains");
  Tensor h({n, dh});
  for (std::size_t i = 0; i < n; ++i) rngs[i].fill_normal(h.row(i));
  Tensor x = decode_batch(gen.bind(), h);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < dx; ++j) x.at(i, j) += gen.sigma * rngs[i].normal();
  if (!x.all_finite()) throw NumericalError("ancestral sample is not finite");
  return ChainBatch::at(std::move(x), std::move(h));
}

LatentSample sample_model(const PotentialNet& pot, const GeneratorNet& gen, const SamplerConfig& cfg, Rng& rng) {
  ChainBatch b = ancestral_batch(gen, std::span<Rng>(&rng, 1));
  if (cfg.steps > 0) revise(cfg, NrfTarget(pot, gen, cfg.inner_steps, cfg.delta_star), b, std::span<Rng>(&rng, 1));
  return {b.h.row_tensor(0), b.x.row_tensor(0)};
}

Tensor conditional_revise(const PotentialNet& pot, const GeneratorNet& gen, std::optional<std::size_t> label,
                          const SamplerConfig& cfg, Rng& rng, std::size_t* used_label) {
  if (pot.num_outputs < 2) throw ShapeError("conditional revision needs K >= 2");
  if (label && *label >= pot.num_outputs) throw ShapeError("class label out of range");
  ChainBatch b = ancestral_batch(gen, std::span<Rng>(&rng, 1));
  std::size_t y = 0;
  if (label) {
    y = *label;
  } else {
    const Tensor p = classifier_probs(pot, b.x.row_tensor(0));
    y = static_cast<std::size_t>(std::max_element(p.data(), p.data() + p.size()) - p.data());
  }
  if (used_label) *used_label = y;
  if (cfg.steps == 0) return b.x.row_tensor(0);
  ClassConditionalTarget target(pot, gen.latent_dim(), {y});
  SamplerConfig c = cfg;
  if (c.kind == SamplerKind::coopnet) c.kind = SamplerKind::sgld;
  if (c.kind == SamplerKind::ld_exact) c.kind = SamplerKind::sgld;
  if (c.kind == SamplerKind::hmc_exact) c.kind = SamplerKind::sghmc;
  revise(c, target, b, std::span<Rng>(&rng, 1));
  return b.x.row_tensor(0);
}

std::vector<Tensor> interpolate_latent(const GeneratorNet& gen, const Tensor& h1, const Tensor& h2, std::size_t n) {
  if (n < 2) throw ShapeError("interpolate_latent needs at least 2 points");
  if (h1.size() != gen.latent_dim() || h2.size() != gen.latent_dim())
    throw ShapeError("interpolate_latent: latent width mismatch");
  Tensor H({n, gen.latent_dim()});
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(n - 1);
    for (std::size_t j = 0; j < gen.latent_dim(); ++j) H.at(i, j) = (1.0 - t) * h1[j] + t * h2[j];
  }
  Tensor X = decode_batch(gen.bind(), H);
  std::vector<Tensor> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(X.row_tensor(i));
  return out;
}

}  // namespace nrf
