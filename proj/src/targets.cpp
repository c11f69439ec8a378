#include "nrf/targets.hpp"

#include <cmath>
#include <numbers>

#include "nrf/autodiff.hpp"
#include "nrf/error.hpp"

namespace nrf {

void GmmSpec::validate() const {
  if (means.empty()) throw ShapeError("mixture needs at least one component");
  if (!(sigma >= 0.0)) throw ShapeError("mixture component std must be non-negative");
  if (weights.size() != means.size()) throw ShapeError("one weight per component required");
  double total = 0.0;
  for (double w : weights) total += w;
  if (std::abs(total - 1.0) > 1e-12) throw ShapeError("mixture weights must sum to 1");
}

GmmSpec gmm_rings(std::size_t rings, std::size_t per_ring, const std::vector<double>& radii, double sigma) {
  if (radii.size() != rings) throw ShapeError("gmm_rings: need one radius per ring");
  if (per_ring == 0 || rings == 0) throw ShapeError("gmm_rings: need at least one component");
  GmmSpec spec;
  spec.sigma = sigma;
  const double step = 2.0 * std::numbers::pi / static_cast<double>(per_ring);
  for (std::size_t r = 0; r < rings; ++r) {
    const double offset = (r % 2 == 1) ? step / 2.0 : 0.0;
    for (std::size_t k = 0; k < per_ring; ++k) {
      const double angle = step * static_cast<double>(k) + offset;
      spec.means.push_back({radii[r] * std::cos(angle), radii[r] * std::sin(angle)});
      spec.ring.push_back(r);
    }
  }
  spec.weights.assign(spec.means.size(), 1.0 / static_cast<double>(spec.means.size()));
  return spec;
}

GmmSpec gmm_preset_32() { return gmm_rings(4, 8, {1.0, 2.0, 3.0, 4.0}, 0.1); }
GmmSpec gmm_preset_ssl16() { return gmm_rings(2, 8, {1.0, 2.0}, 0.1); }

GmmDraws gmm_sample(const GmmSpec& spec, std::size_t n, Rng& rng) {
  spec.validate();
  GmmDraws out;
  out.points = Tensor({n, 2});
  out.component.resize(n);
  out.ring.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = rng.index(spec.size());
    out.component[i] = c;
    out.ring[i] = spec.ring.empty() ? 0 : spec.ring[c];
    out.points.at(i, 0) = spec.means[c][0] + spec.sigma * rng.normal();
    out.points.at(i, 1) = spec.means[c][1] + spec.sigma * rng.normal();
  }
  return out;
}

double gmm_log_density(const GmmSpec& spec, std::span<const double> x) {
  if (x.size() != 2) throw ShapeError("gmm_log_density expects a 2-D point");
  const double var = spec.sigma * spec.sigma;
  std::vector<double> terms(spec.size());
  for (std::size_t c = 0; c < spec.size(); ++c) {
    const double dx = x[0] - spec.means[c][0], dy = x[1] - spec.means[c][1];
    terms[c] = std::log(spec.weights[c]) - std::log(2.0 * std::numbers::pi * var) - 0.5 * (dx * dx + dy * dy) / var;
  }
  return logsumexp(terms);
}

// ---- Gaussians ----------------------------------------------------------------

GaussianDist::GaussianDist(Eigen::VectorXd mean, Eigen::MatrixXd cov) : mean_(std::move(mean)), cov_(std::move(cov)) {
  if (cov_.rows() != cov_.cols() || cov_.rows() != mean_.size())
    throw ShapeError("gaussian: mean and covariance dimensions differ");
  const double scale = std::max(1.0, cov_.cwiseAbs().maxCoeff());
  if ((cov_ - cov_.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw NumericalError("gaussian: covariance is not symmetric");
  llt_.compute(cov_);
  if (llt_.info() != Eigen::Success) throw NumericalError("gaussian: covariance is not positive definite");
  lower_ = llt_.matrixL();
  log_det_ = 2.0 * lower_.diagonal().array().log().sum();
  precision_ = llt_.solve(Eigen::MatrixXd::Identity(cov_.rows(), cov_.cols()));
  precision_ = 0.5 * (precision_ + precision_.transpose()).eval();
}

double GaussianDist::log_density(const Eigen::VectorXd& x) const {
  const Eigen::VectorXd z = llt_.matrixL().solve(x - mean_);
  const double k = static_cast<double>(dim());
  return -0.5 * z.squaredNorm() - 0.5 * log_det_ - 0.5 * k * std::log(2.0 * std::numbers::pi);
}

Eigen::VectorXd GaussianDist::grad_log_density(const Eigen::VectorXd& x) const {
  return -llt_.solve(x - mean_);
}

Eigen::VectorXd GaussianDist::sample(Rng& rng) const {
  Eigen::VectorXd z(mean_.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
  return mean_ + lower_ * z;
}

Eigen::MatrixXd random_spd(std::size_t dim, Rng& rng) {
  if (dim == 0) throw ShapeError("random_spd: dim must be positive");
  const auto n = static_cast<Eigen::Index>(dim);
  Eigen::MatrixXd a(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) a(i, j) = rng.normal();
  Eigen::MatrixXd c = a * a.transpose();
  c.diagonal().array() += static_cast<double>(dim);
  c = 0.5 * (c + c.transpose()).eval();
  c /= c.diagonal().mean();
  return c;
}

GaussianDist fit_gaussian(const Eigen::MatrixXd& rows) {
  if (rows.rows() < 1) throw ShapeError("fit_gaussian: no samples");
  const Eigen::VectorXd mean = rows.colwise().mean().transpose();
  const Eigen::MatrixXd centered = rows.rowwise() - mean.transpose();
  Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(rows.rows());
  cov = 0.5 * (cov + cov.transpose()).eval();
  cov.diagonal().array() += kEmpiricalCovJitter;
  return GaussianDist(mean, cov);
}

double kl_gaussians(const GaussianDist& p, const GaussianDist& q) {
  if (p.dim() != q.dim()) throw ShapeError("kl_gaussians: dimension mismatch");
  const double k = static_cast<double>(p.dim());
  const Eigen::MatrixXd sol = q.chol().solve(p.cov());
  const Eigen::VectorXd diff = q.mean() - p.mean();
  const double quad = diff.dot(q.chol().solve(diff));
  return 0.5 * (sol.trace() + quad - k + q.log_det() - p.log_det());
}

// ---- Gaussian sampler benchmark ----------------------------------------------

GaussianJointBenchmark::GaussianJointBenchmark(GaussianDist p_x, GaussianDist q_joint)
    : p_x_(std::move(p_x)), q_joint_(std::move(q_joint)) {
  const auto d = static_cast<Eigen::Index>(p_x_.dim());
  if (q_joint_.dim() != 2 * p_x_.dim()) throw ShapeError("benchmark: q_joint must have twice the dim of p_x");
  const Eigen::MatrixXd& qc = q_joint_.cov();
  const Eigen::MatrixXd sxx = qc.topLeftCorner(d, d);
  const Eigen::MatrixXd shx = qc.bottomLeftCorner(d, d);
  const Eigen::MatrixXd shh = qc.bottomRightCorner(d, d);
  const Eigen::VectorXd mx = q_joint_.mean().head(d);
  const Eigen::VectorXd mh = q_joint_.mean().tail(d);
  q_x_ = GaussianDist(mx, sxx);
  // A = S_hx S_xx^{-1}; S = S_hh - A S_xh
  cond_map_ = q_x_.chol().solve(shx.transpose()).transpose();
  Eigen::MatrixXd s = shh - cond_map_ * shx.transpose();
  cond_cov_ = 0.5 * (s + s.transpose());
  cond_offset_ = mh - cond_map_ * mx;
  Eigen::LLT<Eigen::MatrixXd> cl(cond_cov_);
  if (cl.info() != Eigen::Success) throw NumericalError("benchmark: conditional covariance is not SPD");
  cond_lower_ = cl.matrixL();
  cond_precision_ = cl.solve(Eigen::MatrixXd::Identity(d, d));

  const Eigen::MatrixXd& sp = p_x_.cov();
  Eigen::VectorXd tm(2 * d);
  tm.head(d) = p_x_.mean();
  tm.tail(d) = cond_offset_ + cond_map_ * p_x_.mean();
  Eigen::MatrixXd tc(2 * d, 2 * d);
  tc.topLeftCorner(d, d) = sp;
  tc.bottomLeftCorner(d, d) = cond_map_ * sp;
  tc.topRightCorner(d, d) = tc.bottomLeftCorner(d, d).transpose();
  Eigen::MatrixXd hh = cond_map_ * sp * cond_map_.transpose() + cond_cov_;
  tc.bottomRightCorner(d, d) = 0.5 * (hh + hh.transpose());
  target_ = GaussianDist(tm, tc);
}

Eigen::VectorXd GaussianJointBenchmark::grad_log_px(const Eigen::VectorXd& x) const {
  return p_x_.grad_log_density(x);
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> GaussianJointBenchmark::grad_log_q_joint(const Eigen::VectorXd& x,
                                                                                    const Eigen::VectorXd& h) const {
  const auto d = static_cast<Eigen::Index>(dim());
  Eigen::VectorXd z(2 * d);
  z << x, h;
  const Eigen::VectorXd g = q_joint_.grad_log_density(z);
  return {g.head(d), g.tail(d)};
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> GaussianJointBenchmark::exact_grad(const Eigen::VectorXd& x,
                                                                              const Eigen::VectorXd& h) const {
  const Eigen::VectorXd r = cond_precision_ * (h - cond_offset_ - cond_map_ * x);
  Eigen::VectorXd gx = p_x_.grad_log_density(x) + cond_map_.transpose() * r;
  return {gx, -r};
}

Eigen::VectorXd GaussianJointBenchmark::sample_conditional_h(const Eigen::VectorXd& x, Rng& rng) const {
  Eigen::VectorXd z(static_cast<Eigen::Index>(dim()));
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
  return cond_offset_ + cond_map_ * x + cond_lower_ * z;
}

GaussianJointBenchmark benchmark_target(std::size_t d, Rng& rng) {
  if (d == 0) throw ShapeError("benchmark_target: d must be positive");
  const auto n = static_cast<Eigen::Index>(d);
  Eigen::VectorXd mp(n), mq(2 * n);
  for (Eigen::Index i = 0; i < n; ++i) mp[i] = rng.normal();
  for (Eigen::Index i = 0; i < 2 * n; ++i) mq[i] = rng.normal();
  Eigen::MatrixXd cp = random_spd(d, rng);
  Eigen::MatrixXd cq = random_spd(2 * d, rng);
  return GaussianJointBenchmark(GaussianDist(mp, cp), GaussianDist(mq, cq));
}

}  // namespace nrf
