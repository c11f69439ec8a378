#pragma once

#include <array>
#include <span>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "nrf/rng.hpp"
#include "nrf/tensor.hpp"

namespace nrf {

// ---- ring mixtures ----------------------------------------------------------

struct GmmSpec {
  std::vector<std::array<double, 2>> means;
  double sigma = 0.1;
  std::vector<double> weights;
  std::vector<std::size_t> ring;  // ring index of each component (inner ring = 0)

  std::size_t size() const { return means.size(); }
  void validate() const;
};

// n_r rings of n_p components at angles 2 pi k / n_p; odd rings are rotated
// by pi / n_p.
GmmSpec gmm_rings(std::size_t rings, std::size_t per_ring, const std::vector<double>& radii, double sigma);
GmmSpec gmm_preset_32();      // 4 rings x 8, radii 1..4, sigma 0.1
GmmSpec gmm_preset_ssl16();   // 2 rings x 8, radii 1,2, sigma 0.1; class = ring

struct GmmDraws {
  Tensor points;                       // n x 2
  std::vector<std::size_t> component;  // mixture component per point
  std::vector<std::size_t> ring;       // ring (class) per point
};

GmmDraws gmm_sample(const GmmSpec& spec, std::size_t n, Rng& rng);
double gmm_log_density(const GmmSpec& spec, std::span<const double> x);

// ---- Gaussians ----------------------------------------------------------------

class GaussianDist {
 public:
  GaussianDist() = default;
  GaussianDist(Eigen::VectorXd mean, Eigen::MatrixXd cov);

  std::size_t dim() const { return static_cast<std::size_t>(mean_.size()); }
  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::MatrixXd& cov() const { return cov_; }
  const Eigen::LLT<Eigen::MatrixXd>& chol() const { return llt_; }
  double log_det() const { return log_det_; }
  const Eigen::MatrixXd& precision() const { return precision_; }

  double log_density(const Eigen::VectorXd& x) const;
  // -cov^{-1} (x - mean)
  Eigen::VectorXd grad_log_density(const Eigen::VectorXd& x) const;
  Eigen::VectorXd sample(Rng& rng) const;

 private:
  Eigen::VectorXd mean_;
  Eigen::MatrixXd cov_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::MatrixXd lower_;
  Eigen::MatrixXd precision_;
  double log_det_ = 0.0;
};

// A A^T + dim I with A ~ N(0,1) entries, rescaled to unit mean diagonal.
Eigen::MatrixXd random_spd(std::size_t dim, Rng& rng);

inline constexpr double kEmpiricalCovJitter = 1e-8;

// Mean and 1/N covariance of the rows, plus kEmpiricalCovJitter * I.
GaussianDist fit_gaussian(const Eigen::MatrixXd& rows);

// KL(p || q).
double kl_gaussians(const GaussianDist& p, const GaussianDist& q);

// Gaussian stand-ins for the potential and the generator: p_x over x (dim d),
// q_joint over (x, h) (dim 2d), and the sampling target
// pi(x, h) = p_x(x) q(h | x) in closed form.
class GaussianJointBenchmark {
 public:
  GaussianJointBenchmark(GaussianDist p_x, GaussianDist q_joint);

  std::size_t dim() const { return p_x_.dim(); }
  const GaussianDist& p_x() const { return p_x_; }
  const GaussianDist& q_joint() const { return q_joint_; }
  const GaussianDist& q_x() const { return q_x_; }
  const GaussianDist& target() const { return target_; }
  // q(h | x) = N(cond_offset + cond_map x, cond_cov)
  const Eigen::MatrixXd& cond_map() const { return cond_map_; }
  const Eigen::VectorXd& cond_offset() const { return cond_offset_; }
  const Eigen::MatrixXd& cond_cov() const { return cond_cov_; }
  const Eigen::MatrixXd& cond_precision() const { return cond_precision_; }

  Eigen::VectorXd grad_log_px(const Eigen::VectorXd& x) const;
  // Gradient of log q(x, h) split into the x and h blocks.
  std::pair<Eigen::VectorXd, Eigen::VectorXd> grad_log_q_joint(const Eigen::VectorXd& x,
                                                              const Eigen::VectorXd& h) const;
  // Exact d/d(x,h) log pi(x, h).
  std::pair<Eigen::VectorXd, Eigen::VectorXd> exact_grad(const Eigen::VectorXd& x,
                                                         const Eigen::VectorXd& h) const;
  Eigen::VectorXd sample_conditional_h(const Eigen::VectorXd& x, Rng& rng) const;

 private:
  GaussianDist p_x_, q_joint_, q_x_, target_;
  Eigen::MatrixXd cond_map_, cond_cov_, cond_lower_, cond_precision_;
  Eigen::VectorXd cond_offset_;
};

// Random means ~ N(0, I) and random_spd covariances for p_x (d) and q_joint (2d).
GaussianJointBenchmark benchmark_target(std::size_t d, Rng& rng);

}  // namespace nrf
