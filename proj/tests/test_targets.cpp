#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <set>

#include <Eigen/LU>

#include "nrf/error.hpp"
#include "nrf/targets.hpp"

namespace nrf {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

TEST(GmmRings, SingleRingLayout) {
  const GmmSpec s = gmm_rings(1, 4, {1.0}, 0.1);
  ASSERT_EQ(s.size(), 4u);
  const double expect[4][2] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_NEAR(s.means[k][0], expect[k][0], 1e-15);
    EXPECT_NEAR(s.means[k][1], expect[k][1], 1e-15);
  }
}

TEST(GmmRings, OddRingsAreStaggered) {
  const GmmSpec s = gmm_rings(2, 4, {1.0, 2.0}, 0.1);
  const double a = std::numbers::pi / 4;
  EXPECT_NEAR(s.means[4][0], 2 * std::cos(a), 1e-14);
  EXPECT_NEAR(s.means[4][1], 2 * std::sin(a), 1e-14);
  EXPECT_EQ(s.ring[3], 0u);
  EXPECT_EQ(s.ring[4], 1u);
}

TEST(GmmRings, Preset32) {
  const GmmSpec s = gmm_preset_32();
  ASSERT_EQ(s.size(), 32u);
  EXPECT_EQ(s.sigma, 0.1);
  double min_d = 1e300;
  for (std::size_t i = 0; i < 32; ++i)
    for (std::size_t j = i + 1; j < 32; ++j)
      min_d = std::min(min_d, std::hypot(s.means[i][0] - s.means[j][0], s.means[i][1] - s.means[j][1]));
  // 8 points on the unit circle: chord 2 sin(pi/8).
  EXPECT_NEAR(min_d, 2 * std::sin(std::numbers::pi / 8), 1e-12);
  EXPECT_GE(min_d, 0.7);
  EXPECT_GT(min_d, 7 * s.sigma);
  for (double w : s.weights) EXPECT_DOUBLE_EQ(w, 1.0 / 32);
}

TEST(GmmRings, PresetSsl) {
  const GmmSpec s = gmm_preset_ssl16();
  ASSERT_EQ(s.size(), 16u);
  for (std::size_t k = 0; k < 16; ++k) {
    const double r = std::hypot(s.means[k][0], s.means[k][1]);
    EXPECT_NEAR(r, s.ring[k] == 0 ? 1.0 : 2.0, 1e-14);
  }
}

TEST(GmmRings, Errors) {
  EXPECT_THROW(gmm_rings(2, 4, {1.0}, 0.1), ShapeError);
  EXPECT_THROW(gmm_rings(1, 0, {1.0}, 0.1), ShapeError);
}

TEST(GmmSample, ZeroSigmaGivesMeans) {
  GmmSpec s = gmm_preset_32();
  s.sigma = 0.0;
  Rng rng(1);
  const GmmDraws d = gmm_sample(s, 200, rng);
  for (std::size_t i = 0; i < 200; ++i) {
    EXPECT_EQ(d.points.at(i, 0), s.means[d.component[i]][0]);
    EXPECT_EQ(d.points.at(i, 1), s.means[d.component[i]][1]);
    EXPECT_EQ(d.ring[i], s.ring[d.component[i]]);
  }
}

TEST(GmmSample, FrequenciesAreUniform) {
  const GmmSpec s = gmm_preset_32();
  Rng rng(2);
  const std::size_t n = 64000;
  const GmmDraws d = gmm_sample(s, n, rng);
  std::vector<double> count(32, 0.0);
  for (std::size_t c : d.component) count[c] += 1;
  for (double c : count) EXPECT_LT(std::abs(c / n - 1.0 / 32), 4.0 / std::sqrt(static_cast<double>(n)));
}

TEST(GmmSample, Replay) {
  Rng a(3), b(3);
  const GmmDraws x = gmm_sample(gmm_preset_32(), 50, a), y = gmm_sample(gmm_preset_32(), 50, b);
  EXPECT_EQ(x.points, y.points);
  EXPECT_EQ(x.component, y.component);
}

TEST(GmmDensity, Examples) {
  GmmSpec one = gmm_rings(1, 1, {1.0}, 0.2);
  const double at_mean = gmm_log_density(one, std::vector<double>{1.0, 0.0});
  EXPECT_NEAR(at_mean, -std::log(2 * std::numbers::pi * 0.04), 1e-13);

  const GmmSpec two = gmm_rings(1, 2, {1.0}, 0.3);
  // Equidistant from (1,0) and (-1,0): twice the single-component density at half weight.
  const std::vector<double> x{0.0, 0.4};
  const double single = -std::log(2 * std::numbers::pi * 0.09) - (1.0 + 0.16) / (2 * 0.09);
  EXPECT_NEAR(gmm_log_density(two, x), single, 1e-13);
  EXPECT_THROW(gmm_log_density(two, std::vector<double>{1.0}), ShapeError);
}

TEST(GmmDensity, IntegratesToOne) {
  const GmmSpec s = gmm_rings(2, 3, {0.5, 1.0}, 0.3);
  const double lo = -3.5, hi = 3.5;
  const std::size_t n = 700;
  const double h = (hi - lo) / n;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      total += std::exp(gmm_log_density(s, std::vector<double>{lo + (i + 0.5) * h, lo + (j + 0.5) * h}));
  EXPECT_NEAR(total * h * h, 1.0, 1e-3);
}

TEST(RandomSpd, Properties) {
  Rng rng(4);
  const MatrixXd one = random_spd(1, rng);
  EXPECT_GT(one(0, 0), 0.0);
  for (int k = 0; k < 100; ++k) {
    const std::size_t dim = 1 + rng.index(100);
    const MatrixXd c = random_spd(dim, rng);
    EXPECT_EQ(c, c.transpose());
    EXPECT_EQ(Eigen::LLT<MatrixXd>(c).info(), Eigen::Success);
    EXPECT_NEAR(c.diagonal().mean(), 1.0, 1e-12);
  }
  EXPECT_THROW(random_spd(0, rng), ShapeError);
}

TEST(GaussianDist, RejectsBadCovariance) {
  MatrixXd asym(2, 2);
  asym << 1, 0.5, 0.4, 1;
  EXPECT_THROW(GaussianDist(VectorXd::Zero(2), asym), NumericalError);
  MatrixXd indef(2, 2);
  indef << 1, 2, 2, 1;
  EXPECT_THROW(GaussianDist(VectorXd::Zero(2), indef), NumericalError);
  EXPECT_THROW(GaussianDist(VectorXd::Zero(3), MatrixXd::Identity(2, 2)), ShapeError);
}

TEST(KlGaussians, ClosedForms) {
  Rng rng(5);
  const GaussianDist p(VectorXd::Random(4), random_spd(4, rng));
  EXPECT_NEAR(kl_gaussians(p, p), 0.0, 1e-10);
  const GaussianDist a(VectorXd::Zero(1), MatrixXd::Identity(1, 1));
  const GaussianDist b(VectorXd::Ones(1), MatrixXd::Identity(1, 1));
  EXPECT_NEAR(kl_gaussians(a, b), 0.5, 1e-14);
  const GaussianDist c(VectorXd::Zero(1), 2 * MatrixXd::Identity(1, 1));
  EXPECT_NEAR(kl_gaussians(c, a), 0.5 * (2 - 1 + std::log(0.5)), 1e-14);
  EXPECT_NEAR(kl_gaussians(c, a), 0.1534, 1e-4);
  EXPECT_THROW(kl_gaussians(a, p), ShapeError);
}

TEST(KlGaussians, NonNegative) {
  Rng rng(6);
  for (int k = 0; k < 50; ++k) {
    const std::size_t d = 1 + rng.index(8);
    VectorXd m1(d), m2(d);
    for (std::size_t i = 0; i < d; ++i) m1[i] = rng.normal(), m2[i] = rng.normal();
    const GaussianDist p(m1, random_spd(d, rng)), q(m2, random_spd(d, rng));
    EXPECT_GE(kl_gaussians(p, q), 0.0);
  }
}

TEST(FitGaussian, MaximumLikelihoodMoments) {
  MatrixXd rows(4, 2);
  rows << 0, 0, 2, 0, 0, 2, 2, 2;
  const GaussianDist g = fit_gaussian(rows);
  EXPECT_NEAR(g.mean()[0], 1.0, 1e-15);
  EXPECT_NEAR(g.cov()(0, 0), 1.0 + kEmpiricalCovJitter, 1e-15);
  EXPECT_NEAR(g.cov()(0, 1), 0.0, 1e-15);
}

TEST(Benchmark, IndependentCaseIsStandardNormal) {
  const GaussianDist px(VectorXd::Zero(1), MatrixXd::Identity(1, 1));
  const GaussianDist qj(VectorXd::Zero(2), MatrixXd::Identity(2, 2));
  const GaussianJointBenchmark b(px, qj);
  EXPECT_LT((b.target().mean()).norm(), 1e-15);
  EXPECT_LT((b.target().cov() - MatrixXd::Identity(2, 2)).norm(), 1e-14);
}

TEST(Benchmark, ExactGradient) {
  Rng rng(7);
  const GaussianJointBenchmark b = benchmark_target(3, rng);
  const VectorXd mu = b.target().mean();
  const auto [gx0, gh0] = b.exact_grad(mu.head(3), mu.tail(3));
  EXPECT_LT(gx0.norm() + gh0.norm(), 1e-10);

  VectorXd z(6);
  for (int i = 0; i < 6; ++i) z[i] = rng.normal();
  const auto [gx, gh] = b.exact_grad(z.head(3), z.tail(3));
  VectorXd g(6);
  g << gx, gh;
  // log pi = log p_x(x) + log q(x, h) - log q(x)
  auto log_pi = [&](const VectorXd& v) {
    return b.p_x().log_density(v.head(3)) + b.q_joint().log_density(v) - b.q_x().log_density(v.head(3));
  };
  const double eps = 1e-5;
  for (int i = 0; i < 6; ++i) {
    VectorXd up = z, dn = z;
    up[i] += eps;
    dn[i] -= eps;
    const double fd = (log_pi(up) - log_pi(dn)) / (2 * eps);
    EXPECT_NEAR(g[i], fd, 1e-6 * std::max(1.0, std::abs(fd)));
    EXPECT_NEAR(b.target().grad_log_density(z)[i], fd, 1e-6 * std::max(1.0, std::abs(fd)));
  }
}

TEST(Benchmark, ComposedMomentsMatchAncestralSampling) {
  for (std::size_t d : {1, 4, 10}) {
    Rng rng(100 + d);
    const GaussianJointBenchmark b = benchmark_target(d, rng);
    const std::size_t n = 100000;
    MatrixXd rows(n, 2 * d);
    for (std::size_t i = 0; i < n; ++i) {
      const VectorXd x = b.p_x().sample(rng);
      rows.row(i) << x.transpose(), b.sample_conditional_h(x, rng).transpose();
    }
    EXPECT_LT(kl_gaussians(fit_gaussian(rows), b.target()), 0.05) << "d=" << d;
  }
}

TEST(Benchmark, ConditionalMatchesPartition) {
  Rng rng(8);
  const GaussianJointBenchmark b = benchmark_target(2, rng);
  const MatrixXd& S = b.q_joint().cov();
  const MatrixXd Sxx = S.topLeftCorner(2, 2), Shx = S.bottomLeftCorner(2, 2), Shh = S.bottomRightCorner(2, 2);
  EXPECT_LT((b.cond_map() - Shx * Sxx.inverse()).norm(), 1e-10);
  EXPECT_LT((b.cond_cov() - (Shh - Shx * Sxx.inverse() * Shx.transpose())).norm(), 1e-10);
  EXPECT_LT((b.q_x().cov() - Sxx).norm(), 1e-14);
}

}  // namespace
}  // namespace nrf
