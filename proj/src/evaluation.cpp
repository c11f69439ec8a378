#include "nrf/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "nrf/chains.hpp"
#include "nrf/error.hpp"

namespace nrf {

MeanSd mean_sd(std::span<const double> v) {
  if (v.empty()) return {};
  const double n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  if (v.size() == 1) return {mean, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / (n - 1.0))};
}

CoverageCount coverage_once(const Tensor& samples, const std::vector<std::array<double, 2>>& modes,
                            double radius_sq) {
  if (modes.empty()) throw ShapeError("mode_coverage: no modes");
  const Tensor S = samples.as_matrix();
  if (S.cols() != 2) throw ShapeError("mode_coverage: samples must be 2-D");
  std::vector<bool> hit(modes.size(), false);
  std::size_t realistic = 0;
  for (std::size_t i = 0; i < S.rows(); ++i) {
    const double x = S.at(i, 0), y = S.at(i, 1);
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t m = 0; m < modes.size(); ++m) {
      const double dx = x - modes[m][0], dy = y - modes[m][1];
      const double d2 = dx * dx + dy * dy;
      if (d2 < radius_sq) hit[m] = true;
      best = std::min(best, d2);
    }
    if (best < radius_sq) ++realistic;
  }
  CoverageCount c;
  c.covered = static_cast<std::size_t>(std::count(hit.begin(), hit.end(), true));
  c.ratio = S.rows() == 0 ? 0.0 : static_cast<double>(realistic) / static_cast<double>(S.rows());
  return c;
}

ModeCoverageReport mode_coverage(const SampleSource& source, const std::vector<std::array<double, 2>>& modes,
                                 std::size_t reps, double radius_sq) {
  if (reps == 0) throw ShapeError("mode_coverage: reps must be positive");
  ModeCoverageReport r;
  std::vector<double> cov, rat;
  for (std::size_t k = 0; k < reps; ++k) {
    r.runs.push_back(coverage_once(source(k), modes, radius_sq));
    cov.push_back(static_cast<double>(r.runs.back().covered));
    rat.push_back(r.runs.back().ratio);
  }
  r.covered = mean_sd(cov);
  r.ratio = mean_sd(rat);
  return r;
}

std::vector<std::size_t> log_checkpoints(std::size_t T, std::size_t count) {
  std::vector<std::size_t> out{0};
  if (T == 0) return out;
  const std::size_t n = std::max<std::size_t>(count, 2);
  for (std::size_t i = 0; i < n; ++i) {
    const double f = static_cast<double>(i) / static_cast<double>(n - 1);
    const auto t = static_cast<std::size_t>(std::llround(std::pow(static_cast<double>(T), f)));
    if (t > out.back()) out.push_back(std::min(t, T));
  }
  if (out.back() != T) out.push_back(T);
  return out;
}

namespace {

constexpr std::uint64_t kBenchTag = 0x62656e6368ULL;

double fit_kl(const ChainBatch& chains, const GaussianDist& target) {
  const std::size_t n = chains.size(), d = chains.x.cols();
  Eigen::MatrixXd Z(n, 2 * d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      Z(i, j) = chains.x.at(i, j);
      Z(i, d + j) = chains.h.at(i, j);
    }
  return kl_gaussians(fit_gaussian(Z), target);
}

}  // namespace

KlCurve sampler_benchmark(const GaussianJointBenchmark& bench, const SamplerConfig& cfg, std::size_t chains,
                          std::size_t T, const std::vector<std::size_t>& checkpoints, std::uint64_t seed) {
  cfg.validate();
  const std::size_t d = bench.dim();
  if (chains < 2 * d + 1) throw ConfigError("sampler benchmark needs at least dim(pi) + 1 chains");
  const bool coop = cfg.kind == SamplerKind::coopnet;
  const std::size_t unit = coop ? cfg.coop_lx : 1;

  std::vector<std::size_t> marks;
  for (std::size_t c : checkpoints) {
    const std::size_t r = std::min((c + unit - 1) / unit * unit, (T + unit - 1) / unit * unit);
    if (marks.empty() || r > marks.back()) marks.push_back(r);
  }
  if (marks.empty() || marks.front() != 0) marks.insert(marks.begin(), 0);

  std::vector<Rng> rngs = chain_streams(seed, kBenchTag, chains);
  Tensor X({chains, d}), H({chains, d});
  for (std::size_t i = 0; i < chains; ++i) {
    const Eigen::VectorXd z = bench.q_joint().sample(rngs[i]);
    for (std::size_t j = 0; j < d; ++j) {
      X.at(i, j) = z[static_cast<Eigen::Index>(j)];
      H.at(i, j) = z[static_cast<Eigen::Index>(d + j)];
    }
  }
  ChainBatch batch = ChainBatch::at(std::move(X), std::move(H));
  GaussianBenchTarget target(bench, uses_exact_gradient(cfg.kind), cfg.inner_steps, cfg.delta_star);

  KlCurve curve;
  curve.kind = cfg.kind;
  curve.chains = chains;
  curve.steps = T;
  curve.schedule = cfg.schedule;
  std::size_t done = 0;
  for (std::size_t m : marks) {
    if (m > done) {
      SamplerConfig seg = cfg;
      seg.steps = (m - done) / unit;
      curve.resets += revise_parallel(seg, target, batch, rngs).resets;
      done = m;
    }
    curve.points.push_back({m, fit_kl(batch, bench.target())});
  }
  return curve;
}

double kl_floor(const GaussianJointBenchmark& bench, std::size_t chains, Rng& rng) {
  const auto& pi = bench.target();
  Eigen::MatrixXd Z(chains, pi.dim());
  for (std::size_t i = 0; i < chains; ++i) Z.row(static_cast<Eigen::Index>(i)) = pi.sample(rng).transpose();
  return kl_gaussians(fit_gaussian(Z), pi);
}

double roc_auc(std::span<const double> scores, const std::vector<bool>& labels) {
  if (scores.size() != labels.size()) throw ShapeError("roc_auc: scores and labels differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Midranks in descending-score order so that anomalies (low scores) get
  // high ranks; AUC = P(anomaly < normal).
  double rank_sum = 0.0;
  std::size_t n_anom = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double mid = static_cast<double>(n - i) - 0.5 * static_cast<double>(j - i - 1);
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]]) rank_sum += mid;
    i = j;
  }
  for (bool l : labels) n_anom += l ? 1 : 0;
  const std::size_t n_norm = n - n_anom;
  if (n_anom == 0 || n_norm == 0) throw ShapeError("roc_auc needs both classes");
  const double a = static_cast<double>(n_anom), b = static_cast<double>(n_norm);
  return (rank_sum - a * (a + 1.0) / 2.0) / (a * b);
}

Prf prf_at_quantile(std::span<const double> scores, const std::vector<bool>& labels, double quantile) {
  if (scores.empty()) throw ShapeError("prf_at_quantile: empty input");
  if (scores.size() != labels.size()) throw ShapeError("prf_at_quantile: scores and labels differ in length");
  if (!(quantile > 0.0 && quantile < 1.0)) throw ConfigError("quantile must lie in (0, 1)");
  const std::size_t n = scores.size();
  const auto k = static_cast<std::size_t>(std::floor(quantile * static_cast<double>(n)));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::size_t tp = 0, positives = 0;
  for (std::size_t i = 0; i < k; ++i) tp += labels[order[i]] ? 1 : 0;
  for (bool l : labels) positives += l ? 1 : 0;
  Prf r;
  r.precision = k == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(k);
  r.recall = positives == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(positives);
  r.f1 = r.precision + r.recall > 0.0 ? 2.0 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  return r;
}

}  // namespace nrf
