#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "nrf/samplers.hpp"
#include "nrf/targets.hpp"

namespace nrf {

// ---- mode coverage -----------------------------------------------------------

inline constexpr double kRealismRadiusSq = 0.02;

struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation (n - 1); 0 for a single value
};
MeanSd mean_sd(std::span<const double> v);

struct CoverageCount {
  std::size_t covered = 0;
  double ratio = 0.0;
};
// A mode is covered when some sample lies within radius_sq of it; a sample is
// realistic when its nearest mode is within radius_sq.
CoverageCount coverage_once(const Tensor& samples, const std::vector<std::array<double, 2>>& modes,
                            double radius_sq = kRealismRadiusSq);

struct ModeCoverageReport {
  MeanSd covered;
  MeanSd ratio;
  std::vector<CoverageCount> runs;
};

// source(rep) returns the samples of repetition rep (one row per sample).
using SampleSource = std::function<Tensor(std::size_t rep)>;
ModeCoverageReport mode_coverage(const SampleSource& source, const std::vector<std::array<double, 2>>& modes,
                                 std::size_t reps = 100, double radius_sq = kRealismRadiusSq);

// ---- sampler benchmark -------------------------------------------------------

struct KlPoint {
  std::size_t iteration = 0;
  double kl = 0.0;
};

struct KlCurve {
  SamplerKind kind = SamplerKind::sgld;
  std::size_t chains = 0;
  std::size_t steps = 0;
  StepSchedule schedule;
  std::vector<KlPoint> points;
  std::size_t resets = 0;

  double initial() const { return points.front().kl; }
  double final() const { return points.back().kl; }
};

// About `count` log-spaced iterations in [0, T]; always contains 0 and T.
std::vector<std::size_t> log_checkpoints(std::size_t T, std::size_t count = 20);

// Chains start from ancestral draws of q_joint. At every checkpoint a Gaussian
// is fitted to the K joint states and KL(fit || pi) is recorded. One coopnet
// call counts as Lx iterations, so its checkpoints are rounded up to
// multiples of Lx. cfg.steps is ignored.
KlCurve sampler_benchmark(const GaussianJointBenchmark& bench, const SamplerConfig& cfg, std::size_t chains,
                          std::size_t T, const std::vector<std::size_t>& checkpoints, std::uint64_t seed);

// KL(fit || pi) for K exact draws from pi: the finite-sample floor.
double kl_floor(const GaussianJointBenchmark& bench, std::size_t chains, Rng& rng);

// ---- anomaly metrics ----------------------------------------------------------

// labels: true = anomaly. Probability that a random anomaly scores below a
// random normal point, ties counted as one half.
double roc_auc(std::span<const double> scores, const std::vector<bool>& labels);

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};
// Flags the floor(quantile * N) lowest scores (stable order on ties).
Prf prf_at_quantile(std::span<const double> scores, const std::vector<bool>& labels, double quantile = 0.2);

}  // namespace nrf
