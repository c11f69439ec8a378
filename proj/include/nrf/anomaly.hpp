#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

#include "nrf/evaluation.hpp"
#include "nrf/training.hpp"

namespace nrf {

// u(x) per row; higher means more normal.
std::vector<double> score(const PotentialNet& pot, const Tensor& X);
double score_one(const PotentialNet& pot, const Tensor& x);

struct AnomalyRecipe {
  TrainConfig train;
  NetworkSpec pot_spec;
  NetworkSpec gen_spec;
  double sigma = 0.1;
  Tensor train_x;                 // normal class only
  Tensor test_x;
  std::vector<bool> test_labels;  // true = anomaly
  double quantile = 0.2;
};

struct AnomalyResult {
  TrainResult trained;
  std::vector<double> scores;
  Prf prf;
  double auc = 0.0;
};

AnomalyResult run_anomaly(const AnomalyRecipe& recipe, std::ostream* metric_log = nullptr);

// Inner two rings of the 32-mode mixture are normal, the outer two are
// anomalous. The test set holds n_test points with an anomaly fraction equal
// to `quantile`.
AnomalyRecipe synthetic_anomaly_recipe(std::uint64_t seed, std::size_t n_train = 2000, std::size_t n_test = 1000,
                                       double quantile = 0.2);

// Feature columns plus an optional label column (non-zero = anomaly).
struct FeatureData {
  Tensor x;
  std::vector<bool> labels;  // empty without a label column
};
FeatureData load_feature_csv(const std::filesystem::path& path, std::optional<std::size_t> label_column);

}  // namespace nrf
