#include "nrf/anomaly.hpp"

#include <cmath>

#include "nrf/error.hpp"
#include "nrf/io.hpp"

namespace nrf {

std::vector<double> score(const PotentialNet& pot, const Tensor& X) {
  const Tensor M = X.as_matrix();
  if (M.cols() != pot.obs_dim()) throw ShapeError("score: feature width does not match the potential");
  return eval_potential(pot.bind(), pot.num_outputs, M, false).value;
}

double score_one(const PotentialNet& pot, const Tensor& x) { return score(pot, x).front(); }

AnomalyResult run_anomaly(const AnomalyRecipe& recipe, std::ostream* metric_log) {
  if (recipe.test_labels.size() != recipe.test_x.as_matrix().rows())
    throw ConfigError("anomaly test set: one label per row required");
  Rng init = Rng::stream(recipe.train.seed, 0x696e6974ULL);
  TrainState state = init_state(recipe.pot_spec, 1, recipe.gen_spec, recipe.sigma, init);
  AnomalyResult out;
  out.trained = train(recipe.train, std::move(state), {recipe.train_x, {}}, {}, metric_log);
  out.scores = score(out.trained.state.pot, recipe.test_x);
  out.auc = roc_auc(out.scores, recipe.test_labels);
  out.prf = prf_at_quantile(out.scores, recipe.test_labels, recipe.quantile);
  return out;
}

AnomalyRecipe synthetic_anomaly_recipe(std::uint64_t seed, std::size_t n_train, std::size_t n_test,
                                       double quantile) {
  const GmmSpec full = gmm_preset_32();
  GmmSpec inner, outer;
  inner.sigma = outer.sigma = full.sigma;
  for (std::size_t k = 0; k < full.size(); ++k) {
    GmmSpec& dst = full.ring[k] < 2 ? inner : outer;
    dst.means.push_back(full.means[k]);
    dst.ring.push_back(full.ring[k]);
  }
  inner.weights.assign(inner.size(), 1.0 / static_cast<double>(inner.size()));
  outer.weights.assign(outer.size(), 1.0 / static_cast<double>(outer.size()));

  Rng rng = Rng::stream(seed, 0x616e6f6dULL);
  AnomalyRecipe r;
  r.quantile = quantile;
  r.train_x = gmm_sample(inner, n_train, rng).points;
  const auto n_anom = static_cast<std::size_t>(std::floor(quantile * static_cast<double>(n_test)));
  const Tensor normal = gmm_sample(inner, n_test - n_anom, rng).points;
  const Tensor anomalous = gmm_sample(outer, n_anom, rng).points;
  // Interleave so that anomalies are spread through the file.
  r.test_x = Tensor({n_test, 2});
  std::size_t a = 0, b = 0;
  for (std::size_t i = 0; i < n_test; ++i) {
    const bool anom = b < n_anom && (a == normal.rows() || (i + 1) * n_anom >= (b + 1) * n_test);
    r.test_x.set_row(i, anom ? anomalous.row(b++) : normal.row(a++));
    r.test_labels.push_back(anom);
  }

  r.pot_spec = anomaly_potential_spec(2);
  r.gen_spec = anomaly_generator_spec(5, 2);
  // A wide proposal and momentum let model samples reach the empty outer
  // region; with sigma 0.1 and SGLD the potential grows outward there.
  r.sigma = 0.5;
  r.train.seed = seed;
  r.train.batch_size = 100;
  r.train.iterations = 4000;
  r.train.potential_opt = {1e-4, 0.5, 0.999, 1e-8};
  r.train.generator_opt = {3e-4, 0.5, 0.999, 1e-8};
  r.train.alpha_p = 0.1;
  r.train.sampler.kind = SamplerKind::sghmc;
  r.train.sampler.steps = 10;
  r.train.sampler.schedule = StepSchedule::fixed(0.01);
  return r;
}

FeatureData load_feature_csv(const std::filesystem::path& path, std::optional<std::size_t> label_column) {
  const CsvTable t = read_csv(path);
  if (t.rows.empty()) throw ConfigError(path.string() + ": no data rows");
  const std::size_t width = t.rows.front().size();
  if (label_column && *label_column >= width) throw ConfigError(path.string() + ": label column out of range");
  const std::size_t d = label_column ? width - 1 : width;
  if (d == 0) throw ConfigError(path.string() + ": no feature columns");
  FeatureData out;
  out.x = Tensor({t.rows.size(), d});
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    std::size_t c = 0;
    for (std::size_t j = 0; j < width; ++j) {
      if (label_column && j == *label_column) {
        out.labels.push_back(t.rows[i][j] != 0.0);
        continue;
      }
      out.x.at(i, c++) = t.rows[i][j];
    }
  }
  return out;
}

}  // namespace nrf
