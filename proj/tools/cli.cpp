#include "cli.hpp"

#include <algorithm>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "nrf/anomaly.hpp"
#include "nrf/chains.hpp"
#include "nrf/error.hpp"
#include "nrf/evaluation.hpp"
#include "nrf/io.hpp"
#include "nrf/training.hpp"
#include "settings.hpp"

namespace nrf::cli {

namespace fs = std::filesystem;

namespace {

struct Context {
  Settings settings;
  fs::path out_dir;
  std::uint64_t seed = 1;
  std::ostream* log = nullptr;
};

// ---- settings shared by several commands ------------------------------------

void add_common(Settings& s, const std::string& command) {
  s.add("seed", std::int64_t{1});
  s.add("out", std::string("out/") + command);
  s.add("threads", std::int64_t{0});
}

void add_sampler(Settings& s, const std::string& p, const std::string& kind, std::int64_t steps) {
  s.add(p + ".kind", kind);
  s.add(p + ".steps", steps);
  s.add(p + ".schedule", std::string("constant"));
  s.add(p + ".delta", 0.01);
  s.add(p + ".a", 10.0);
  s.add(p + ".b", 1000.0);
  s.add(p + ".c", 2.0);
  s.add(p + ".beta", 0.1);
  s.add(p + ".inner_steps", std::int64_t{1});
  s.add(p + ".delta_star", -1.0);
  s.add(p + ".coop_lx", std::int64_t{20});
  s.add(p + ".coop_lh", std::int64_t{20});
}

StepSchedule schedule_from(const Settings& s, const std::string& p) {
  const std::string& kind = s.text(p + ".schedule");
  if (kind == "constant") return StepSchedule::fixed(s.real(p + ".delta"));
  if (kind == "decaying") return StepSchedule::decaying(s.real(p + ".a"), s.real(p + ".b"), s.real(p + ".c"));
  throw ConfigError("key '" + p + ".schedule' must be \"constant\" or \"decaying\"");
}

SamplerConfig sampler_from(const Settings& s, const std::string& p) {
  SamplerConfig c;
  c.kind = parse_sampler_kind(s.text(p + ".kind"));
  c.steps = s.count(p + ".steps");
  c.schedule = schedule_from(s, p);
  c.beta = s.real(p + ".beta");
  c.inner_steps = s.count(p + ".inner_steps");
  // A negative inner step size selects the current revision step size.
  if (const double ds = s.real(p + ".delta_star"); ds >= 0.0) c.delta_star = ds;
  c.coop_lx = s.count(p + ".coop_lx");
  c.coop_lh = s.count(p + ".coop_lh");
  c.validate();
  return c;
}

void add_train(Settings& s, std::int64_t iterations, double lr_pot, double lr_gen, double beta1, double beta2) {
  s.add("train.iterations", iterations);
  s.add("train.batch_size", std::int64_t{100});
  s.add("train.lr_potential", lr_pot);
  s.add("train.lr_generator", lr_gen);
  s.add("train.beta1", beta1);
  s.add("train.beta2", beta2);
  s.add("train.adam_eps", 1e-8);
  s.add("train.alpha_d", 0.0);
  s.add("train.alpha_c", 0.0);
  s.add("train.alpha_p", 0.0);
  s.add("train.metric_every", std::int64_t{200});
  add_sampler(s, "train.sampler", "sgld", 10);
}

TrainConfig train_from(const Settings& s, std::uint64_t seed) {
  TrainConfig c;
  c.iterations = s.count("train.iterations");
  c.batch_size = s.count("train.batch_size");
  if (s.has("train.labeled_batch_size")) c.labeled_batch_size = s.count("train.labeled_batch_size");
  const double b1 = s.real("train.beta1"), b2 = s.real("train.beta2"), eps = s.real("train.adam_eps");
  c.potential_opt = {s.real("train.lr_potential"), b1, b2, eps};
  c.generator_opt = {s.real("train.lr_generator"), b1, b2, eps};
  c.alpha_d = s.real("train.alpha_d");
  c.alpha_c = s.real("train.alpha_c");
  c.alpha_p = s.real("train.alpha_p");
  c.metric_every = s.count("train.metric_every");
  c.sampler = sampler_from(s, "train.sampler");
  c.seed = seed;
  c.validate();
  return c;
}

// ---- output helpers ------------------------------------------------------------

std::string f(double v) { return format_double(v); }

void write_matrix_rows(std::ostringstream& out, const Tensor& X, std::size_t row) {
  for (double v : X.row(row)) out << ',' << f(v);
}

std::string coord_header(std::size_t d) {
  std::string h;
  for (std::size_t j = 1; j <= d; ++j) h += ",x" + std::to_string(j);
  return h;
}

void save_models(const TrainState& st, const fs::path& dir) {
  save_checkpoint(st.pot, dir / "potential.json");
  save_checkpoint(st.gen, dir / "generator.json");
}

Tensor parse_latent(const std::vector<double>& v, std::size_t dim, const std::string& key) {
  if (v.size() != dim)
    throw ConfigError("key '" + key + "' needs " + std::to_string(dim) + " values, got " + std::to_string(v.size()));
  return Tensor::vector(v);
}

const std::string& required_path(const Settings& s, const std::string& key) {
  const std::string& p = s.text(key);
  if (p.empty()) throw ConfigError("key '" + key + "' (checkpoint path) is required");
  return p;
}

// ---- sampler-bench ----------------------------------------------------------

void setup_sampler_bench(Settings& s) {
  s.add("dim", std::int64_t{10});
  s.add("chains", std::int64_t{200});
  s.add("steps", std::int64_t{2000});
  s.add("checkpoints", std::int64_t{20});
  s.add("samplers", std::vector<std::string>{"ld", "hmc", "sgld", "sghmc", "coopnet"});
  s.add("target_seed", std::int64_t{-1});
  add_sampler(s, "sampler", "sgld", 0);
  s.set_from_string("sampler.schedule", "decaying");
}

void run_sampler_bench(Context& ctx) {
  const Settings& s = ctx.settings;
  const std::size_t dim = s.count("dim"), chains = s.count("chains"), T = s.count("steps");
  if (dim == 0) throw ConfigError("key 'dim' must be positive");
  const std::int64_t ts = s.integer("target_seed");
  Rng trng = Rng::stream(ts < 0 ? ctx.seed : static_cast<std::uint64_t>(ts), kTargetTag);
  const GaussianJointBenchmark bench = benchmark_target(dim, trng);
  const auto marks = log_checkpoints(T, s.count("checkpoints"));
  const SamplerConfig base = sampler_from(s, "sampler");
  if (s.texts("samplers").empty()) throw ConfigError("key 'samplers' must name at least one sampler");

  std::ostringstream curve, summary;
  curve << "sampler,iteration,kl\n";
  summary << "sampler,initial_kl,final_kl,resets\n";
  for (const auto& name : s.texts("samplers")) {
    SamplerConfig cfg = base;
    cfg.kind = parse_sampler_kind(name);
    const KlCurve c = sampler_benchmark(bench, cfg, chains, T, marks, ctx.seed);
    for (const auto& p : c.points) curve << to_string(c.kind) << ',' << p.iteration << ',' << f(p.kl) << '\n';
    summary << to_string(c.kind) << ',' << f(c.initial()) << ',' << f(c.final()) << ',' << c.resets << '\n';
    if (ctx.log)
      *ctx.log << to_string(c.kind) << ": KL " << c.initial() << " -> " << c.final() << '\n';
  }
  write_text(ctx.out_dir / "kl_curve.csv", curve.str());
  write_text(ctx.out_dir / "kl_summary.csv", summary.str());
}

// ---- gmm-unsup ----------------------------------------------------------------

void setup_gmm_unsup(Settings& s) {
  s.add("data.n", std::int64_t{1600});
  s.add("generator.latent_dim", std::int64_t{2});
  s.add("generator.sigma", 0.1);
  add_train(s, 160000, 1e-3, 1e-3, 0.5, 0.9);
  s.add("eval.reps", std::int64_t{100});
  s.add("eval.samples", std::int64_t{100});
  s.add("eval.dump", std::int64_t{1000});
}

// Ancestral proposals for `n` chains, optionally revised.
Tensor draw_samples(const TrainState& st, const SamplerConfig& cfg, bool revise, std::uint64_t seed,
                    std::uint64_t tag, std::size_t n) {
  auto rngs = chain_streams(seed, tag, n);
  ChainBatch b = ancestral_batch(st.gen, rngs);
  if (revise && cfg.steps > 0) {
    NrfTarget target(st.pot, st.gen, cfg.inner_steps, cfg.delta_star);
    revise_parallel(cfg, target, b, rngs);
  }
  return b.x;
}

void run_gmm_unsup(Context& ctx) {
  const Settings& s = ctx.settings;
  const GmmSpec gmm = gmm_preset_32();
  Rng drng = Rng::stream(ctx.seed, kDataTag);
  const GmmDraws data = gmm_sample(gmm, std::max<std::size_t>(s.count("data.n"), 1), drng);
  const TrainConfig tc = train_from(s, ctx.seed);
  Rng irng = Rng::stream(ctx.seed, kInitTag);
  TrainState init = init_state(gmm_potential_spec(), 1, gmm_generator_spec(s.count("generator.latent_dim")),
                               s.real("generator.sigma"), irng);

  std::ostringstream metrics;
  TrainResult res = train(tc, std::move(init), {data.points, {}}, {}, &metrics);
  write_text(ctx.out_dir / "metrics.csv", metrics.str());
  save_models(res.state, ctx.out_dir);

  const std::size_t reps = s.count("eval.reps"), per = s.count("eval.samples");
  std::ostringstream cov;
  cov << "run,covered,ratio\n";
  for (const bool revise : {false, true}) {
    const std::string method = revise ? "revision" : "generation";
    const auto report = mode_coverage(
        [&](std::size_t rep) { return draw_samples(res.state, tc.sampler, revise, ctx.seed, kEvalTag + rep, per); },
        gmm.means, reps);
    for (std::size_t k = 0; k < report.runs.size(); ++k)
      cov << method << '-' << k << ',' << report.runs[k].covered << ',' << f(report.runs[k].ratio) << '\n';
    cov << method << "-mean," << f(report.covered.mean) << ',' << f(report.ratio.mean) << '\n';
    cov << method << "-sd," << f(report.covered.sd) << ',' << f(report.ratio.sd) << '\n';
    if (ctx.log)
      *ctx.log << method << ": covered " << report.covered.mean << " +- " << report.covered.sd << ", ratio "
               << report.ratio.mean << " +- " << report.ratio.sd << '\n';
  }
  write_text(ctx.out_dir / "coverage.csv", cov.str());

  const std::size_t dump = s.count("eval.dump");
  std::ostringstream smp;
  smp << "method,x1,x2\n";
  if (dump > 0) {
    for (const bool revise : {false, true}) {
      const Tensor X = draw_samples(res.state, tc.sampler, revise, ctx.seed, kDumpTag, dump);
      for (std::size_t i = 0; i < X.rows(); ++i) {
        smp << (revise ? "revision" : "generation");
        write_matrix_rows(smp, X, i);
        smp << '\n';
      }
    }
  }
  write_text(ctx.out_dir / "samples.csv", smp.str());
}

// ---- gmm-ssl --------------------------------------------------------------------

void setup_gmm_ssl(Settings& s) {
  s.add("data.unlabeled", std::int64_t{400});
  s.add("data.labels_per_class", std::int64_t{4});
  s.add("data.heldout", std::int64_t{1000});
  s.add("generator.latent_dim", std::int64_t{2});
  s.add("generator.sigma", 0.1);
  add_train(s, 20000, 1e-3, 1e-3, 0.5, 0.9);
  s.add("train.labeled_batch_size", std::int64_t{8});
  s.set_from_string("train.alpha_d", "10");
  s.set_from_string("train.alpha_c", "10");
  // Without potential control the potentials drift to -1e4 and the labeled fit breaks.
  s.set_from_string("train.alpha_p", "0.1");
  s.add("grid.resolution", std::int64_t{100});
  s.add("grid.lo", -3.0);
  s.add("grid.hi", 3.0);
}

std::size_t predict(const std::vector<double>& heads) {
  return static_cast<std::size_t>(std::max_element(heads.begin(), heads.end()) - heads.begin());
}

void run_gmm_ssl(Context& ctx) {
  const Settings& s = ctx.settings;
  const GmmSpec gmm = gmm_preset_ssl16();
  const std::size_t K = 2;
  Rng drng = Rng::stream(ctx.seed, kDataTag);
  const GmmDraws unl = gmm_sample(gmm, std::max<std::size_t>(s.count("data.unlabeled"), 1), drng);
  const std::size_t per_class = s.count("data.labels_per_class");
  std::vector<LabeledExample> labeled;
  std::vector<std::size_t> have(K, 0);
  while (labeled.size() < per_class * K) {
    const GmmDraws d = gmm_sample(gmm, 1, drng);
    const std::size_t y = d.ring[0];
    if (have[y] == per_class) continue;
    ++have[y];
    labeled.push_back({d.points.row_tensor(0), y});
  }
  // Keep the labeled set ordered by class for readable output.
  std::stable_sort(labeled.begin(), labeled.end(),
                   [](const LabeledExample& a, const LabeledExample& b) { return a.label < b.label; });

  const TrainConfig tc = train_from(s, ctx.seed);
  Rng irng = Rng::stream(ctx.seed, kInitTag);
  TrainState init = init_state(gmm_potential_spec(K), K, gmm_generator_spec(s.count("generator.latent_dim")),
                               s.real("generator.sigma"), irng);
  std::ostringstream metrics;
  TrainResult res = train(tc, std::move(init), {unl.points, labeled}, {}, &metrics);
  write_text(ctx.out_dir / "metrics.csv", metrics.str());
  save_models(res.state, ctx.out_dir);
  const PotentialNet& pot = res.state.pot;
  const BoundPtr bound = pot.bind();

  auto classify = [&](const Tensor& X) {
    const Tensor heads = eval_potential(bound, K, X, false).heads;
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < heads.rows(); ++i) {
      auto r = heads.row(i);
      out.push_back(predict({r.begin(), r.end()}));
    }
    return out;
  };

  Tensor LX({labeled.size(), 2});
  for (std::size_t i = 0; i < labeled.size(); ++i) LX.set_row(i, labeled[i].x.values());
  const auto lab_pred = classify(LX);
  std::size_t lab_ok = 0;
  for (std::size_t i = 0; i < labeled.size(); ++i) lab_ok += lab_pred[i] == labeled[i].label ? 1 : 0;

  Rng hrng = Rng::stream(ctx.seed, kEvalTag);
  const GmmDraws held = gmm_sample(gmm, std::max<std::size_t>(s.count("data.heldout"), 1), hrng);
  const auto held_pred = classify(held.points);
  std::size_t held_ok = 0;
  for (std::size_t i = 0; i < held_pred.size(); ++i) held_ok += held_pred[i] == held.ring[i] ? 1 : 0;

  std::ostringstream acc;
  acc << "set,correct,total,accuracy\n";
  acc << "labeled," << lab_ok << ',' << labeled.size() << ','
      << f(static_cast<double>(lab_ok) / static_cast<double>(labeled.size())) << '\n';
  acc << "heldout," << held_ok << ',' << held_pred.size() << ','
      << f(static_cast<double>(held_ok) / static_cast<double>(held_pred.size())) << '\n';
  write_text(ctx.out_dir / "accuracy.csv", acc.str());
  if (ctx.log)
    *ctx.log << "labeled " << lab_ok << "/" << labeled.size() << ", held-out " << held_ok << "/" << held_pred.size()
             << '\n';

  std::ostringstream lab;
  lab << "index,x1,x2,label,predicted\n";
  for (std::size_t i = 0; i < labeled.size(); ++i)
    lab << i << ',' << f(labeled[i].x[0]) << ',' << f(labeled[i].x[1]) << ',' << labeled[i].label + 1 << ','
        << lab_pred[i] + 1 << '\n';
  write_text(ctx.out_dir / "labeled.csv", lab.str());

  const std::size_t n = s.count("grid.resolution");
  const double lo = s.real("grid.lo"), hi = s.real("grid.hi");
  if (n < 2 || !(hi > lo)) throw ConfigError("grid needs resolution >= 2 and hi > lo");
  Tensor G({n * n, 2});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      G.at(i * n + j, 0) = lo + (hi - lo) * static_cast<double>(j) / static_cast<double>(n - 1);
      G.at(i * n + j, 1) = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    }
  const PotentialBatch pb = eval_potential(bound, K, G, false);
  std::ostringstream grid;
  grid << "x1,x2,u,u_y1,u_y2\n";
  for (std::size_t r = 0; r < G.rows(); ++r)
    grid << f(G.at(r, 0)) << ',' << f(G.at(r, 1)) << ',' << f(pb.value[r]) << ',' << f(pb.heads.at(r, 0)) << ','
         << f(pb.heads.at(r, 1)) << '\n';
  write_text(ctx.out_dir / "grid.csv", grid.str());
}

// ---- anomaly ----------------------------------------------------------------------

void setup_anomaly(Settings& s) {
  s.add("data.train_csv", std::string());
  s.add("data.test_csv", std::string());
  s.add("data.label_column", std::int64_t{-1});
  s.add("data.n_train", std::int64_t{2000});
  s.add("data.n_test", std::int64_t{1000});
  s.add("quantile", 0.2);
  s.add("generator.latent_dim", std::int64_t{5});
  const AnomalyRecipe r = synthetic_anomaly_recipe(1, 1, 10);
  s.add("generator.sigma", r.sigma);
  add_train(s, static_cast<std::int64_t>(r.train.iterations), r.train.potential_opt.lr, r.train.generator_opt.lr,
            r.train.potential_opt.beta1, r.train.potential_opt.beta2);
  s.set_from_string("train.alpha_p", format_double(r.train.alpha_p));
  s.set_from_string("train.batch_size", std::to_string(r.train.batch_size));
  const SamplerConfig& sc = r.train.sampler;
  s.set_from_string("train.sampler.kind", std::string(to_string(sc.kind)));
  s.set_from_string("train.sampler.steps", std::to_string(sc.steps));
  s.set_from_string("train.sampler.delta", format_double(sc.schedule.delta));
  s.set_from_string("train.sampler.beta", format_double(sc.beta));
}

void run_anomaly_cmd(Context& ctx) {
  const Settings& s = ctx.settings;
  const double q = s.real("quantile");
  AnomalyRecipe r;
  const std::string& train_csv = s.text("data.train_csv");
  const std::string& test_csv = s.text("data.test_csv");
  if (train_csv.empty() != test_csv.empty())
    throw ConfigError("data.train_csv and data.test_csv must be given together");
  if (train_csv.empty()) {
    r = synthetic_anomaly_recipe(ctx.seed, std::max<std::size_t>(s.count("data.n_train"), 1),
                                 std::max<std::size_t>(s.count("data.n_test"), 2), q);
  } else {
    const std::int64_t lc = s.integer("data.label_column");
    const FeatureData tr = load_feature_csv(train_csv, std::nullopt);
    const CsvTable probe = read_csv(test_csv);
    if (probe.rows.empty()) throw ConfigError(test_csv + ": no data rows");
    const std::size_t width = probe.rows.front().size();
    const FeatureData te = load_feature_csv(test_csv, lc < 0 ? width - 1 : static_cast<std::size_t>(lc));
    if (te.x.cols() != tr.x.cols()) throw ConfigError("train and test CSVs have different feature widths");
    r.train_x = tr.x;
    r.test_x = te.x;
    r.test_labels = te.labels;
  }
  const std::size_t dx = r.train_x.cols();
  r.pot_spec = anomaly_potential_spec(dx);
  r.gen_spec = anomaly_generator_spec(s.count("generator.latent_dim"), dx);
  r.sigma = s.real("generator.sigma");
  r.quantile = q;
  r.train = train_from(s, ctx.seed);

  std::ostringstream metrics;
  const AnomalyResult res = run_anomaly(r, &metrics);
  write_text(ctx.out_dir / "metrics.csv", metrics.str());
  save_models(res.trained.state, ctx.out_dir);

  std::ostringstream a;
  a << "metric,value\n";
  a << "precision," << f(res.prf.precision) << '\n';
  a << "recall," << f(res.prf.recall) << '\n';
  a << "f1," << f(res.prf.f1) << '\n';
  a << "auc," << f(res.auc) << '\n';
  a << "quantile," << f(q) << '\n';
  write_text(ctx.out_dir / "anomaly.csv", a.str());

  std::ostringstream sc;
  sc << "index,score,label\n";
  for (std::size_t i = 0; i < res.scores.size(); ++i)
    sc << i << ',' << f(res.scores[i]) << ',' << (r.test_labels[i] ? 1 : 0) << '\n';
  write_text(ctx.out_dir / "scores.csv", sc.str());
  if (ctx.log) *ctx.log << "AUC " << res.auc << ", F1 " << res.prf.f1 << '\n';
}

// ---- generate / interpolate / conditional ----------------------------------------

void setup_generate(Settings& s) {
  s.add("checkpoint.potential", std::string());
  s.add("checkpoint.generator", std::string());
  s.add("n", std::int64_t{1000});
  s.add("revise", true);
  add_sampler(s, "sampler", "sgld", 10);
}

void run_generate(Context& ctx) {
  const Settings& s = ctx.settings;
  TrainState st;
  st.gen = load_generator(required_path(s, "checkpoint.generator"));
  const bool revise = s.flag("revise");
  if (revise) st.pot = load_potential(required_path(s, "checkpoint.potential"));
  const SamplerConfig cfg = sampler_from(s, "sampler");
  const std::size_t n = s.count("n");
  std::ostringstream out;
  out << "index" << coord_header(st.gen.obs_dim()) << '\n';
  if (n > 0) {
    const Tensor X = draw_samples(st, cfg, revise, ctx.seed, kEvalTag, n);
    for (std::size_t i = 0; i < n; ++i) {
      out << i;
      write_matrix_rows(out, X, i);
      out << '\n';
    }
  }
  write_text(ctx.out_dir / "samples.csv", out.str());
}

void setup_interpolate(Settings& s) {
  s.add("checkpoint.generator", std::string());
  s.add("n", std::int64_t{10});
  s.add("h1", std::vector<double>{});
  s.add("h2", std::vector<double>{});
}

void run_interpolate(Context& ctx) {
  const Settings& s = ctx.settings;
  const GeneratorNet gen = load_generator(required_path(s, "checkpoint.generator"));
  const std::size_t dh = gen.latent_dim();
  Rng rng = Rng::stream(ctx.seed, kEvalTag);
  auto endpoint = [&](const std::string& key) {
    if (!s.reals(key).empty()) return parse_latent(s.reals(key), dh, key);
    Tensor h({dh});
    rng.fill_normal(h.values());
    return h;
  };
  const Tensor h1 = endpoint("h1");
  const Tensor h2 = endpoint("h2");
  const std::size_t n = s.count("n");
  const auto path = interpolate_latent(gen, h1, h2, n);
  std::ostringstream out;
  out << "index,t" << coord_header(gen.obs_dim()) << '\n';
  for (std::size_t i = 0; i < path.size(); ++i) {
    out << i << ',' << f(static_cast<double>(i) / static_cast<double>(n - 1));
    for (double v : path[i].values()) out << ',' << f(v);
    out << '\n';
  }
  write_text(ctx.out_dir / "interpolation.csv", out.str());
}

void setup_conditional(Settings& s) {
  s.add("checkpoint.potential", std::string());
  s.add("checkpoint.generator", std::string());
  s.add("n", std::int64_t{100});
  s.add("label", std::int64_t{0});
  add_sampler(s, "sampler", "sgld", 10);
}

void run_conditional(Context& ctx) {
  const Settings& s = ctx.settings;
  const PotentialNet pot = load_potential(required_path(s, "checkpoint.potential"));
  const GeneratorNet gen = load_generator(required_path(s, "checkpoint.generator"));
  if (pot.num_outputs < 2) throw ConfigError("conditional generation needs a potential with K >= 2 heads");
  const std::int64_t label = s.integer("label");
  if (label < 0 || label > static_cast<std::int64_t>(pot.num_outputs))
    throw ConfigError("key 'label' must be 0 (predicted) or a class in 1.." + std::to_string(pot.num_outputs));
  std::optional<std::size_t> y;
  if (label > 0) y = static_cast<std::size_t>(label - 1);
  const SamplerConfig cfg = sampler_from(s, "sampler");
  const std::size_t n = s.count("n");
  auto rngs = chain_streams(ctx.seed, kEvalTag, n);
  std::ostringstream out;
  out << "index,label" << coord_header(gen.obs_dim()) << '\n';
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t used = 0;
    const Tensor x = conditional_revise(pot, gen, y, cfg, rngs[i], &used);
    out << i << ',' << used + 1;
    for (double v : x.values()) out << ',' << f(v);
    out << '\n';
  }
  write_text(ctx.out_dir / "conditional.csv", out.str());
}

// ---- dispatch -----------------------------------------------------------------------

struct Command {
  const char* name;
  const char* help;
  void (*setup)(Settings&);
  void (*run)(Context&);
  // flag name -> settings key
  std::vector<std::pair<std::string, std::string>> overrides;
};

const std::vector<Command>& commands() {
  static const std::vector<Command> cmds = {
      {"sampler-bench", "KL curves of the samplers on a Gaussian joint target", setup_sampler_bench,
       run_sampler_bench, {{"samplers", "samplers"}, {"dim", "dim"}, {"chains", "chains"}, {"steps", "steps"}}},
      {"gmm-unsup", "unsupervised training on the 32-mode ring mixture", setup_gmm_unsup, run_gmm_unsup,
       {{"iterations", "train.iterations"}, {"sigma", "generator.sigma"}, {"revision-steps", "train.sampler.steps"}}},
      {"gmm-ssl", "semi-supervised training on the 16-mode two-ring mixture", setup_gmm_ssl, run_gmm_ssl,
       {{"iterations", "train.iterations"}}},
      {"anomaly", "potential-threshold anomaly detection", setup_anomaly, run_anomaly_cmd,
       {{"iterations", "train.iterations"},
        {"train-csv", "data.train_csv"},
        {"test-csv", "data.test_csv"},
        {"label-column", "data.label_column"},
        {"quantile", "quantile"}}},
      {"generate", "draw samples from a trained model", setup_generate, run_generate,
       {{"potential", "checkpoint.potential"}, {"generator", "checkpoint.generator"}, {"n", "n"}, {"revise", "revise"}}},
      {"interpolate", "decode a straight latent path", setup_interpolate, run_interpolate,
       {{"generator", "checkpoint.generator"}, {"n", "n"}, {"h1", "h1"}, {"h2", "h2"}}},
      {"conditional", "class-conditional revision", setup_conditional, run_conditional,
       {{"potential", "checkpoint.potential"}, {"generator", "checkpoint.generator"}, {"label", "label"}, {"n", "n"}}},
  };
  return cmds;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Neural random fields with inclusive auxiliary generators"};
  app.require_subcommand(1);

  struct Parsed {
    std::string config;
    std::optional<std::string> seed, out, threads;
    std::vector<std::string> sets;
    std::map<std::string, std::string> flags;
    bool quiet = false;
  };
  std::vector<Parsed> parsed(commands().size());
  std::vector<CLI::App*> subs;
  for (std::size_t i = 0; i < commands().size(); ++i) {
    const Command& c = commands()[i];
    Parsed& p = parsed[i];
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    sub->add_option("--config", p.config, "TOML configuration file");
    sub->add_option("--seed", p.seed, "random seed");
    sub->add_option("--out", p.out, "output directory");
    sub->add_option("--threads", p.threads, "chain-level threads (0 = runtime default)");
    sub->add_option("--set", p.sets, "override any key: --set section.key=value");
    sub->add_flag("--quiet", p.quiet, "no progress output");
    for (const auto& [flag, key] : c.overrides) {
      sub->add_option_function<std::string>(
          "--" + flag, [&p, key = key](const std::string& v) { p.flags[key] = v; }, "sets " + key);
    }
    subs.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  std::size_t which = 0;
  while (!subs[which]->parsed()) ++which;
  const Command& cmd = commands()[which];
  const Parsed& p = parsed[which];

  Context ctx;
  try {
    add_common(ctx.settings, cmd.name);
    cmd.setup(ctx.settings);
    if (!p.config.empty()) ctx.settings.load_toml(p.config);
    if (p.seed) ctx.settings.set_from_string("seed", *p.seed);
    if (p.out) ctx.settings.set_from_string("out", *p.out);
    if (p.threads) ctx.settings.set_from_string("threads", *p.threads);
    for (const auto& [key, value] : p.flags) ctx.settings.set_from_string(key, value);
    for (const auto& kv : p.sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
      ctx.settings.set_from_string(kv.substr(0, eq), kv.substr(eq + 1));
    }
    const std::int64_t seed = ctx.settings.integer("seed");
    if (seed < 0) throw ConfigError("seed must be non-negative");
    ctx.seed = static_cast<std::uint64_t>(seed);
    ctx.out_dir = ctx.settings.text("out");
    if (ctx.out_dir.empty()) throw ConfigError("output directory must not be empty");
    set_num_threads(ctx.settings.count("threads"));
    ctx.log = p.quiet ? nullptr : &out;
    write_text(ctx.out_dir / "resolved_config.toml", ctx.settings.to_toml());
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }

  try {
    cmd.run(ctx);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return 1;
  } catch (const ShapeError& e) {
    err << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace nrf::cli
