#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "fdre/apps.hpp"
#include "fdre/csv.hpp"
#include "fdre/data.hpp"
#include "fdre/dre.hpp"
#include "fdre/featurize.hpp"
#include "fdre/io.hpp"
#include "fdre/stats.hpp"
#include "fdre/train.hpp"

namespace fdre {

namespace cfg {

template <typename T>
T get_or(const Json& j, const std::string& key, T fallback) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  return j.at(key).get<T>();
}

inline Json section(const Json& j, const std::string& key) {
  return j.contains(key) ? j.at(key) : Json::object();
}

inline FlowTrainConfig flow_config(const Json& j, std::uint64_t seed) {
  const Json s = section(j, "flow");
  FlowTrainConfig out;
  out.epochs = get_or<long>(s, "epochs", 100);
  out.batch_size = get_or<Eigen::Index>(s, "batch_size", 100);
  out.learning_rate = get_or<double>(s, "learning_rate", 1e-4);
  out.weight_decay = get_or<double>(s, "weight_decay", 1e-6);
  out.early_stop_patience = get_or<long>(s, "early_stop_patience", 0);
  out.validation_fraction = get_or<double>(s, "validation_fraction", 0.1);
  out.seed = Rng::derive(seed, 101);
  return out;
}

inline std::size_t flow_blocks(const Json& j) {
  return get_or<std::size_t>(section(j, "flow"), "n_blocks", 5);
}

inline std::vector<Eigen::Index> flow_hidden(const Json& j) {
  return get_or<std::vector<Eigen::Index>>(section(j, "flow"), "hidden", {100});
}

inline ClassifierConfig classifier_config(const Json& j, std::uint64_t seed) {
  const Json s = section(j, "classifier");
  ClassifierConfig out;
  out.hidden_sizes = get_or<std::vector<Eigen::Index>>(s, "hidden", {100, 100, 100});
  out.epochs = get_or<long>(s, "epochs", 100);
  out.batch_size = get_or<Eigen::Index>(s, "batch_size", 128);
  out.learning_rate = get_or<double>(s, "learning_rate", 2e-4);
  out.weight_decay = get_or<double>(s, "weight_decay", 5e-4);
  out.seed = Rng::derive(seed, 202);
  return out;
}

inline KernelConfig kernel_config(const Json& j) {
  const Json s = section(j, "kernel");
  KernelConfig out;
  const auto rule = get_or<std::string>(s, "bandwidth_rule", "median-heuristic");
  out.bandwidth_rule = rule == "fixed" ? BandwidthRule::Fixed : BandwidthRule::MedianHeuristic;
  out.sigma = get_or<double>(s, "sigma", 1.0);
  out.B = get_or<double>(s, "B", 1000.0);
  out.epsilon = get_or<double>(s, "epsilon", -1.0);
  return out;
}

inline DreKind dre_kind(const Json& j) {
  const auto kind = get_or<std::string>(j, "dre_kind", "classifier");
  if (kind == "classifier") return DreKind::Classifier;
  if (kind == "kliep") return DreKind::Kliep;
  if (kind == "kmm") return DreKind::KmmTransductive;
  throw ConfigError("dre_kind: unknown value '" + kind + "'");
}

inline DreRecipe recipe(const Json& j, std::uint64_t seed) {
  DreRecipe out;
  out.kind = dre_kind(j);
  out.classifier = classifier_config(j, seed);
  out.kernel = kernel_config(j);
  out.kliep_iters = get_or<long>(section(j, "kernel"), "kliep_iters", 2000);
  out.kmm.max_iters = get_or<long>(section(j, "kernel"), "kmm_max_iters", 20000);
  return out;
}

}  // namespace cfg

struct ValidationResult {
  std::vector<std::string> errors;
  bool ok() const { return errors.empty(); }
};

inline const std::vector<std::string>& known_experiments() {
  static const std::vector<std::string> names{"toy2d",  "pathology",    "mi",
                                              "da-synthetic", "da-csv", "sir-demo"};
  return names;
}

// Structural and semantic checks; returns errors as data, never throws.
inline ValidationResult validate_config(const Json& j) {
  ValidationResult out;
  auto fail = [&out](const std::string& msg) { out.errors.push_back(msg); };

  if (!j.is_object()) {
    fail("config: must be a JSON object");
    return out;
  }

  const auto experiment = cfg::get_or<std::string>(j, "experiment", "");
  if (experiment.empty()) {
    fail("experiment: missing");
  } else {
    bool known = false;
    for (const auto& name : known_experiments()) known |= name == experiment;
    if (!known) fail("experiment: unknown value '" + experiment + "'");
  }

  if (cfg::get_or<std::string>(j, "output_path", "").empty())
    fail("output_path: missing or empty");

  if (!j.contains("seeds") || !j.at("seeds").is_array() || j.at("seeds").empty())
    fail("seeds: must be a nonempty list");

  const auto mode = cfg::get_or<std::string>(j, "training_mode", "separate");
  const bool mode_known =
      mode == "raw" || mode == "separate" || mode == "joint" || mode == "discriminative";
  if (!mode_known) fail("training_mode: unknown value '" + mode + "'");
  if (mode == "joint") {
    if (!j.contains("alpha"))
      fail("alpha: required when training_mode=joint");
    else {
      const double alpha = j.at("alpha").get<double>();
      if (!(alpha >= 0.0 && alpha <= 1.0)) fail("alpha: must be in [0,1]");
    }
  } else if (j.contains("alpha")) {
    fail("alpha: only valid with training_mode=joint");
  }

  const auto kind = cfg::get_or<std::string>(j, "dre_kind", "classifier");
  if (kind != "classifier" && kind != "kliep" && kind != "kmm")
    fail("dre_kind: unknown value '" + kind + "'");
  if ((mode == "joint" || mode == "discriminative") && kind != "classifier")
    fail("dre_kind: " + mode + " training requires the classifier estimator");
  if (experiment == "toy2d" && kind == "kmm" && mode != "raw")
    fail("dre_kind: kmm is transductive and unsupported for toy2d grid evaluation");
  if (experiment == "mi" && kind != "classifier")
    fail("dre_kind: mi estimation uses the classifier estimator");

  const Json data = cfg::section(j, "data");
  if (experiment == "mi") {
    const double rho = cfg::get_or<double>(data, "rho", 0.9);
    if (!(std::abs(rho) < 1.0)) fail("data.rho: must satisfy |rho| < 1");
  }
  if (experiment == "da-synthetic") {
    const double w = cfg::get_or<double>(data, "weight_source", 0.01);
    if (!(w > 0.0 && w < 1.0)) fail("data.weight_source: must be in (0,1)");
  }
  if (experiment == "da-csv") {
    const auto path = cfg::get_or<std::string>(data, "csv_path", "");
    if (path.empty())
      fail("data.csv_path: missing");
    else if (!std::filesystem::exists(path))
      fail("data.csv_path: file does not exist: " + path);
    if (cfg::get_or<std::string>(data, "label_column", "").empty())
      fail("data.label_column: missing");
    const Json bias = cfg::section(data, "bias");
    const auto scheme = cfg::get_or<std::string>(bias, "scheme", "label-bias");
    if (scheme != "label-bias" && scheme != "distance-bias")
      fail("data.bias.scheme: unknown value '" + scheme + "'");
    for (const char* key : {"keep_prob_pos", "keep_prob_neg"}) {
      const double p = cfg::get_or<double>(bias, key, 0.5);
      if (!(p > 0.0 && p <= 1.0)) fail(std::string("data.bias.") + key + ": must be in (0,1]");
    }
    if (!(cfg::get_or<double>(bias, "sigma", 0.05) > 0.0))
      fail("data.bias.sigma: must be > 0");
  }

  const Json flow = cfg::section(j, "flow");
  if (!(cfg::get_or<double>(flow, "learning_rate", 1e-4) > 0.0))
    fail("flow.learning_rate: must be > 0");
  const double vf = cfg::get_or<double>(flow, "validation_fraction", 0.1);
  if (!(vf > 0.0 && vf < 1.0)) fail("flow.validation_fraction: must be in (0,1)");
  const Json clf = cfg::section(j, "classifier");
  if (!(cfg::get_or<double>(clf, "learning_rate", 2e-4) > 0.0))
    fail("classifier.learning_rate: must be > 0");

  return out;
}

namespace detail {

struct SeedOutcome {
  std::map<std::string, double> metrics;
  std::string error;   // empty on success
  Json extra;          // per-seed diagnostics appended to CSV outputs
};

// Evaluable log-ratio trained per the config's training_mode; the returned
// closure answers on raw inputs.
inline std::function<Array(const DataMatrix&)> fit_mode_estimator(
    const Json& j, const DataMatrix& dp, const DataMatrix& dq, std::uint64_t seed) {
  const auto mode = cfg::get_or<std::string>(j, "training_mode", "separate");
  if (mode == "raw") {
    const DreRecipe r = cfg::recipe(j, seed);
    RatioEstimator est = fit_base_estimator(dp, dq, r);
    return [est = std::move(est)](const DataMatrix& x) { return est.log_ratio(x); };
  }
  FlowModel flow =
      FlowModel::build(dp.dim(), cfg::flow_blocks(j), cfg::flow_hidden(j), Rng::derive(seed, 7));
  if (mode == "separate") {
    FeaturizedEstimator est =
        fit_featurized(dp, dq, cfg::recipe(j, seed), std::move(flow), cfg::flow_config(j, seed));
    return [est = std::move(est)](const DataMatrix& x) { return est.log_ratio(x); };
  }
  JointConfig jcfg;
  jcfg.alpha = mode == "discriminative" ? 1.0 : j.at("alpha").get<double>();
  jcfg.schedule = cfg::flow_config(j, seed);
  jcfg.classifier_hidden = cfg::classifier_config(j, seed).hidden_sizes;
  jcfg.classifier_seed = Rng::derive(seed, 202);
  FeaturizedEstimator est = fit_joint(dp, dq, jcfg, std::move(flow));
  return [est = std::move(est)](const DataMatrix& x) { return est.log_ratio(x); };
}

inline SeedOutcome run_toy2d(const Json& j, std::uint64_t seed) {
  const Json data = cfg::section(j, "data");
  GaussianPairSpec spec;
  spec.dim = 2;
  spec.mean_p = Vector::Zero(2);
  spec.mean_q = Vector::Constant(2, 3.0);
  spec.n_per_side = cfg::get_or<Eigen::Index>(data, "n_per_side", 500);
  spec.seed = seed;
  const auto [dp, dq] = gen_gaussian_pair(spec);
  spec.n_per_side = cfg::get_or<Eigen::Index>(data, "eval_per_side", 200);
  spec.seed = Rng::derive(seed, 9);
  const auto [hp, hq] = gen_gaussian_pair(spec);
  const DataMatrix eval = vstack(hp, hq);
  const Array truth =
      9.0 - 3.0 * (eval.values.col(0).array() + eval.values.col(1).array());

  const auto log_ratio = fit_mode_estimator(j, dp, dq, seed);
  const Array estimate = log_ratio(eval);

  SeedOutcome out;
  out.metrics["grid_mse"] = (estimate - truth).square().mean();
  out.metrics["n_train_per_side"] = static_cast<double>(dp.rows());
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < eval.rows(); ++i)
    rows.push_back({seed, eval.values(i, 0), eval.values(i, 1), truth[i], estimate[i]});
  out.extra["grid"] = std::move(rows);
  return out;
}

inline SeedOutcome run_pathology(const Json& j, std::uint64_t seed) {
  const Json data = cfg::section(j, "data");
  const double m = cfg::get_or<double>(data, "m", 5.0);
  PathologySchedule sched;
  sched.classifier_epochs = cfg::get_or<long>(data, "classifier_epochs", 300);
  sched.classifier_lr = cfg::get_or<double>(data, "classifier_lr", 5.0);
  sched.flow_epochs = cfg::get_or<long>(data, "flow_epochs", 60);
  const PathologyReport report =
      pathology_demo(m, cfg::get_or<Eigen::Index>(data, "n", 100), {seed}, sched);

  SeedOutcome out;
  out.metrics["raw_slope"] = report.raw_slopes[0];
  out.metrics["featurized_slope"] = report.featurized_slopes[0];
  out.metrics["raw_mse"] = report.raw_mse[0];
  out.metrics["featurized_mse"] = report.featurized_mse[0];
  out.metrics["true_slope"] = report.true_slope;
  out.metrics["bound_n_delta99"] = pathology_bound(m, 0.99);
  return out;
}

inline SeedOutcome run_mi(const Json& j, std::uint64_t seed) {
  const Json data = cfg::section(j, "data");
  const auto dim = cfg::get_or<Eigen::Index>(data, "dim", 2);
  const double rho = cfg::get_or<double>(data, "rho", 0.9);
  const auto n = cfg::get_or<Eigen::Index>(data, "n", 50000);
  const auto [joint, marg] = gen_correlated_gaussians(dim, rho, n, seed);

  const MIEstimate mi = estimate_mi(
      joint, marg,
      [&](const DataMatrix& dp, const DataMatrix& dq) {
        return fit_mode_estimator(j, dp, dq, seed);
      },
      cfg::get_or<std::string>(j, "training_mode", "separate"));

  SeedOutcome out;
  out.metrics["mi_estimate"] = mi.value;
  out.metrics["true_mi"] = true_gaussian_mi(dim, rho);
  return out;
}

inline Array importance_weights_at_source(const Json& j, const LabeledData& source,
                                          const LabeledData& target, bool featurized,
                                          std::uint64_t seed) {
  const DreRecipe r = cfg::recipe(j, seed);
  if (!featurized) {
    const RatioEstimator est = fit_base_estimator(target.features, source.features, r);
    return est.ratio(source.features);
  }
  FlowModel flow = FlowModel::build(source.dim(), cfg::flow_blocks(j), cfg::flow_hidden(j),
                                    Rng::derive(seed, 7));
  const FeaturizedEstimator est = fit_featurized(target.features, source.features, r,
                                                 std::move(flow), cfg::flow_config(j, seed));
  return est.ratio(source.features);
}

inline ClassifierConfig downstream_config(const Json& j, std::uint64_t seed) {
  const Json s = cfg::section(j, "downstream");
  ClassifierConfig out;
  out.hidden_sizes = cfg::get_or<std::vector<Eigen::Index>>(s, "hidden", {});
  out.epochs = cfg::get_or<long>(s, "epochs", 200);
  out.batch_size = cfg::get_or<Eigen::Index>(s, "batch_size", 128);
  out.learning_rate = cfg::get_or<double>(s, "learning_rate", 0.05);
  out.weight_decay = cfg::get_or<double>(s, "weight_decay", 1e-4);
  out.seed = Rng::derive(seed, 303);
  return out;
}

inline SeedOutcome run_da_synthetic(const Json& j, std::uint64_t seed) {
  const Json data = cfg::section(j, "data");
  const auto n = cfg::get_or<Eigen::Index>(data, "n", 1000);
  const double w = cfg::get_or<double>(data, "weight_source", 0.01);
  const auto [source, target] = gen_mixture_da(n, w, seed);

  const ClassifierConfig erm = downstream_config(j, seed);
  const WeightVector uniform{Array::Ones(source.rows()), false};
  const Array wx = importance_weights_at_source(j, source, target, false, seed);
  const Array wz = importance_weights_at_source(j, source, target, true, seed);

  SeedOutcome out;
  out.metrics["err_unweighted"] = weighted_erm(source, uniform, target, erm);
  out.metrics["err_iw_x"] = weighted_erm(source, {wx, false}, target, erm);
  out.metrics["err_iw_z"] = weighted_erm(source, {wz, false}, target, erm);
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < wz.size(); ++i) rows.push_back({seed, i, wx[i], wz[i]});
  out.extra["weights"] = std::move(rows);
  return out;
}

inline SeedOutcome run_da_csv(const Json& j, std::uint64_t seed) {
  const Json data = cfg::section(j, "data");
  LabeledData all = load_csv(cfg::get_or<std::string>(data, "csv_path", ""),
                             cfg::get_or<std::string>(data, "label_column", ""));
  if (all.labels.empty()) throw ConfigError("da-csv: label column produced no labels");

  // map the two label values onto {0,1}
  int lo = all.labels[0], hi = all.labels[0];
  for (const int y : all.labels) {
    lo = std::min(lo, y);
    hi = std::max(hi, y);
  }
  if (lo == hi) throw ConfigError("da-csv: labels are constant");
  for (auto& y : all.labels) {
    if (y != lo && y != hi) throw ConfigError("da-csv: labels are not binary");
    y = y == hi ? 1 : 0;
  }

  // shuffle, hold out 3/4 as target, bias-subsample the rest into the source
  Rng rng(seed);
  const auto perm = rng.permutation(all.rows());
  std::vector<Eigen::Index> idx_target(perm.begin(), perm.begin() + all.rows() * 3 / 4);
  std::vector<Eigen::Index> idx_pool(perm.begin() + all.rows() * 3 / 4, perm.end());
  auto take = [&all](const std::vector<Eigen::Index>& idx) {
    LabeledData out;
    out.features = take_rows(all.features, idx);
    out.labels.reserve(idx.size());
    for (const auto i : idx) out.labels.push_back(all.labels[static_cast<std::size_t>(i)]);
    return out;
  };
  LabeledData target = take(idx_target);
  LabeledData pool = take(idx_pool);

  const Json bias = cfg::section(data, "bias");
  BiasSpec bspec;
  bspec.scheme = cfg::get_or<std::string>(bias, "scheme", "label-bias") == "distance-bias"
                     ? BiasScheme::DistanceBias
                     : BiasScheme::LabelBias;
  bspec.keep_prob_pos = cfg::get_or<double>(bias, "keep_prob_pos", 0.1);
  bspec.keep_prob_neg = cfg::get_or<double>(bias, "keep_prob_neg", 0.9);
  bspec.sigma = cfg::get_or<double>(bias, "sigma", 1.0 / 20.0);
  LabeledData source = biased_subsample(pool, bspec, Rng::derive(seed, 11));

  // standardize features on the union of both domains
  const auto [joined, record] = standardize(vstack(source.features, target.features));
  source.features = apply_standardize(source.features, record);
  target.features = apply_standardize(target.features, record);

  const WeightVector uniform{Array::Ones(source.rows()), false};
  const Array wx = importance_weights_at_source(j, source, target, false, seed);
  const Array wz = importance_weights_at_source(j, source, target, true, seed);

  SeedOutcome out;
  out.metrics["n_source"] = static_cast<double>(source.rows());
  const auto c_values = cfg::get_or<std::vector<double>>(data, "c_values", {0.1, 1.0, 10.0, 100.0});
  for (const double c : c_values) {
    ClassifierConfig erm = downstream_config(j, seed);
    // C-style inverse regularization: larger C, weaker decay
    erm.weight_decay = 1.0 / (c * static_cast<double>(source.rows()));
    std::ostringstream tag;
    tag << "_C" << c;
    out.metrics["err_unweighted" + tag.str()] = weighted_erm(source, uniform, target, erm);
    out.metrics["err_iw_x" + tag.str()] = weighted_erm(source, {wx, false}, target, erm);
    out.metrics["err_iw_z" + tag.str()] = weighted_erm(source, {wz, false}, target, erm);
  }
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < wz.size(); ++i) rows.push_back({seed, i, wx[i], wz[i]});
  out.extra["weights"] = std::move(rows);
  return out;
}

inline SeedOutcome run_sir_demo(const Json& j, std::uint64_t seed) {
  const Json data = cfg::section(j, "data");
  const auto n = cfg::get_or<Eigen::Index>(data, "n_per_side", 500);
  const double sep = cfg::get_or<double>(data, "separation", 2.0);

  GaussianPairSpec spec;
  spec.dim = 1;
  spec.mean_p = Vector::Constant(1, sep);   // target component
  spec.mean_q = Vector::Constant(1, -sep);  // remainder of the mixture
  spec.n_per_side = n;
  spec.seed = seed;
  const auto [d_target, d_other] = gen_gaussian_pair(spec);

  FlowModel flow = FlowModel::build(1, cfg::flow_blocks(j), cfg::flow_hidden(j),
                                    Rng::derive(seed, 7));
  const FeaturizedEstimator est = fit_featurized(d_target, d_other, cfg::recipe(j, seed),
                                                 std::move(flow), cfg::flow_config(j, seed));

  const auto n_proposals = cfg::get_or<Eigen::Index>(data, "n_proposals", 10000);
  const auto n_out = cfg::get_or<Eigen::Index>(data, "n_out", 2000);
  const LogRatioOnZ learned = [&est](const DataMatrix& z) { return est.base.log_ratio(z); };
  const DataMatrix targeted =
      sir_sample(est.flow, learned, n_proposals, n_out, Rng::derive(seed, 13));

  const LogRatioOnZ flat = [](const DataMatrix& z) { return Array::Zero(z.rows()); };
  const DataMatrix uniform =
      sir_sample(est.flow, flat, n_proposals, 5000, Rng::derive(seed, 17));
  const DataMatrix plain = est.flow.sample(5000, Rng::derive(seed, 19));

  SeedOutcome out;
  out.metrics["frac_target_side"] =
      (targeted.values.col(0).array() > 0.0).cast<double>().mean();
  out.metrics["ks_constant_weights"] =
      ks_statistic(uniform.values.col(0).array(), plain.values.col(0).array());
  return out;
}

inline SeedOutcome run_seed(const Json& j, const std::string& experiment, std::uint64_t seed) {
  if (experiment == "toy2d") return run_toy2d(j, seed);
  if (experiment == "pathology") return run_pathology(j, seed);
  if (experiment == "mi") return run_mi(j, seed);
  if (experiment == "da-synthetic") return run_da_synthetic(j, seed);
  if (experiment == "da-csv") return run_da_csv(j, seed);
  if (experiment == "sir-demo") return run_sir_demo(j, seed);
  throw ConfigError("experiment: unknown value '" + experiment + "'");
}

}  // namespace detail

inline std::uint64_t config_hash(const Json& j) {
  const std::string dump = j.dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (const char c : dump) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

// Executes every seed (failures are recorded per seed and the run continues),
// aggregates metrics, and returns the self-describing result document.
inline Json run_experiment(const Json& j) {
  const ValidationResult check = validate_config(j);
  if (!check.ok()) {
    std::string joined;
    for (const auto& e : check.errors) joined += e + "; ";
    throw ConfigError("run_experiment: invalid config: " + joined);
  }
  const auto experiment = j.at("experiment").get<std::string>();
  const auto t0 = std::chrono::steady_clock::now();

  Json records = Json::array();
  std::map<std::string, std::vector<double>> columns;
  Json extras = Json::object();
  for (const auto& js : j.at("seeds")) {
    const auto seed = js.get<std::uint64_t>();
    Json record;
    record["seed"] = seed;
    try {
      detail::SeedOutcome outcome = detail::run_seed(j, experiment, seed);
      record["metrics"] = outcome.metrics;
      for (const auto& [key, value] : outcome.metrics) columns[key].push_back(value);
      for (const auto& [key, value] : outcome.extra.items()) {
        if (!extras.contains(key)) extras[key] = Json::array();
        for (const auto& row : value) extras[key].push_back(row);
      }
    } catch (const Error& e) {
      record["error"] = e.what();
    }
    records.push_back(std::move(record));
  }

  Json aggregate = Json::object();
  for (const auto& [key, values] : columns) {
    Array v(static_cast<Eigen::Index>(values.size()));
    for (std::size_t i = 0; i < values.size(); ++i) v[static_cast<Eigen::Index>(i)] = values[i];
    aggregate[key] = {{"mean", v.mean()},
                      {"std", values.size() > 1 ? std::sqrt(variance(v)) : 0.0}};
  }

  Json result;
  result["experiment"] = experiment;
  result["config"] = j;
  result["config_hash"] = config_hash(j);
  result["records"] = std::move(records);
  result["aggregate"] = std::move(aggregate);
  result["diagnostics"] = std::move(extras);
  result["wall_clock_seconds"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

// Writes <output_path>.json plus one CSV per diagnostic table.
inline void write_experiment_outputs(const Json& result) {
  const std::string base = result.at("config").at("output_path").get<std::string>();
  Json on_disk = result;
  on_disk.erase("diagnostics");
  save_json(on_disk, base + ".json");

  const Json& diagnostics = result.at("diagnostics");
  const std::map<std::string, std::vector<std::string>> headers{
      {"grid", {"seed", "x1", "x2", "true_log_r", "est_log_r"}},
      {"weights", {"seed", "row", "weight_x", "weight_z"}},
  };
  for (const auto& [name, rows] : diagnostics.items()) {
    if (rows.empty()) continue;
    const auto width = rows.front().size();
    Matrix table(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width));
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t c = 0; c < width; ++c)
        table(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) =
            rows[i][c].get<double>();
    std::vector<std::string> header;
    if (const auto it = headers.find(name); it != headers.end()) {
      header = it->second;
    } else {
      for (std::size_t c = 0; c < width; ++c) header.push_back("c" + std::to_string(c));
    }
    write_csv(base + "_" + name + ".csv", header, table);
  }

  // per-seed metric table for external plotting
  const Json& records = result.at("records");
  std::vector<std::string> keys;
  for (const auto& record : records)
    if (record.contains("metrics"))
      for (const auto& [key, value] : record.at("metrics").items()) {
        bool seen = false;
        for (const auto& k : keys) seen |= k == key;
        if (!seen) keys.push_back(key);
      }
  if (!keys.empty()) {
    Matrix table(static_cast<Eigen::Index>(records.size()),
                 static_cast<Eigen::Index>(keys.size()) + 1);
    table.setConstant(std::numeric_limits<double>::quiet_NaN());
    Eigen::Index r = 0;
    for (const auto& record : records) {
      table(r, 0) = record.at("seed").get<double>();
      if (record.contains("metrics"))
        for (std::size_t c = 0; c < keys.size(); ++c)
          if (record.at("metrics").contains(keys[c]))
            table(r, static_cast<Eigen::Index>(c) + 1) =
                record.at("metrics").at(keys[c]).get<double>();
      ++r;
    }
    std::vector<std::string> header{"seed"};
    header.insert(header.end(), keys.begin(), keys.end());
    write_csv(base + "_metrics.csv", header, table);
  }
}

}  // namespace fdre
