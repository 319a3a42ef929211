#include "eftr/bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <limits>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "eftr/config.hpp"
#include "eftr/errors.hpp"
#include "eftr/io.hpp"

namespace eftr {

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
  if (patience < 1) throw ConfigError("train.patience must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("train.lr must be positive");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (!(polish_tol > 0.0)) throw ConfigError("train.polish_tol must be positive");
}

void RunConfig::validate() const {
  double total = 0.0;
  for (double f : fractions) {
    if (!(f > 0.0)) throw ConfigError("fractions must be positive");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("fractions must sum to 1");
  if (replications < 1) throw ConfigError("replications must be >= 1");
  if (n < 3) throw ConfigError("n must be >= 3");
  if (dose_grid_points < 2) throw ConfigError("eval.dose_grid_points must be >= 2");
  if (model.treatment != dgp.treatment || !(model.family == dgp.family))
    throw ConfigError("model treatment/family must match the dgp");
  loss.validate();
  train.validate();
  model.validate();
}

RunConfig RunConfig::for_dgp(const DGPSpec& dgp) {
  RunConfig r;
  r.dgp = dgp;
  r.model.treatment = dgp.treatment;
  r.model.family = dgp.family;
  r.model.outcome_activation = ModelConfig::default_outcome_activation(dgp.family);
  if (dgp.scenario == Scenario::SemiSynthetic) r.fractions = {0.67, 0.23, 0.10};
  return r;
}

Split split(const Dataset& data, const std::array<double, 3>& fractions, std::uint64_t seed) {
  const Eigen::Index n = data.size();
  const auto n_train = static_cast<Eigen::Index>(std::llround(fractions[0] * static_cast<double>(n)));
  const auto n_val = static_cast<Eigen::Index>(std::llround(fractions[1] * static_cast<double>(n)));
  if (n_train < 1 || n_val < 1 || n - n_train - n_val < 1)
    throw ConfigError("split of " + std::to_string(n) + " rows leaves an empty part");
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng = make_stream(seed, "split");
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto b = idx.begin();
  return {data.subset({b, b + n_train}), data.subset({b + n_train, b + n_train + n_val}),
          data.subset({b + n_train + n_val, idx.end()})};
}

ModelConfig resolved_model_config(const RunConfig& run, Eigen::Index n_train, Eigen::Index input_dim) {
  ModelConfig cfg = run.model;
  cfg.input_dim = static_cast<int>(input_dim);
  if (run.eps_kn_auto && cfg.treatment == TreatmentKind::Continuous) {
    const int size = kn_for_sample_size(static_cast<long>(n_train), cfg.eps_basis.degree);
    cfg.eps_basis.interior_knots = size - cfg.eps_basis.degree - 1;
  }
  return cfg;
}

TrainedModel train(const RunConfig& run, const Dataset& train_set, const Dataset& val_set, std::uint64_t seed,
                   TrainLog* log) {
  if (train_set.size() == 0 || val_set.size() == 0) throw DataError("training needs nonempty train and val sets");
  TrainedModel tm{Model(resolved_model_config(run, train_set.size(), train_set.dim())), {}};
  Model& model = tm.model;
  Rng init = make_stream(seed, "init");
  model.initialize(init);
  Rng shuffle = make_stream(seed, "shuffle");

  LossConfig monitor = run.loss;
  monitor.treg_enabled = false;
  const bool treg = run.loss.treg_enabled && run.loss.beta > 0.0;

  OptimizerConfig oc;
  oc.kind = run.train.optimizer;
  oc.lr = run.train.lr;
  Optimizer opt(oc, model.params().size());

  const Eigen::Index n = train_set.size();
  const Eigen::Index batch = n <= run.train.full_batch_max ? n : std::min<Eigen::Index>(run.train.batch_size, n);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);

  Eigen::VectorXd& params = model.params().values();
  Eigen::VectorXd best = params;
  double best_val = std::numeric_limits<double>::infinity();
  long since_best = 0;
  Eigen::VectorXd grad;
  for (long epoch = 1; epoch <= run.train.epochs; ++epoch) {
    double train_loss = 0.0;
    try {
      if (batch == n) {
        train_loss = evaluate_loss(model, params, train_set, run.loss, &grad).total;
        opt.step(params, grad);
      } else {
        std::shuffle(order.begin(), order.end(), shuffle);
        long batches = 0;
        for (Eigen::Index s = 0; s < n; s += batch) {
          const Eigen::Index e = std::min(n, s + batch);
          const Dataset mb = train_set.subset({order.begin() + s, order.begin() + e});
          train_loss += evaluate_loss(model, params, mb, run.loss, &grad).total;
          opt.step(params, grad);
          ++batches;
        }
        train_loss /= static_cast<double>(batches);
      }
      if (!params.allFinite()) throw NumericError("non-finite parameters");
    } catch (const NumericError& e) {
      throw NumericError(std::string("training diverged: ") + e.what(), epoch);
    }
    double val = std::numeric_limits<double>::infinity();
    try {
      val = evaluate_loss(model, params, val_set, monitor, nullptr).base;
    } catch (const NumericError&) {
    }
    if (log) log->epochs.push_back({epoch, train_loss, val});
    tm.meta.epochs = epoch;
    tm.meta.final_train_loss = train_loss;
    if (val < best_val) {
      best_val = val;
      best = params;
      tm.meta.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= run.train.patience) {
      break;
    }
  }
  if (!std::isfinite(best_val)) throw NumericError("validation loss never finite", tm.meta.epochs);
  params = best;
  tm.meta.best_val_loss = best_val;
  tm.meta.seed = seed;
  if (treg) {
    const EpsPolishReport rep = polish_eps(model, train_set, run.train.polish_tol);
    if (log) log->polish = rep;
  } else {
    model.params().segment("eps").setZero();
  }
  const Eigen::VectorXd resid = stationarity_residuals(model, train_set);
  tm.meta.eps_stationarity = resid.cwiseAbs().maxCoeff();
  return tm;
}

double mae_ate(double ate_estimate, double ate_oracle) { return std::abs(ate_estimate - ate_oracle); }

double amse_adcf(const std::vector<double>& psi_hat, const std::vector<double>& psi_true) {
  if (psi_hat.size() != psi_true.size() || psi_hat.empty()) throw DataError("AMSE needs matching nonempty curves");
  double s = 0.0;
  for (std::size_t i = 0; i < psi_hat.size(); ++i) s += (psi_hat[i] - psi_true[i]) * (psi_hat[i] - psi_true[i]);
  return s / static_cast<double>(psi_hat.size());
}

double interpolate_curve(const std::vector<double>& g, double a) {
  if (g.size() < 2) throw DataError("curve needs at least two grid points");
  if (!(a >= 0.0 && a <= 1.0)) throw DomainError("dose outside [0, 1]");
  const double pos = a * static_cast<double>(g.size() - 1);
  const std::size_t lo = std::min<std::size_t>(static_cast<std::size_t>(pos), g.size() - 2);
  const double u = pos - static_cast<double>(lo);
  return g[lo] + u * (g[lo + 1] - g[lo]);
}

void ResultTable::aggregate() {
  mean.assign(methods.size(), 0.0);
  stddev.assign(methods.size(), 0.0);
  for (std::size_t m = 0; m < methods.size(); ++m) {
    std::vector<double> ok;
    for (double v : values[m])
      if (std::isfinite(v)) ok.push_back(v);
    if (ok.empty()) {
      mean[m] = stddev[m] = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    mean[m] = std::accumulate(ok.begin(), ok.end(), 0.0) / static_cast<double>(ok.size());
    double ss = 0.0;
    for (double v : ok) ss += (v - mean[m]) * (v - mean[m]);
    stddev[m] = ok.size() > 1 ? std::sqrt(ss / static_cast<double>(ok.size() - 1)) : 0.0;
  }
}

nlohmann::json ResultTable::to_json() const {
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  nlohmann::json j;
  j["schema_version"] = 1;
  j["metric"] = metric;
  j["config_hash"] = config_hash;
  j["seeds"] = seeds;
  j["failures"] = failures;
  nlohmann::json ms = nlohmann::json::object();
  for (std::size_t m = 0; m < methods.size(); ++m) {
    nlohmann::json vals = nlohmann::json::array();
    for (double v : values[m]) vals.push_back(num(v));
    ms[methods[m]] = {{"values", vals}, {"mean", num(mean[m])}, {"std", num(stddev[m])}};
  }
  j["methods"] = ms;
  j["timing"] = {{"runtime_seconds", runtime_seconds}};
  return j;
}

std::string ResultTable::to_text() const {
  std::ostringstream ss;
  ss << metric << "  (config " << config_hash << ")\n";
  ss << std::left << std::setw(10) << "method" << std::right << std::setw(14) << "mean" << std::setw(14) << "std";
  for (std::size_t r = 0; r < seeds.size(); ++r) ss << std::setw(12) << ("rep" + std::to_string(r));
  ss << '\n';
  ss << std::setprecision(6);
  for (std::size_t m = 0; m < methods.size(); ++m) {
    ss << std::left << std::setw(10) << methods[m] << std::right << std::setw(14) << mean[m] << std::setw(14)
       << stddev[m];
    for (double v : values[m]) ss << std::setw(12) << v;
    ss << '\n';
  }
  for (const std::string& f : failures) ss << "failed: " << f << '\n';
  return ss.str();
}

namespace {

Eigen::MatrixXd read_covariates(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open covariates '" + path + "'");
  std::string line;
  std::getline(in, line);
  std::vector<std::vector<double>> rows;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> r;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) {
      double v = 0.0;
      if (!parse_double(cell, v)) throw DataError("cannot parse '" + cell + "' as a number", line_no);
      r.push_back(v);
    }
    if (!rows.empty() && r.size() != rows.front().size()) throw DataError("ragged covariate row", line_no);
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw DataError("covariates '" + path + "' has no rows");
  Eigen::MatrixXd X(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return X;
}

std::uint64_t rep_seed(const RunConfig& run, int rep) { return derive_seed(run.seed, "rep", static_cast<std::uint64_t>(rep)); }

}  // namespace

Dataset make_dataset(const RunConfig& run, std::uint64_t seed, DGPSpec* realized) {
  DGPSpec spec = run.dgp;
  Dataset d;
  if (spec.scenario == Scenario::Synthetic) {
    d = generate(spec, run.n, seed);
  } else {
    const Eigen::MatrixXd X = run.covariates_path.empty()
                                  ? surrogate_covariates(spec.semi.preset, run.n, derive_seed(run.seed, "covariates"))
                                  : read_covariates(run.covariates_path);
    d = gen_semisynthetic(X, spec, seed);
  }
  if (realized) *realized = spec;
  return d;
}

ReplicationResult run_replication(const RunConfig& run, int rep) {
  const std::uint64_t seed = rep_seed(run, rep);
  DGPSpec spec;
  const Dataset data = make_dataset(run, seed, &spec);
  const Split parts = split(data, run.fractions, seed);
  const TrainedModel tm = train(run, parts.train, parts.val, seed);
  const bool treg = run.loss.treg_enabled && run.loss.beta > 0.0;
  // With detached nuisances the plug-in of this model is the beta = 0 fit.
  std::optional<TrainedModel> baseline;
  if (treg && !run.loss.detach_nuisances_in_treg) {
    RunConfig base = run;
    base.loss.beta = 0.0;
    baseline = train(base, parts.train, parts.val, seed);
  }
  const Model& plug = baseline ? baseline->model : tm.model;
  const Eigen::MatrixXd& X = parts.test.X;

  ReplicationResult out;
  if (run.dgp.treatment == TreatmentKind::Binary) {
    const double truth = oracle_ate(spec, X).value;
    const NuisancePair fitted = fitted_nuisances(tm.model);
    out.methods = {"plugin", "tr", "dr"};
    out.values = {mae_ate(psi_plugin(plug, X, 1.0) - psi_plugin(plug, X, 0.0), truth),
                  mae_ate(psi_tr(tm.model, X, 1.0) - psi_tr(tm.model, X, 0.0), truth),
                  mae_ate(psi_dr(fitted, parts.test, 1.0) - psi_dr(fitted, parts.test, 0.0), truth)};
    return out;
  }
  const int G = run.dose_grid_points;
  std::vector<double> plug_curve(static_cast<std::size_t>(G)), tr_curve(static_cast<std::size_t>(G));
  for (int g = 0; g < G; ++g) {
    const double a = static_cast<double>(g) / (G - 1);
    plug_curve[static_cast<std::size_t>(g)] = psi_plugin(plug, X, a);
    tr_curve[static_cast<std::size_t>(g)] = psi_tr(tm.model, X, a);
  }
  std::vector<double> p_hat, t_hat, truth;
  for (Eigen::Index i = 0; i < parts.test.size(); ++i) {
    const double a = parts.test.A(i);
    p_hat.push_back(interpolate_curve(plug_curve, a));
    t_hat.push_back(interpolate_curve(tr_curve, a));
    truth.push_back(oracle_adcf(spec, X, a).value);
  }
  out.methods = {"plugin", "tr"};
  out.values = {amse_adcf(p_hat, truth), amse_adcf(t_hat, truth)};
  return out;
}

ResultTable replicate(const RunConfig& run) {
  run.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const int k = run.replications;
  std::vector<std::optional<ReplicationResult>> results(static_cast<std::size_t>(k));
  std::vector<std::string> errors(static_cast<std::size_t>(k));
  parallel_for(k, [&](int r) {
    try {
      results[static_cast<std::size_t>(r)] = run_replication(run, r);
    } catch (const std::exception& e) {
      errors[static_cast<std::size_t>(r)] = e.what();
    }
  });
  ResultTable t;
  t.metric = run.dgp.treatment == TreatmentKind::Binary ? "mae_ate" : "amse_adcf";
  t.methods = run.dgp.treatment == TreatmentKind::Binary ? std::vector<std::string>{"plugin", "tr", "dr"}
                                                         : std::vector<std::string>{"plugin", "tr"};
  t.values.assign(t.methods.size(), std::vector<double>(static_cast<std::size_t>(k),
                                                        std::numeric_limits<double>::quiet_NaN()));
  for (int r = 0; r < k; ++r) {
    t.seeds.push_back(rep_seed(run, r));
    const auto& res = results[static_cast<std::size_t>(r)];
    if (!res) {
      t.failures.push_back("rep " + std::to_string(r) + " seed " + std::to_string(rep_seed(run, r)) + ": " +
                           errors[static_cast<std::size_t>(r)]);
      continue;
    }
    for (std::size_t m = 0; m < t.methods.size(); ++m) t.values[m][static_cast<std::size_t>(r)] = res->values[m];
  }
  t.aggregate();
  t.config_hash = config_hash(run);
  t.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return t;
}

std::vector<ResultTable> beta_sweep(const RunConfig& run, const std::vector<double>& betas) {
  std::vector<ResultTable> out;
  for (double b : betas) {
    RunConfig r = run;
    r.loss.beta = b;
    ResultTable t = replicate(r);
    t.metric += " beta=" + format_double(b);
    out.push_back(std::move(t));
  }
  return out;
}

std::string to_string(RateEstimator e) {
  switch (e) {
    case RateEstimator::DrOracle: return "dr_oracle";
    case RateEstimator::PluginCorruptedMu: return "plugin_corrupted_mu";
    case RateEstimator::DrCorruptedPi: return "dr_corrupted_pi";
  }
  return "?";
}

RateEstimator rate_estimator_from_string(const std::string& name) {
  if (name == "dr_oracle") return RateEstimator::DrOracle;
  if (name == "plugin_corrupted_mu") return RateEstimator::PluginCorruptedMu;
  if (name == "dr_corrupted_pi") return RateEstimator::DrCorruptedPi;
  throw ConfigError("unknown rate-study estimator '" + name + "'");
}

double ols_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxy / sxx;
}

nlohmann::json RateReport::to_json() const {
  nlohmann::json rows_j = nlohmann::json::array();
  for (const RateRow& r : rows) rows_j.push_back({{"n", r.n}, {"mean_abs_error", r.mean_abs_error}, {"errors", r.errors}});
  return {{"schema_version", 1},  {"estimator", to_string(estimator)}, {"truth", truth},
          {"rows", rows_j},       {"slope", slope},                   {"ci", {ci_low, ci_high}},
          {"skipped", skipped}};
}

RateReport rate_study(const RunConfig& run, const std::vector<long>& n_grid, int reps, RateEstimator estimator,
                      long n_truth) {
  if (n_grid.size() < 2 || reps < 1) throw ConfigError("rate study needs >= 2 sample sizes and >= 1 replication");
  const DGPSpec& spec = run.dgp;
  if (spec.scenario != Scenario::Synthetic || spec.treatment != TreatmentKind::Binary)
    throw ConfigError("rate study runs on the synthetic binary scenario");
  constexpr double arm = 1.0;
  RateReport rep;
  rep.estimator = estimator;
  const Dataset big = generate(spec, n_truth, derive_seed(run.seed, "truth"));
  rep.truth = oracle_adcf(spec, big.X, arm).value;
  const NuisancePair oracle = oracle_nuisances(spec);
  const NuisancePair bad_mu = corrupt_mu(oracle, 0.5);
  const NuisancePair bad_pi = corrupt_pi_constant(oracle, 0.5);

  const int jobs = static_cast<int>(n_grid.size()) * reps;
  std::vector<double> err(static_cast<std::size_t>(jobs));
  parallel_for(jobs, [&](int j) {
    const std::size_t gi = static_cast<std::size_t>(j / reps);
    const long n = n_grid[gi];
    const Dataset d = generate(spec, n, derive_seed(run.seed, "mc", static_cast<std::uint64_t>(j)));
    double est = 0.0;
    switch (estimator) {
      case RateEstimator::DrOracle: est = psi_dr(oracle, d, arm); break;
      case RateEstimator::PluginCorruptedMu: est = psi_plugin(bad_mu, d.X, arm); break;
      case RateEstimator::DrCorruptedPi: est = psi_dr(bad_pi, d, arm); break;
    }
    err[static_cast<std::size_t>(j)] = std::abs(est - rep.truth);
  });

  std::vector<double> lx;
  for (std::size_t g = 0; g < n_grid.size(); ++g) {
    RateRow row;
    row.n = n_grid[g];
    row.errors.assign(err.begin() + static_cast<long>(g) * reps, err.begin() + static_cast<long>(g + 1) * reps);
    row.mean_abs_error = std::accumulate(row.errors.begin(), row.errors.end(), 0.0) / reps;
    rep.rows.push_back(row);
    lx.push_back(std::log(static_cast<double>(row.n)));
  }
  const bool floor = std::all_of(err.begin(), err.end(), [](double e) { return e < 1e-12; });
  if (floor) {
    rep.skipped = true;
    return rep;
  }
  std::vector<double> ly;
  for (const RateRow& r : rep.rows) ly.push_back(std::log(r.mean_abs_error));
  rep.slope = ols_slope(lx, ly);

  Rng rng = make_stream(run.seed, "bootstrap");
  std::uniform_int_distribution<int> pick(0, reps - 1);
  std::vector<double> slopes;
  for (int b = 0; b < 1000; ++b) {
    std::vector<double> by;
    for (const RateRow& r : rep.rows) {
      double s = 0.0;
      for (int k = 0; k < reps; ++k) s += r.errors[static_cast<std::size_t>(pick(rng))];
      by.push_back(std::log(std::max(s / reps, 1e-300)));
    }
    slopes.push_back(ols_slope(lx, by));
  }
  std::sort(slopes.begin(), slopes.end());
  rep.ci_low = slopes[24];
  rep.ci_high = slopes[974];
  return rep;
}

int worker_count() {
  int n = static_cast<int>(std::thread::hardware_concurrency());
  if (n < 1) n = 1;
  if (const char* env = std::getenv("EF_TARGET_THREADS")) {
    const int cap = std::atoi(env);
    if (cap >= 1) n = std::min(n, cap);
  }
  return n;
}

void parallel_for(int count, const std::function<void(int)>& body) {
  const int workers = std::min(worker_count(), count);
  if (workers <= 1) {
    for (int i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (int i = next++; i < count; i = next++) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  for (std::thread& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace eftr
