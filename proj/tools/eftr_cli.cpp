#include <chrono>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "eftr/bench.hpp"
#include "eftr/config.hpp"
#include "eftr/errors.hpp"
#include "eftr/estimators.hpp"
#include "eftr/io.hpp"
#include "selfcheck.hpp"

using namespace eftr;

namespace {

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  std::string out = ".";
  int verbosity = 0;
};

RunConfig load_run(const Common& c) {
  Json doc = c.config.empty() ? Json::object() : load_config_file(c.config);
  for (const std::string& o : c.overrides) apply_override(doc, o);
  return run_config_from_json(doc);
}

std::string path_in(const Common& c, const std::string& name) { return (std::filesystem::path(c.out) / name).string(); }

template <class T>
std::vector<T> parse_list(const std::string& text, const char* what) {
  std::vector<T> out;
  std::istringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    double v = 0.0;
    if (!parse_double(tok, v)) throw ConfigError(std::string("cannot parse ") + what + " entry '" + tok + "'");
    out.push_back(static_cast<T>(v));
  }
  if (out.empty()) throw ConfigError(std::string(what) + " is empty");
  return out;
}

Json with_timing(Json j, std::chrono::steady_clock::time_point t0) {
  j["timing"] = {{"runtime_seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()}};
  return j;
}

int cmd_gen_data(const Common& c) {
  const RunConfig run = load_run(c);
  DGPSpec spec;
  const Dataset d = make_dataset(run, derive_seed(run.seed, "rep", 0), &spec);
  export_csv(d, path_in(c, "data.csv"));
  Json oracle;
  if (spec.treatment == TreatmentKind::Binary) {
    const OracleValue ate = oracle_ate(spec, d.X);
    oracle["ate"] = {{"value", ate.value}, {"mc_se", ate.mc_se}, {"n_mc", ate.n_mc}, {"seed", d.meta.seed}};
  }
  Json curve = Json::array();
  const int G = spec.treatment == TreatmentKind::Binary ? 2 : run.dose_grid_points;
  for (int g = 0; g < G; ++g) {
    const double a = static_cast<double>(g) / (G - 1);
    const OracleValue v = oracle_adcf(spec, d.X, a);
    curve.push_back({{"dose", a}, {"value", v.value}, {"mc_se", v.mc_se}, {"n_mc", v.n_mc}, {"seed", d.meta.seed}});
  }
  oracle["adcf"] = curve;
  oracle["dgp"] = to_json(spec);
  oracle["dgp_hash"] = spec.hash();
  oracle["config_hash"] = config_hash(run);
  write_file_atomic(path_in(c, "oracle.json"), dump_json(oracle));
  if (c.verbosity > 0) std::cerr << "wrote " << d.size() << " rows to " << path_in(c, "data.csv") << "\n";
  return 0;
}

Dataset load_or_generate(const RunConfig& run, const std::string& data_path) {
  if (data_path.empty()) return make_dataset(run, derive_seed(run.seed, "rep", 0));
  Dataset d = ingest_csv(data_path, run.dgp.family, run.dgp.treatment);
  d.meta.seed = run.seed;
  return d;
}

int cmd_train(const Common& c, const std::string& data_path) {
  const auto t0 = std::chrono::steady_clock::now();
  const RunConfig run = load_run(c);
  const Dataset d = load_or_generate(run, data_path);
  const std::uint64_t seed = derive_seed(run.seed, "rep", 0);
  const Split parts = split(d, run.fractions, seed);
  TrainLog log;
  const TrainedModel tm = train(run, parts.train, parts.val, seed, &log);
  const std::string hash = config_hash(run);
  write_file_atomic(path_in(c, "checkpoint.json"), dump_json(checkpoint_to_json(tm, hash)));
  Json epochs = Json::array();
  for (const EpochRecord& e : log.epochs) epochs.push_back({e.epoch, e.train_loss, e.val_base_loss});
  Json j = {{"config_hash", hash},
            {"columns", {"epoch", "train_loss", "val_base_loss"}},
            {"epochs", epochs},
            {"best_epoch", tm.meta.best_epoch},
            {"polish", {{"iterations", log.polish.iterations}, {"max_abs_gradient", log.polish.max_abs_gradient},
                        {"converged", log.polish.converged}}},
            {"eps_stationarity", tm.meta.eps_stationarity}};
  write_file_atomic(path_in(c, "train_log.json"), dump_json(with_timing(j, t0)));
  if (c.verbosity > 0)
    std::cerr << "trained " << tm.meta.epochs << " epochs (best " << tm.meta.best_epoch << ", val "
              << tm.meta.best_val_loss << "), polish " << log.polish.iterations << " iterations, stationarity "
              << tm.meta.eps_stationarity << "\n";
  return 0;
}

int cmd_estimate(const Common& c, const std::string& checkpoint, const std::string& data_path) {
  const TrainedModel tm = checkpoint_from_json(Json::parse(read_file(checkpoint)));
  const ModelConfig& mc = tm.model.config();
  Dataset d;
  if (!data_path.empty()) {
    d = ingest_csv(data_path, mc.family, mc.treatment);
  } else {
    const RunConfig run = load_run(c);
    d = make_dataset(run, derive_seed(run.seed, "rep", 0));
  }
  if (d.dim() != mc.input_dim) throw DataError("data has " + std::to_string(d.dim()) + " covariates, model expects " +
                                               std::to_string(mc.input_dim));
  const EstimateReport rep = estimate(tm.model, d);
  Json j = rep.to_json();
  j["checkpoint"] = checkpoint;
  write_file_atomic(path_in(c, "estimate.json"), dump_json(j));
  std::cout << dump_json(j);
  return 0;
}

int cmd_eval(const Common& c) {
  const RunConfig run = load_run(c);
  const ResultTable t = replicate(run);
  if (c.verbosity > 0) std::cerr << t.seeds.size() << " replications in " << t.runtime_seconds << " s\n";
  write_file_atomic(path_in(c, "table.json"), dump_json(t.to_json()));
  write_file_atomic(path_in(c, "table.txt"), t.to_text());
  std::cout << t.to_text();
  return 0;
}

int cmd_beta_sweep(const Common& c, const std::string& betas) {
  const RunConfig run = load_run(c);
  const std::vector<ResultTable> tables = beta_sweep(run, parse_list<double>(betas, "betas"));
  Json j = {{"schema_version", 1}, {"config_hash", config_hash(run)}, {"tables", Json::array()}};
  std::string text;
  for (const ResultTable& t : tables) {
    j["tables"].push_back(t.to_json());
    text += t.to_text() + "\n";
  }
  write_file_atomic(path_in(c, "beta_sweep.json"), dump_json(j));
  write_file_atomic(path_in(c, "beta_sweep.txt"), text);
  std::cout << text;
  return 0;
}

int cmd_rate_study(const Common& c, const std::string& grid, int reps, const std::string& estimator) {
  const RunConfig run = load_run(c);
  const RateReport r = rate_study(run, parse_list<long>(grid, "n-grid"), reps, rate_estimator_from_string(estimator));
  Json j = r.to_json();
  j["config_hash"] = config_hash(run);
  write_file_atomic(path_in(c, "rate_study.json"), dump_json(j));
  std::ostringstream ss;
  ss << to_string(r.estimator) << "  truth " << r.truth << "\n";
  for (const RateRow& row : r.rows) ss << "  n=" << row.n << "  mean|err|=" << row.mean_abs_error << "\n";
  if (r.skipped)
    ss << "  slope skipped (errors at the Monte-Carlo floor)\n";
  else
    ss << "  slope " << r.slope << "  95% CI [" << r.ci_low << ", " << r.ci_high << "]\n";
  write_file_atomic(path_in(c, "rate_study.txt"), ss.str());
  std::cout << ss.str();
  return 0;
}

int cmd_gradcheck(const Common& c) {
  RunConfig run = load_run(c);
  const Dataset d = make_dataset(run, derive_seed(run.seed, "rep", 0)).subset({0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11,
                                                                                12, 13, 14, 15, 16, 17, 18, 19});
  Model model(resolved_model_config(run, d.size(), d.dim()));
  Rng rng = make_stream(run.seed, "init");
  model.initialize(rng);
  Rng er = make_stream(run.seed, "gradcheck");
  std::normal_distribution<double> g(0.0, 0.1);
  for (Eigen::Index k = 0; k < model.eps_slice().size; ++k) model.params().values()(model.eps_slice().offset + k) = g(er);
  bool ok = true;
  Json j = {{"config_hash", config_hash(run)}, {"checks", Json::array()}};
  for (bool treg : {false, true}) {
    LossConfig lc = run.loss;
    lc.treg_enabled = treg;
    const GradCheckReport r = grad_check(make_loss_function(model, d, lc), model.params().values());
    ok = ok && r.passed;
    const std::string name = treg ? "total_loss" : "base_loss";
    j["checks"].push_back({{"loss", name}, {"max_rel_err", r.max_rel_err}, {"worst_coordinate", r.worst_coordinate},
                           {"passed", r.passed}});
    std::cout << (r.passed ? "PASS " : "FAIL ") << name << " max_rel_err=" << r.max_rel_err << "\n";
  }
  write_file_atomic(path_in(c, "gradcheck.json"), dump_json(j));
  return ok ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Targeted estimation of average dose canonical functions"};
  app.require_subcommand(1);
  Common c;
  std::string data_path, checkpoint, betas = "0,0.25,0.5,1,2,4", grid = "1000,4000,16000,64000",
                                     estimator = "dr_oracle";
  int reps = 10;

  auto common = [&c](CLI::App* s, bool config_required) {
    auto* opt = s->add_option("--config", c.config, "Run config (TOML or JSON)");
    if (config_required) opt->required();
    s->add_option("--set", c.overrides, "Override a config field: key.path=value")->allow_extra_args(false);
    s->add_option("--out", c.out, "Output directory");
    s->add_flag("-v,--verbose", "More logging");
  };
  auto* gen = app.add_subcommand("gen-data", "Generate a dataset and its oracle");
  common(gen, true);
  auto* tr = app.add_subcommand("train", "Train a model and write a checkpoint");
  common(tr, true);
  tr->add_option("--data", data_path, "CSV dataset (default: generate from the config)");
  auto* est = app.add_subcommand("estimate", "Estimate psi from a checkpoint");
  common(est, false);
  est->add_option("--checkpoint", checkpoint, "Checkpoint JSON")->required();
  est->add_option("--data", data_path, "CSV dataset");
  auto* ev = app.add_subcommand("eval", "Replicated evaluation table");
  common(ev, true);
  auto* rs = app.add_subcommand("rate-study", "Convergence-rate study");
  common(rs, true);
  rs->add_option("--n-grid", grid, "Comma-separated sample sizes");
  rs->add_option("--reps", reps, "Replications per sample size");
  rs->add_option("--estimator", estimator, "dr_oracle | plugin_corrupted_mu | dr_corrupted_pi");
  auto* bs = app.add_subcommand("beta-sweep", "Paired sweep over beta");
  common(bs, true);
  bs->add_option("--betas", betas, "Comma-separated beta values");
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of the loss gradients");
  common(gc, true);
  auto* sc = app.add_subcommand("selfcheck", "Run the invariant suite");
  const std::vector<CLI::App*> with_common{gen, tr, est, ev, rs, bs, gc};

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  for (CLI::App* s : with_common)
    if (*s) c.verbosity = static_cast<int>(s->count("--verbose"));

  try {
    if (!c.out.empty()) std::filesystem::create_directories(c.out);
    if (*gen) return cmd_gen_data(c);
    if (*tr) return cmd_train(c, data_path);
    if (*est) return cmd_estimate(c, checkpoint, data_path);
    if (*ev) return cmd_eval(c);
    if (*rs) return cmd_rate_study(c, grid, reps, estimator);
    if (*bs) return cmd_beta_sweep(c, betas);
    if (*gc) return cmd_gradcheck(c);
    if (*sc) return run_selfcheck(std::cout) == 0 ? 0 : 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const DomainError& e) {
    std::cerr << "domain error: " << e.what() << "\n";
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const Json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
