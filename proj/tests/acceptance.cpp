// Acceptance suite: one PASS/FAIL line per criterion, details indented below.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "eftr/bench.hpp"
#include "eftr/config.hpp"
#include "eftr/dgp.hpp"
#include "eftr/edf.hpp"
#include "eftr/estimators.hpp"
#include "eftr/objective.hpp"

using namespace eftr;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

RunConfig load(const std::string& name) {
  return run_config_from_json(load_config_file(std::string(EFTR_SOURCE_DIR) + "/configs/" + name));
}

double mean(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double se_of_mean(const Eigen::VectorXd& v) {
  const double m = v.mean();
  return std::sqrt((v.array() - m).square().sum() / (v.size() - 1.0) / v.size());
}

std::size_t column(const ResultTable& t, const std::string& method) {
  for (std::size_t m = 0; m < t.methods.size(); ++m)
    if (t.methods[m] == method) return m;
  throw std::runtime_error("table has no column " + method);
}

std::string row(const ResultTable& t, const std::string& method) {
  std::string s = method + " [";
  const auto& v = t.values[column(t, method)];
  for (std::size_t r = 0; r < v.size(); ++r) s += (r ? " " : "") + fmt(v[r]);
  return s + "] mean " + fmt(t.mean[column(t, method)]);
}

// mean(tr) <= mean(plugin) and tr wins in at least `wins_needed` paired replications
Outcome ordering(const ResultTable& t, int wins_needed) {
  const auto& p = t.values[column(t, "plugin")];
  const auto& q = t.values[column(t, "tr")];
  int wins = 0;
  for (std::size_t r = 0; r < p.size(); ++r) wins += std::isfinite(q[r]) && q[r] < p[r];
  const bool pass = t.failures.empty() && t.mean[column(t, "tr")] <= t.mean[column(t, "plugin")] && wins >= wins_needed;
  std::string d = t.metric + ": " + row(t, "plugin") + "; " + row(t, "tr") + "; tr wins " + std::to_string(wins) + "/" +
                  std::to_string(p.size());
  if (!t.failures.empty()) d += "; failures " + std::to_string(t.failures.size());
  return {pass, d};
}

Outcome c1() { return ordering(replicate(load("synthetic_bern_binary.toml")), 4); }

Outcome c2() { return ordering(replicate(load("synthetic_pois_binary.toml")), 4); }

Outcome c3() {
  const Outcome b = ordering(replicate(load("synthetic_bern_continuous.toml")), 0);
  const Outcome p = ordering(replicate(load("synthetic_pois_continuous.toml")), 0);
  return {b.pass && p.pass, "bernoulli " + b.detail + "\n      poisson " + p.detail};
}

Outcome c4() {
  bool pass = true;
  std::string d;
  for (const FamilySpec& f : {FamilySpec::bernoulli(), FamilySpec::poisson()}) {
    const DGPSpec spec = DGPSpec::synthetic(TreatmentKind::Binary, f);
    const Dataset data = generate(spec, 100000, derive_seed(4, "mc"));
    const NuisancePair oracle = oracle_nuisances(spec);
    for (double a : {0.0, 1.0}) {
      const double psi = oracle_adcf(spec, data.X, a).value;
      const Eigen::VectorXd phi = eif_values(oracle, data, a, psi).phi;
      const double m = phi.mean(), se = se_of_mean(phi);
      pass = pass && std::abs(m) <= 3 * se;
      d += to_string(f.kind) + " a=" + fmt(a) + ": mean " + fmt(m) + " se " + fmt(se) + "; ";
    }
  }
  return {pass, d};
}

Outcome c5() {
  const DGPSpec spec = DGPSpec::synthetic(TreatmentKind::Binary, FamilySpec::bernoulli());
  const NuisancePair truth = oracle_nuisances(spec);
  const Eigen::MatrixXd X = generate(spec, 100000, derive_seed(5, "mc")).X;
  const double a = 1.0;
  std::vector<double> deltas, lx, ly;
  for (int k = 1; k <= 8; ++k) deltas.push_back(std::ldexp(1.0, -k));
  for (double delta : deltas) {
    lx.push_back(std::log(delta));
    ly.push_back(std::log(std::abs(remainder_r2(perturbation_path(truth, delta, delta), truth, X, a))));
  }
  const double slope = ols_slope(lx, ly);
  const bool slope_ok = std::abs(slope - 2.0) <= 0.15;

  std::vector<VonMisesReport> reps;
  for (double delta : deltas)
    reps.push_back(von_mises_check(perturbation_path(truth, delta, delta), spec, a, 200000, derive_seed(5, "mc", 1)));
  // C from the two largest perturbations
  const double C = std::max(reps[0].gap / std::pow(deltas[0], 3), reps[1].gap / std::pow(deltas[1], 3));
  bool gaps_ok = true;
  std::string d = "R2 slope " + fmt(slope) + " (arm 1); C " + fmt(C) + "; gaps:";
  for (std::size_t k = 0; k < deltas.size(); ++k) {
    const double band = std::max(3 * reps[k].mc_se, C * std::pow(deltas[k], 3));
    gaps_ok = gaps_ok && reps[k].gap <= band;
    d += " " + fmt(reps[k].gap) + (reps[k].gap <= band ? "" : "(!)");
  }
  return {slope_ok && gaps_ok, d};
}

Outcome c6() {
  const DGPSpec spec = DGPSpec::synthetic(TreatmentKind::Binary, FamilySpec::bernoulli());
  const Dataset data = generate(spec, 100000, derive_seed(6, "mc"));
  const NuisancePair oracle = oracle_nuisances(spec);
  const NuisancePair bad_pi = corrupt_pi_constant(oracle, 0.5);
  const NuisancePair bad_mu = corrupt_mu(oracle, 0.5);
  bool pass = true;
  std::string d;
  for (double a : {0.0, 1.0}) {
    const double truth = oracle_adcf(spec, data.X, a).value;
    const double se_pi = std::sqrt(eif_variance(bad_pi, data, a, 0.0) / data.size());
    const double se_mu = std::sqrt(eif_variance(bad_mu, data, a, 0.0) / data.size());
    const double z_pi = std::abs(psi_dr(bad_pi, data, a) - truth) / se_pi;
    const double z_mu = std::abs(psi_dr(bad_mu, data, a) - truth) / se_mu;
    const double z_plug = std::abs(psi_plugin(bad_mu, data.X, a) - truth) / se_mu;
    pass = pass && z_pi <= 5 && z_mu <= 5 && z_plug >= 10;
    d += "a=" + fmt(a) + ": |DR bias|/SE (pi corrupted) " + fmt(z_pi) + ", (mu corrupted) " + fmt(z_mu) +
         ", plug-in (mu corrupted) " + fmt(z_plug) + "; ";
  }
  return {pass, d};
}

Outcome c7() {
  const RunConfig run = load("synthetic_bern_binary.toml");
  const RateReport r = rate_study(run, {1000, 4000, 16000, 64000}, 10, RateEstimator::DrOracle);
  std::string d = "mean |err|:";
  for (const RateRow& row : r.rows) d += " n=" + std::to_string(row.n) + " " + fmt(row.mean_abs_error);
  d += "; slope " + fmt(r.slope) + " CI [" + fmt(r.ci_low) + ", " + fmt(r.ci_high) + "]";
  return {!r.skipped && r.slope >= -0.65 && r.slope <= -0.35, d};
}

Outcome c8() {
  const RunConfig run = load("synthetic_bern_binary.toml");
  const std::uint64_t seed = derive_seed(run.seed, "rep", 0);
  const Dataset data = make_dataset(run, seed);
  const Split parts = split(data, run.fractions, seed);
  const TrainedModel tm = train(run, parts.train, parts.val, seed);
  const double resid = stationarity_residuals(tm.model, parts.train).cwiseAbs().maxCoeff();
  const NuisancePair fitted = fitted_nuisances(tm.model);
  const double n = static_cast<double>(parts.train.size());
  const double tol = std::max(1e-3, 5 / std::sqrt(n));
  bool pass = resid <= 1e-4;
  std::string d = "max stationarity residual " + fmt(resid) + "; tolerance " + fmt(tol) + ";";
  for (double a : {0.0, 1.0}) {
    const double tr = psi_tr(tm.model, parts.train.X, a), dr = psi_dr(fitted, parts.train, a);
    pass = pass && std::abs(tr - dr) <= tol;
    d += " a=" + fmt(a) + " tr " + fmt(tr) + " dr " + fmt(dr) + " |diff| " + fmt(std::abs(tr - dr)) + ";";
  }
  return {pass, d};
}

Outcome c9() {
  RunConfig run = load("synthetic_bern_binary.toml");
  run.n = 3000;
  run.train.epochs = 60;
  const std::uint64_t seed = derive_seed(run.seed, "rep", 0);
  const Dataset data = make_dataset(run, seed);
  const Split parts = split(data, run.fractions, seed);

  Model zeroed = train(run, parts.train, parts.val, seed).model;
  zeroed.params().segment("eps").setZero();
  bool tr_equal = true;
  for (double a : {0.0, 1.0}) tr_equal = tr_equal && psi_tr(zeroed, parts.test.X, a) == psi_plugin(zeroed, parts.test.X, a);
  const ModelForward f = zeroed.forward(parts.train.X, parts.train.A);
  double nll_mean = 0;
  for (Eigen::Index i = 0; i < parts.train.size(); ++i) nll_mean += nll(zeroed.family(), parts.train.Y(i), f.mu(i));
  nll_mean /= static_cast<double>(parts.train.size());
  const double treg_gap = std::abs(treg_loss(zeroed, parts.train) - nll_mean);

  RunConfig beta0 = run, plugin = run;
  beta0.loss.beta = 0.0;
  plugin.loss.treg_enabled = false;
  TrainLog log0, logp, log1;
  const TrainedModel m0 = train(beta0, parts.train, parts.val, seed, &log0);
  const TrainedModel mp = train(plugin, parts.train, parts.val, seed, &logp);
  const TrainedModel m1 = train(run, parts.train, parts.val, seed, &log1);
  bool same_traj = m0.model.params().values() == mp.model.params().values() && log0.epochs.size() == logp.epochs.size();
  for (std::size_t e = 0; same_traj && e < log0.epochs.size(); ++e)
    same_traj = log0.epochs[e].train_loss == logp.epochs[e].train_loss &&
                log0.epochs[e].val_base_loss == logp.epochs[e].val_base_loss;
  const Eigen::Index k = m0.model.eps_slice().offset;
  bool detached_same = m1.model.params().values().head(k) == m0.model.params().values().head(k) &&
                       log1.epochs.size() == log0.epochs.size();
  for (std::size_t e = 0; detached_same && e < log0.epochs.size(); ++e)
    detached_same = log1.epochs[e].val_base_loss == log0.epochs[e].val_base_loss;

  const bool pass = tr_equal && treg_gap <= 1e-12 && same_traj && detached_same;
  return {pass, std::string("psi_tr(eps=0) == plug-in bitwise: ") + (tr_equal ? "yes" : "no") + "; treg gap " +
                    fmt(treg_gap) + "; beta=0 vs plug-in trajectory bitwise: " + (same_traj ? "yes" : "no") +
                    "; beta=1 nuisance params equal beta=0 bitwise: " + (detached_same ? "yes" : "no")};
}

ModelConfig gradcheck_config(TreatmentKind t, FamilySpec f) {
  ModelConfig c;
  c.treatment = t;
  c.family = f;
  c.rep_dims = {8};
  c.outcome_dims = {6};
  c.density_dims = {6};
  c.density_grid = 5;
  c.hidden_activation = Activation::Softplus;
  c.outcome_activation = ModelConfig::default_outcome_activation(f);
  return c;
}

Outcome c10() {
  double worst_grad = 0.0;
  for (TreatmentKind t : {TreatmentKind::Binary, TreatmentKind::Continuous}) {
    for (const FamilySpec& f : {FamilySpec::bernoulli(), FamilySpec::poisson()}) {
      Model m(gradcheck_config(t, f));
      Rng rng(10);
      m.initialize(rng);
      std::normal_distribution<double> g(0.0, 0.1);
      for (Eigen::Index k = 0; k < m.eps_size(); ++k) m.params().segment("eps")(k) = g(rng);
      const Dataset d = gen_synthetic(20, t, f, 11);
      for (bool treg : {false, true}) {
        const LossConfig lc{1.0, treg, false};
        worst_grad = std::max(worst_grad, grad_check(make_loss_function(m, d, lc), m.params().values()).max_rel_err);
      }
    }
  }

  Model m(gradcheck_config(TreatmentKind::Continuous, FamilySpec::bernoulli()));
  Rng rng(12);
  m.initialize(rng);
  m.params().segment("density.1.bias").setLinSpaced(-2.0, 3.0);
  const Eigen::MatrixXd v = m.density_grid_values(gen_synthetic(1000, TreatmentKind::Continuous, FamilySpec::bernoulli(), 13).X);
  const double B = static_cast<double>(v.cols() - 1);
  double worst_density = 0.0;
  for (Eigen::Index i = 0; i < v.rows(); ++i)
    worst_density = std::max(worst_density, std::abs((v.row(i).sum() - 0.5 * (v(i, 0) + v(i, v.cols() - 1))) / B - 1.0));

  double worst_inverse = 0.0;
  for (const FamilySpec& f : {FamilySpec::bernoulli(), FamilySpec::poisson(), FamilySpec::gaussian()}) {
    for (int i = 1; i <= 999; ++i) {
      const double mu = f.kind == FamilyKind::Bernoulli ? i / 1000.0 : f.kind == FamilyKind::Poisson ? i / 50.0 : i / 10.0 - 50.0;
      worst_inverse = std::max(worst_inverse, std::abs(mean_from_theta(f, link(f, mu)) - mu) / std::max(1.0, std::abs(mu)));
    }
  }
  const bool pass = worst_grad <= 1e-4 && worst_density <= 1e-10 && worst_inverse <= 1e-12;
  return {pass, "grad_check max rel err " + fmt(worst_grad) + "; density integral err " + fmt(worst_density) +
                    "; inverse pair err " + fmt(worst_inverse)};
}

Outcome c11() {
  const RunConfig run = load("synthetic_bern_binary.toml");
  const std::vector<double> betas{0, 0.25, 0.5, 1, 2, 4};
  const std::vector<ResultTable> tables = beta_sweep(run, betas);
  const double base = tables[0].mean[column(tables[0], "tr")];
  bool pass = true;
  std::string d = "mean MAE:";
  for (std::size_t b = 0; b < betas.size(); ++b) {
    const double m = tables[b].mean[column(tables[b], "tr")];
    if (b > 0) pass = pass && m <= base + 0.05;
    d += " beta=" + fmt(betas[b]) + " " + fmt(m);
  }
  return {pass, d + "; allowed " + fmt(base + 0.05)};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"1 ordering, binary Bernoulli", c1},  {"2 ordering, binary Poisson", c2},
      {"3 ordering, continuous", c3},         {"4 EIF mean zero", c4},
      {"5 von Mises remainder", c5},          {"6 double robustness", c6},
      {"7 rate study", c7},                   {"8 eps stationarity", c8},
      {"9 exact reductions", c9},             {"10 numerics", c10},
      {"11 beta sensitivity", c11},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += !o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << "  (" << fmt(secs) << " s)\n      " << o.detail << "\n"
              << std::flush;
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed\n";
  return failed == 0 ? 0 : 1;
}
