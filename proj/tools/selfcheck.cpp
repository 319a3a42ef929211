#include "selfcheck.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "eftr/bench.hpp"
#include "eftr/dgp.hpp"
#include "eftr/edf.hpp"
#include "eftr/estimators.hpp"
#include "eftr/model.hpp"
#include "eftr/objective.hpp"

namespace eftr {

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

ModelConfig small_config(TreatmentKind t, FamilySpec f) {
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

Model random_model(const ModelConfig& c, std::uint64_t seed) {
  Model m(c);
  Rng rng = make_stream(seed, "init");
  m.initialize(rng);
  std::normal_distribution<double> g(0.0, 0.2);
  const Slice& e = m.eps_slice();
  for (Eigen::Index k = 0; k < e.size; ++k) m.params().values()(e.offset + k) = g(rng);
  return m;
}

}  // namespace

int run_selfcheck(std::ostream& out) {
  int failures = 0;
  auto report = [&](const std::string& name, bool ok, const std::string& detail) {
    out << (ok ? "PASS " : "FAIL ") << name << "  " << detail << "\n";
    if (!ok) ++failures;
  };

  {
    double worst = 0.0;
    for (const FamilySpec& f : {FamilySpec::bernoulli(), FamilySpec::poisson(), FamilySpec::gaussian()}) {
      for (int i = 1; i <= 200; ++i) {
        const double mu = f.kind == FamilyKind::Bernoulli ? i / 201.0 : f.kind == FamilyKind::Poisson ? i / 20.0 : i / 10.0 - 10.0;
        worst = std::max(worst, std::abs(mean_from_theta(f, link(f, mu)) - mu));
      }
    }
    report("edf inverse pair", worst <= 1e-12, "max err " + num(worst));
  }

  {
    const Model m = random_model(small_config(TreatmentKind::Continuous, FamilySpec::bernoulli()), 3);
    const Dataset d = gen_synthetic(100, TreatmentKind::Continuous, FamilySpec::bernoulli(), 4);
    const Eigen::MatrixXd v = m.density_grid_values(d.X);
    const double B = static_cast<double>(v.cols() - 1);
    double worst = 0.0;
    for (Eigen::Index i = 0; i < v.rows(); ++i) {
      const double integral = (v.row(i).sum() - 0.5 * (v(i, 0) + v(i, v.cols() - 1))) / B;
      worst = std::max(worst, std::abs(integral - 1.0));
    }
    report("density head integrates to one", worst <= 1e-10, "max err " + num(worst));
  }

  for (TreatmentKind t : {TreatmentKind::Binary, TreatmentKind::Continuous}) {
    const FamilySpec f = FamilySpec::poisson();
    const Model m = random_model(small_config(t, f), 5);
    const Dataset d = gen_synthetic(20, t, f, 6);
    for (bool treg : {false, true}) {
      LossConfig lc;
      lc.treg_enabled = treg;
      lc.detach_nuisances_in_treg = false;
      const GradCheckReport r = grad_check(make_loss_function(m, d, lc), m.params().values());
      report(std::string("gradcheck ") + (treg ? "total loss " : "base loss ") + to_string(t), r.passed,
             "max rel err " + num(r.max_rel_err));
    }
  }

  {
    Model m = random_model(small_config(TreatmentKind::Binary, FamilySpec::bernoulli()), 7);
    m.params().segment("eps").setZero();
    const Dataset d = gen_synthetic(500, TreatmentKind::Binary, FamilySpec::bernoulli(), 8);
    bool same = true;
    for (double a : {0.0, 1.0}) same = same && psi_tr(m, d.X, a) == psi_plugin(m, d.X, a);
    report("psi_tr(eps = 0) equals plug-in", same, "bitwise");
    const ModelForward fw = m.forward(d.X, d.A);
    double nll_mean = 0.0;
    for (Eigen::Index i = 0; i < d.size(); ++i) nll_mean += nll(m.family(), d.Y(i), fw.mu(i));
    nll_mean /= static_cast<double>(d.size());
    const double gap = std::abs(treg_loss(m, d) - nll_mean);
    report("treg_loss(eps = 0) equals mean NLL", gap <= 1e-12, "gap " + num(gap));
  }

  for (const FamilySpec& f : {FamilySpec::bernoulli(), FamilySpec::poisson()}) {
    const DGPSpec spec = DGPSpec::synthetic(TreatmentKind::Binary, f);
    const Dataset d = generate(spec, 100000, 9);
    const NuisancePair oracle = oracle_nuisances(spec);
    for (double a : {0.0, 1.0}) {
      const double psi = oracle_adcf(spec, d.X, a).value;
      const Eigen::VectorXd phi = eif_values(oracle, d, a, psi).phi;
      const double mean = phi.mean();
      const double se = std::sqrt((phi.array() - mean).square().sum() / (phi.size() - 1.0) / phi.size());
      report("EIF mean zero " + to_string(f.kind) + " arm " + std::to_string(static_cast<int>(a)),
             std::abs(mean) <= 3.0 * se, "mean " + num(mean) + " se " + num(se));
    }
  }

  {
    const DGPSpec spec = DGPSpec::synthetic(TreatmentKind::Binary, FamilySpec::bernoulli());
    const Eigen::MatrixXd X = generate(spec, 100000, 10).X;
    const NuisancePair truth = oracle_nuisances(spec);
    std::vector<double> lx, ly;
    for (int k = 1; k <= 8; ++k) {
      const double delta = std::ldexp(1.0, -k);
      lx.push_back(std::log(delta));
      ly.push_back(std::log(std::abs(remainder_r2(perturbation_path(truth, delta, delta), truth, X, 1.0))));
    }
    const double slope = ols_slope(lx, ly);
    report("R2 quadratic decay", std::abs(slope - 2.0) <= 0.15, "slope " + num(slope));
  }

  {
    RunConfig run = RunConfig::for_dgp(DGPSpec::synthetic(TreatmentKind::Binary, FamilySpec::bernoulli()));
    run.model.rep_dims = {16};
    run.model.outcome_dims = {16};
    run.model.density_dims = {16};
    run.train.epochs = 30;
    const Dataset d = generate(run.dgp, 1000, 11);
    const Split parts = split(d, run.fractions, 11);
    const TrainedModel tm = train(run, parts.train, parts.val, 11);
    report("eps stationarity after polish", tm.meta.eps_stationarity <= 1e-4,
           "max residual " + num(tm.meta.eps_stationarity));
  }
  out << (failures == 0 ? "selfcheck passed" : "selfcheck FAILED (" + std::to_string(failures) + ")") << "\n";
  return failures;
}

}  // namespace eftr
