#include "eftr/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <random>

#include "eftr/errors.hpp"
#include "eftr/objective.hpp"

namespace eftr {

namespace {

Eigen::VectorXd link_rows(const FamilySpec& f, const Eigen::VectorXd& mu) {
  return mu.unaryExpr([&f](double m) { return link(f, clamp_mean(f, m)); });
}

void require_binary_dose(double a) {
  if (a != 0.0 && a != 1.0) throw DomainError("binary estimators need a in {0, 1}");
}

double sample_variance(const Eigen::VectorXd& v) {
  if (v.size() < 2) return 0.0;
  const double m = v.mean();
  return (v.array() - m).square().sum() / static_cast<double>(v.size() - 1);
}

}  // namespace

std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::Oracle: return "oracle";
    case Provenance::Fitted: return "fitted";
    case Provenance::Corrupted: return "corrupted";
  }
  return "?";
}

NuisancePair oracle_nuisances(const DGPSpec& spec) {
  auto s = std::make_shared<const DGPSpec>(spec);
  NuisancePair n;
  n.family = spec.family;
  n.mu = [s](const Eigen::MatrixXd& X, double a) { return oracle_mu_batch(*s, X, a); };
  n.pi = [s](const Eigen::MatrixXd& X, double a) { return oracle_pi_batch(*s, X, a); };
  n.provenance = Provenance::Oracle;
  n.description = "oracle " + spec.hash();
  return n;
}

NuisancePair fitted_nuisances(const Model& model) {
  auto m = std::make_shared<const Model>(model);
  NuisancePair n;
  n.family = model.family();
  n.mu = [m](const Eigen::MatrixXd& X, double a) { return m->predict_mu(X, a); };
  n.pi = [m](const Eigen::MatrixXd& X, double a) { return m->predict_pi(X, a); };
  n.provenance = Provenance::Fitted;
  n.description = "fitted";
  return n;
}

NuisancePair corrupt_mu(const NuisancePair& base, double shift) {
  NuisancePair n = base;
  const FamilySpec f = base.family;
  n.mu = [f, inner = base.mu, shift](const Eigen::MatrixXd& X, double a) {
    const Eigen::VectorXd theta = link_rows(f, inner(X, a));
    return Eigen::VectorXd(theta.unaryExpr([&f, shift](double t) { return mean_from_theta(f, t + shift); }));
  };
  n.provenance = Provenance::Corrupted;
  n.description = base.description + "; mu shifted by " + std::to_string(shift) + " on the canonical scale";
  return n;
}

NuisancePair corrupt_pi_constant(const NuisancePair& base, double value) {
  NuisancePair n = base;
  n.pi = [value](const Eigen::MatrixXd& X, double a) {
    return Eigen::VectorXd::Constant(X.rows(), a == 0.0 ? 1.0 - value : value).eval();
  };
  n.provenance = Provenance::Corrupted;
  n.description = base.description + "; pi constant " + std::to_string(value);
  return n;
}

NuisancePair perturbation_path(const NuisancePair& truth, double d_mu, double d_pi) {
  NuisancePair n = truth;
  const FamilySpec f = truth.family;
  n.mu = [f, inner = truth.mu, d_mu](const Eigen::MatrixXd& X, double a) {
    const Eigen::VectorXd theta = link_rows(f, inner(X, a));
    Eigen::VectorXd out(X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i)
      out(i) = mean_from_theta(f, theta(i) + d_mu * (1.0 + 0.5 * std::sin(3.0 * X(i, 0))));
    return out;
  };
  n.pi = [inner = truth.pi, d_pi](const Eigen::MatrixXd& X, double a) {
    require_binary_dose(a);
    const Eigen::VectorXd p1 = inner(X, 1.0);
    Eigen::VectorXd out(X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      const double up = p1(i) * (1.0 + d_pi * 0.5 * std::cos(2.0 * X(i, 1)));
      const double bar1 = up / (up + 1.0 - p1(i));
      out(i) = a == 1.0 ? bar1 : 1.0 - bar1;
    }
    return out;
  };
  n.provenance = Provenance::Corrupted;
  n.description = truth.description + "; perturbation path";
  return n;
}

double psi_plugin(const NuisancePair& nuis, const Eigen::MatrixXd& X_eval, double a) {
  if (X_eval.rows() == 0) throw DataError("plug-in estimate over an empty covariate matrix");
  return link_rows(nuis.family, nuis.mu(X_eval, a)).mean();
}

double eif(const NuisancePair& nuis, const Eigen::VectorXd& x, double a_obs, double y, double a, double psi) {
  require_binary_dose(a);
  const Eigen::MatrixXd X = x.transpose();
  const double mu = clamp_mean(nuis.family, nuis.mu(X, a)(0));
  const double theta = link(nuis.family, mu);
  if (a_obs != a) return theta - psi;
  const double pi = clamp_propensity(nuis.pi(X, a)(0));
  return (y - mu) * link_prime(nuis.family, mu) / pi + theta - psi;
}

EifValues eif_values(const NuisancePair& nuis, const Dataset& data, double a, double psi) {
  require_binary_dose(a);
  const FamilySpec& f = nuis.family;
  const Eigen::VectorXd mu = nuis.mu(data.X, a).unaryExpr([&f](double m) { return clamp_mean(f, m); });
  const Eigen::VectorXd pi = nuis.pi(data.X, a);
  EifValues out;
  out.phi.resize(data.size());
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    double v = link(f, mu(i)) - psi;
    if (data.A(i) == a) {
      if (pi(i) < kOverlapClamp) ++out.clamp_hits;
      v += (data.Y(i) - mu(i)) * link_prime(f, mu(i)) / clamp_propensity(pi(i));
    }
    out.phi(i) = v;
  }
  return out;
}

double psi_dr(const NuisancePair& nuis, const Dataset& data, double a) {
  require_binary_dose(a);
  if (data.size() == 0) throw DataError("DR estimate over an empty dataset");
  if ((data.A.array() == a).count() == 0)
    throw DataError("no units observed at arm " + std::to_string(static_cast<int>(a)));
  return eif_values(nuis, data, a, 0.0).phi.mean();
}

double psi_dr_crossfit(const NuisanceFitter& fit, const Dataset& data, double a, std::uint64_t seed) {
  require_binary_dose(a);
  const Eigen::Index n = data.size();
  if (n < 4) throw DataError("cross-fitting needs at least 4 rows");
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng = make_stream(seed, "fold");
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto half = idx.begin() + n / 2;
  const std::vector<Eigen::Index> f0(idx.begin(), half), f1(half, idx.end());
  const Dataset d0 = data.subset(f0), d1 = data.subset(f1);
  const NuisancePair n0 = fit(d0), n1 = fit(d1);
  const Eigen::VectorXd phi1 = eif_values(n0, d1, a, 0.0).phi;
  const Eigen::VectorXd phi0 = eif_values(n1, d0, a, 0.0).phi;
  return (phi0.sum() + phi1.sum()) / static_cast<double>(n);
}

double psi_plugin(const Model& model, const Eigen::MatrixXd& X_eval, double a) {
  if (X_eval.rows() == 0) throw DataError("plug-in estimate over an empty covariate matrix");
  return model.predict_theta(X_eval, a).mean();
}

double psi_tr(const Model& model, const Eigen::MatrixXd& X_eval, double a) {
  if (X_eval.rows() == 0) throw DataError("targeted estimate over an empty covariate matrix");
  const FamilySpec& f = model.family();
  const Eigen::VectorXd mu = model.predict_mu(X_eval, a);
  const Eigen::VectorXd theta = model.predict_theta(X_eval, a);
  const Eigen::VectorXd pi = model.predict_pi(X_eval, a);
  const double eps = model.eval_eps(a);
  Eigen::VectorXd v(X_eval.rows());
  for (Eigen::Index i = 0; i < v.size(); ++i)
    v(i) = fluctuated_theta(theta(i), eps, clamp_propensity(pi(i)), link_prime(f, clamp_mean(f, mu(i))));
  return v.mean();
}

double remainder_r2(const NuisancePair& bar, const NuisancePair& truth, const Eigen::MatrixXd& X, double a) {
  const FamilySpec& f = truth.family;
  const Eigen::VectorXd mb = bar.mu(X, a), mt = truth.mu(X, a);
  const Eigen::VectorXd pb = bar.pi(X, a), pt = truth.pi(X, a);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const double mubar = clamp_mean(f, mb(i)), mu = clamp_mean(f, mt(i));
    const double mid = 0.5 * (mu + mubar);
    const double d = mubar - mu;
    sum += link_prime(f, mubar) * (pt(i) / clamp_propensity(pb(i)) - 1.0) * (mu - mubar) -
           0.5 * link_second(f, mid) * d * d;
  }
  return sum / static_cast<double>(X.rows());
}

VonMisesReport von_mises_check(const NuisancePair& bar, const DGPSpec& spec, double a, long n_mc, std::uint64_t seed) {
  require_binary_dose(a);
  if (n_mc < 2) throw ConfigError("von Mises check needs n_mc >= 2");
  const NuisancePair truth = oracle_nuisances(spec);
  const Dataset data = generate(spec, n_mc, seed);
  const FamilySpec& f = spec.family;
  const Eigen::VectorXd mb = bar.mu(data.X, a), mt = truth.mu(data.X, a);
  const Eigen::VectorXd pb = bar.pi(data.X, a), pt = truth.pi(data.X, a);
  Eigen::VectorXd diff(n_mc);
  double lhs = 0.0, rhs = 0.0;
  for (Eigen::Index i = 0; i < n_mc; ++i) {
    const double mubar = clamp_mean(f, mb(i)), mu = clamp_mean(f, mt(i));
    const double pib = clamp_propensity(pb(i));
    // psi(Pbar) - psi(P) + int phi(.; Pbar) dP, per draw
    double l = link(f, mubar) - link(f, mu);
    if (data.A(i) == a) l += (data.Y(i) - mubar) * link_prime(f, mubar) / pib;
    const double mid = 0.5 * (mu + mubar), d = mubar - mu;
    const double r = link_prime(f, mubar) * (pt(i) / pib - 1.0) * (mu - mubar) - 0.5 * link_second(f, mid) * d * d;
    lhs += l;
    rhs += r;
    diff(i) = l - r;
  }
  VonMisesReport rep;
  rep.n_mc = n_mc;
  rep.lhs = lhs / static_cast<double>(n_mc);
  rep.rhs = rhs / static_cast<double>(n_mc);
  rep.gap = std::abs(rep.lhs - rep.rhs);
  rep.mc_se = std::sqrt(sample_variance(diff) / static_cast<double>(n_mc));
  return rep;
}

double eif_variance(const NuisancePair& nuis, const Dataset& data, double a, double psi) {
  return sample_variance(eif_values(nuis, data, a, psi).phi);
}

nlohmann::json EstimateReport::to_json() const {
  nlohmann::json j;
  j["schema_version"] = kSchemaVersion;
  j["treatment"] = to_string(treatment);
  j["family"] = to_string(family);
  j["n"] = n;
  j["doses"] = doses;
  j["psi_plugin"] = psi_plugin;
  j["psi_tr"] = psi_tr;
  if (treatment == TreatmentKind::Binary) {
    j["psi_dr"] = psi_dr;
    j["eif_variance"] = eif_variance;
    j["ate"] = {{"plugin", psi_plugin[1] - psi_plugin[0]},
                {"tr", psi_tr[1] - psi_tr[0]},
                {"dr", psi_dr[1] - psi_dr[0]}};
  }
  j["diagnostics"] = {{"eps_stationarity_norm", eps_stationarity_norm}, {"clamp_hit_rate", clamp_hit_rate}};
  j["warnings"] = warnings;
  return j;
}

EstimateReport estimate(const Model& model, const Dataset& data, const std::vector<double>& dose_grid,
                        const Dataset* stationarity_data) {
  if (data.size() == 0) throw DataError("estimate over an empty dataset");
  EstimateReport rep;
  rep.treatment = model.config().treatment;
  rep.family = model.family().kind;
  rep.n = static_cast<long>(data.size());
  if (rep.treatment == TreatmentKind::Binary) {
    rep.doses = {0.0, 1.0};
  } else if (dose_grid.empty()) {
    for (int k = 0; k <= 20; ++k) rep.doses.push_back(k / 20.0);
  } else {
    rep.doses = dose_grid;
  }
  for (double a : rep.doses) {
    rep.psi_plugin.push_back(psi_plugin(model, data.X, a));
    rep.psi_tr.push_back(psi_tr(model, data.X, a));
  }
  const Eigen::VectorXd resid = stationarity_residuals(model, stationarity_data ? *stationarity_data : data);
  rep.eps_stationarity_norm = resid.size() ? resid.cwiseAbs().maxCoeff() : 0.0;
  if (rep.eps_stationarity_norm > 1e-4) rep.warnings.push_back("eps stationarity residual above 1e-4");

  long hits = 0;
  if (rep.treatment == TreatmentKind::Binary) {
    const NuisancePair fitted = fitted_nuisances(model);
    for (double a : rep.doses) {
      const EifValues ev = eif_values(fitted, data, a, 0.0);
      const double dr = ev.phi.mean();
      rep.psi_dr.push_back(dr);
      rep.eif_variance.push_back(sample_variance(ev.phi));
      hits += ev.clamp_hits;
    }
  } else {
    const ModelForward fwd = model.forward(data.X, data.A);
    hits = (fwd.pi.array() < kOverlapClamp).count();
  }
  rep.clamp_hit_rate = static_cast<double>(hits) / static_cast<double>(data.size());
  if (rep.clamp_hit_rate > 0.01) rep.warnings.push_back("overlap clamp hit rate above 1%");
  return rep;
}

}  // namespace eftr
