#pragma once

// ADCF estimators psi_a = E[h(mu(X, a))].
//
//   plug-in   (1/n) sum h(mu^(x_i, a))
//   DR        plug-in + (1/n) sum 1(A_i = a) / pi^ (Y_i - mu^) h'(mu^)        (binary only)
//   targeted  (1/n) sum h(mu^(x_i, a)) + eps^(a) / pi^(a | x_i) h'(mu^(x_i, a))
//
// EIF: phi_a(z) = 1(A = a) / pi(a | x) (y - mu(x, a)) h'(mu(x, a)) + h(mu(x, a)) - psi_a.
// Second-order remainder of the von Mises expansion
//   psi(Pbar) - psi(P) + int phi(z; Pbar) dP = R2,
//   R2 = int h'(mubar)(pi/pibar - 1)(mu - mubar) dP - 1/2 int h''(mu*)(mubar - mu)^2 dP,
// with mu* between mu and mubar (the midpoint here).

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include "json.hpp"

#include "eftr/dataset.hpp"
#include "eftr/dgp.hpp"
#include "eftr/edf.hpp"
#include "eftr/model.hpp"

namespace eftr {

enum class Provenance { Oracle, Fitted, Corrupted };
std::string to_string(Provenance p);

// Batch nuisance functions: every row of X evaluated at the same dose a.
using NuisanceFn = std::function<Eigen::VectorXd(const Eigen::MatrixXd& X, double a)>;

struct NuisancePair {
  FamilySpec family;
  NuisanceFn mu;  // conditional mean
  NuisanceFn pi;  // arm probability or dose density
  Provenance provenance = Provenance::Oracle;
  std::string description;
};

NuisancePair oracle_nuisances(const DGPSpec& spec);
NuisancePair fitted_nuisances(const Model& model);
// mu shifted by `shift` on the canonical scale.
NuisancePair corrupt_mu(const NuisancePair& base, double shift);
// pi replaced by a constant (binary: arm probability `value` for a = 1).
NuisancePair corrupt_pi_constant(const NuisancePair& base, double value);

// Smooth path through `truth` (binary treatment):
//   theta_bar = theta + d_mu (1 + 0.5 sin(3 x1)),
//   pibar(1|x) = pi(1|x)(1 + d_pi g) / (pi(1|x)(1 + d_pi g) + pi(0|x)),  g = 0.5 cos(2 x2),
// and pibar(0|x) = 1 - pibar(1|x).
NuisancePair perturbation_path(const NuisancePair& truth, double d_mu, double d_pi);

double psi_plugin(const NuisancePair& nuis, const Eigen::MatrixXd& X_eval, double a);

double eif(const NuisancePair& nuis, const Eigen::VectorXd& x, double a_obs, double y, double a, double psi);

struct EifValues {
  Eigen::VectorXd phi;
  long clamp_hits = 0;  // rows with A = a whose pi fell below the overlap clamp
};
EifValues eif_values(const NuisancePair& nuis, const Dataset& data, double a, double psi);

double psi_dr(const NuisancePair& nuis, const Dataset& data, double a);

// 2-fold cross-fitting: nuisances fit on one fold are evaluated on the other;
// the two out-of-fold corrections are pooled.
using NuisanceFitter = std::function<NuisancePair(const Dataset& train)>;
double psi_dr_crossfit(const NuisanceFitter& fit, const Dataset& data, double a, std::uint64_t seed);

double psi_tr(const Model& model, const Eigen::MatrixXd& X_eval, double a);
double psi_plugin(const Model& model, const Eigen::MatrixXd& X_eval, double a);

double remainder_r2(const NuisancePair& bar, const NuisancePair& truth, const Eigen::MatrixXd& X_marginal, double a);

struct VonMisesReport {
  double lhs = 0.0;
  double rhs = 0.0;
  double gap = 0.0;
  double mc_se = 0.0;  // standard error of lhs - rhs
  long n_mc = 0;
};

// lhs by Monte Carlo over n_mc fresh draws (X, A, Y) from the DGP; rhs on the same X.
VonMisesReport von_mises_check(const NuisancePair& bar, const DGPSpec& spec, double a, long n_mc, std::uint64_t seed);

double eif_variance(const NuisancePair& nuis, const Dataset& data, double a, double psi);

struct EstimateReport {
  static constexpr int kSchemaVersion = 1;
  TreatmentKind treatment = TreatmentKind::Binary;
  FamilyKind family = FamilyKind::Bernoulli;
  long n = 0;
  std::vector<double> doses;
  std::vector<double> psi_plugin;
  std::vector<double> psi_tr;
  std::vector<double> psi_dr;        // binary only
  std::vector<double> eif_variance;  // binary only, fitted nuisances
  double eps_stationarity_norm = 0.0;
  double clamp_hit_rate = 0.0;
  std::vector<std::string> warnings;

  nlohmann::json to_json() const;
};

// Estimates on `data` (binary: both arms; continuous: `dose_grid`). The
// stationarity norm is measured on `stationarity_data` when given.
EstimateReport estimate(const Model& model, const Dataset& data, const std::vector<double>& dose_grid = {},
                        const Dataset* stationarity_data = nullptr);

}  // namespace eftr
