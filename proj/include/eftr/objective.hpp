#pragma once

// Training objectives.
//
//   L(mu, pi)        = (1/n) sum_i [ l(y_i, mu_i) - log pi(a_i | x_i) ]
//   R(mu, pi, eps)   = (1/n) sum_i [ -y_i theta~_i + kappa(theta~_i) ],
//                      theta~_i = h(mu_i) + eps(a_i) / pi_i * h'(mu_i)
//   L_TR             = L + beta * R
//
// d R / d c_k = (1/n) sum_i B_k(a_i) (kappa'(theta~_i) - y_i) h'(mu_i) / pi_i,
// so a stationary eps zeroes the weighted residuals (y - mu*) h'(mu) / pi along
// every basis direction.

#include <Eigen/Core>

#include "eftr/dataset.hpp"
#include "eftr/model.hpp"
#include "eftr/netcore.hpp"

namespace eftr {

// Lower bound applied to pi inside every 1/pi expression.
inline constexpr double kOverlapClamp = 1e-3;

inline double clamp_propensity(double pi) { return pi < kOverlapClamp ? kOverlapClamp : pi; }

struct LossConfig {
  double beta = 1.0;
  bool treg_enabled = true;
  // When set, R only updates the eps coefficients; mu and pi see L alone.
  bool detach_nuisances_in_treg = true;

  void validate() const;
};

// (1/n) sum [ nll(y_i, mu_i) - log pi_i ].
double base_loss(const FamilySpec& family, const Eigen::VectorXd& y, const Eigen::VectorXd& mu,
                 const Eigen::VectorXd& pi);

// theta + eps_a / pi * h'(mu). `pi` is expected to be clamped already.
inline double fluctuated_theta(double theta, double eps_a, double pi, double h_prime_mu) {
  return theta + eps_a / pi * h_prime_mu;
}

double treg_loss(const Model& model, const Dataset& batch);
Eigen::VectorXd treg_eps_gradient(const Model& model, const Dataset& batch);

// (1/n) sum_i B_k(a_i) (y_i - mu*_i) h'(mu_i) / pi_i for each k; the negated eps gradient.
Eigen::VectorXd stationarity_residuals(const Model& model, const Dataset& batch);

double total_loss(const Model& model, const Dataset& batch, const LossConfig& cfg);

struct LossBreakdown {
  double base = 0.0;
  double treg = 0.0;
  double total = 0.0;
};

// Loss at `params` (laid out like model.params()) with an optional gradient.
LossBreakdown evaluate_loss(const Model& model, const Eigen::VectorXd& params, const Dataset& batch,
                            const LossConfig& cfg, Eigen::VectorXd* grad);

LossFunction make_loss_function(const Model& model, const Dataset& batch, const LossConfig& cfg);

struct EpsPolishReport {
  int iterations = 0;
  double max_abs_gradient = 0.0;
  bool converged = false;
};

// Minimizes R over the eps coefficients with every other parameter frozen
// (damped Newton; R is convex in eps).
EpsPolishReport polish_eps(Model& model, const Dataset& batch, double tol = 1e-8, int max_iter = 200);

}  // namespace eftr
