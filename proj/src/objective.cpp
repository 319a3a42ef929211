#include "eftr/objective.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "eftr/errors.hpp"

namespace eftr {

void LossConfig::validate() const {
  if (!(beta >= 0.0) || !std::isfinite(beta)) throw ConfigError("loss.beta must be a nonnegative number");
}

double base_loss(const FamilySpec& family, const Eigen::VectorXd& y, const Eigen::VectorXd& mu,
                 const Eigen::VectorXd& pi) {
  const Eigen::Index n = y.size();
  if (n == 0) throw DataError("base_loss on an empty batch");
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double term = nll(family, y(i), mu(i)) - std::log(pi(i));
    if (!std::isfinite(term)) throw NumericError("non-finite base loss term", static_cast<long>(i));
    total += term;
  }
  return total / static_cast<double>(n);
}

namespace {

// Per-sample ingredients of R at the current model.
struct TregTerms {
  Eigen::VectorXd weight;  // h'(mu) / pi_clamped
  Eigen::VectorXd theta;
  Eigen::MatrixXd basis;   // B_k(a_i)
  Eigen::VectorXd y;
};

TregTerms treg_terms(const Model& model, const Dataset& batch) {
  const ModelForward f = model.forward(batch.X, batch.A);
  TregTerms t;
  t.theta = f.theta;
  t.basis = f.eps_rows;
  t.y = batch.Y;
  t.weight.resize(batch.size());
  for (Eigen::Index i = 0; i < batch.size(); ++i) t.weight(i) = f.h_prime(i) / clamp_propensity(f.pi(i));
  return t;
}

double treg_value(const FamilySpec& family, const TregTerms& t, const Eigen::VectorXd& coef) {
  const Eigen::VectorXd eps = t.basis * coef;
  double total = 0.0;
  for (Eigen::Index i = 0; i < t.y.size(); ++i) {
    const double th = t.theta(i) + eps(i) * t.weight(i);
    const double term = -t.y(i) * th + cumulant(family, th);
    if (!std::isfinite(term)) throw NumericError("non-finite targeted-regularization term", static_cast<long>(i));
    total += term;
  }
  return total / static_cast<double>(t.y.size());
}

Eigen::VectorXd treg_gradient(const FamilySpec& family, const TregTerms& t, const Eigen::VectorXd& coef) {
  const Eigen::VectorXd eps = t.basis * coef;
  Eigen::VectorXd r(t.y.size());
  for (Eigen::Index i = 0; i < t.y.size(); ++i)
    r(i) = (mean_from_theta(family, t.theta(i) + eps(i) * t.weight(i)) - t.y(i)) * t.weight(i);
  return t.basis.transpose() * r / static_cast<double>(t.y.size());
}

}  // namespace

double treg_loss(const Model& model, const Dataset& batch) {
  return treg_value(model.family(), treg_terms(model, batch), model.params().segment("eps"));
}

Eigen::VectorXd treg_eps_gradient(const Model& model, const Dataset& batch) {
  return treg_gradient(model.family(), treg_terms(model, batch), model.params().segment("eps"));
}

Eigen::VectorXd stationarity_residuals(const Model& model, const Dataset& batch) {
  return -treg_eps_gradient(model, batch);
}

double total_loss(const Model& model, const Dataset& batch, const LossConfig& cfg) {
  return evaluate_loss(model, model.params().values(), batch, cfg, nullptr).total;
}

LossBreakdown evaluate_loss(const Model& model, const Eigen::VectorXd& params, const Dataset& batch,
                            const LossConfig& cfg, Eigen::VectorXd* grad) {
  const Eigen::Index n = batch.size();
  if (n == 0) throw DataError("loss on an empty batch");
  const FamilySpec& family = model.family();
  const ModelForward f = model.forward(params, batch.X, batch.A);
  const double inv_n = 1.0 / static_cast<double>(n);

  Eigen::VectorXd d_mu = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd d_log_pi = Eigen::VectorXd::Zero(n);
  const Slice eps_slice = model.eps_slice();
  Eigen::VectorXd d_eps = Eigen::VectorXd::Zero(eps_slice.size);

  LossBreakdown out;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double y = batch.Y(i);
    const double term = (-y * f.theta(i) + cumulant(family, f.theta(i))) / family.dispersion - f.log_pi(i);
    if (!std::isfinite(term)) throw NumericError("non-finite base loss term", static_cast<long>(i));
    out.base += term;
    if (!f.mu_clamped[static_cast<std::size_t>(i)])
      d_mu(i) = (f.mu(i) - y) * f.h_prime(i) / family.dispersion * inv_n;
    d_log_pi(i) = -inv_n;
  }
  out.base *= inv_n;

  if (cfg.treg_enabled) {
    const double scale = cfg.beta * inv_n;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double y = batch.Y(i);
      const bool pi_clamped = f.pi(i) < kOverlapClamp;
      const double pi = clamp_propensity(f.pi(i));
      const double w = f.h_prime(i) / pi;
      const double th = fluctuated_theta(f.theta(i), f.eps(i), pi, f.h_prime(i));
      const double term = -y * th + cumulant(family, th);
      if (!std::isfinite(term)) throw NumericError("non-finite targeted-regularization term", static_cast<long>(i));
      out.treg += term;
      const double r = mean_from_theta(family, th) - y;
      d_eps.noalias() += (scale * r * w) * f.eps_rows.row(i).transpose();
      if (!cfg.detach_nuisances_in_treg) {
        if (!f.mu_clamped[static_cast<std::size_t>(i)])
          d_mu(i) += scale * r * (f.h_prime(i) + f.eps(i) / pi * f.h_second(i));
        if (!pi_clamped) d_log_pi(i) += scale * r * (-f.eps(i) * w);
      }
    }
    out.treg *= inv_n;
  }
  out.total = cfg.treg_enabled ? out.base + cfg.beta * out.treg : out.base;
  if (!std::isfinite(out.total)) throw NumericError("non-finite total loss");

  if (grad) {
    grad->setZero(params.size());
    model.backward(params, f, d_mu, d_log_pi, *grad);
    grad->segment(eps_slice.offset, eps_slice.size) += d_eps;
  }
  return out;
}

LossFunction make_loss_function(const Model& model, const Dataset& batch, const LossConfig& cfg) {
  return [&model, &batch, cfg](const Eigen::VectorXd& params, Eigen::VectorXd* grad) {
    return evaluate_loss(model, params, batch, cfg, grad).total;
  };
}

EpsPolishReport polish_eps(Model& model, const Dataset& batch, double tol, int max_iter) {
  const FamilySpec& family = model.family();
  const TregTerms t = treg_terms(model, batch);
  Eigen::VectorXd coef = model.params().segment("eps");
  const double inv_n = 1.0 / static_cast<double>(t.y.size());

  EpsPolishReport rep;
  double value = treg_value(family, t, coef);
  for (rep.iterations = 0; rep.iterations < max_iter; ++rep.iterations) {
    const Eigen::VectorXd g = treg_gradient(family, t, coef);
    rep.max_abs_gradient = g.cwiseAbs().maxCoeff();
    // Rounding in theta~ limits how small the gradient can get when h'/pi is large.
    const Eigen::VectorXd eps_now = t.basis * coef;
    double floor = 0.0;
    for (Eigen::Index i = 0; i < t.y.size(); ++i)
      floor = std::max(floor, std::abs(t.weight(i)) * (1.0 + std::abs(t.theta(i) + eps_now(i) * t.weight(i))));
    floor *= 64.0 * std::numeric_limits<double>::epsilon();
    if (rep.max_abs_gradient <= std::max(tol, floor)) {
      rep.converged = true;
      break;
    }
    const Eigen::VectorXd eps = t.basis * coef;
    Eigen::VectorXd curv(t.y.size());
    for (Eigen::Index i = 0; i < t.y.size(); ++i)
      curv(i) = cumulant_second(family, t.theta(i) + eps(i) * t.weight(i)) * t.weight(i) * t.weight(i);
    Eigen::MatrixXd H = t.basis.transpose() * curv.asDiagonal() * t.basis * inv_n;
    // Basis directions with no data support have zero curvature.
    const double ridge = 1e-12 * std::max(1.0, H.diagonal().maxCoeff());
    H.diagonal().array() += ridge;
    Eigen::VectorXd step = H.ldlt().solve(-g);
    if (!step.allFinite()) step = -g;
    double scale = 1.0;
    bool accepted = false;
    // Predicted decrease below the resolution of R: trust the full Newton step.
    const int searches = -g.dot(step) <= 1e-12 * (1.0 + std::abs(value)) ? 0 : 60;
    for (int ls = 0; ls < searches; ++ls) {
      const Eigen::VectorXd trial = coef + scale * step;
      double v = 0.0;
      try {
        v = treg_value(family, t, trial);
      } catch (const NumericError&) {
        v = std::numeric_limits<double>::infinity();
      }
      if (v <= value + 1e-4 * scale * g.dot(step)) {
        coef = trial;
        value = v;
        accepted = true;
        break;
      }
      scale *= 0.5;
    }
    if (!accepted) {
      coef += step;
      value = treg_value(family, t, coef);
    }
  }
  model.params().segment("eps") = coef;
  return rep;
}

}  // namespace eftr
