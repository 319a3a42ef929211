#include "eftr/model.hpp"

#include <cmath>

#include "eftr/errors.hpp"

namespace eftr {

namespace {

double log_sigmoid(double t) { return t >= 0.0 ? -std::log1p(std::exp(-t)) : t - std::log1p(std::exp(t)); }

}  // namespace

Activation ModelConfig::default_outcome_activation(const FamilySpec& family) {
  switch (family.kind) {
    case FamilyKind::Bernoulli: return Activation::Sigmoid;
    case FamilyKind::Poisson: return Activation::Exp;
    case FamilyKind::Gaussian: return Activation::Identity;
  }
  return Activation::Identity;
}

void ModelConfig::validate() const {
  family.validate();
  if (input_dim <= 0) throw ConfigError("model.input_dim must be positive");
  if (rep_dims.empty()) throw ConfigError("model.rep_dims must name at least one layer");
  for (int d : rep_dims)
    if (d <= 0) throw ConfigError("model.rep_dims entries must be positive");
  for (int d : outcome_dims)
    if (d <= 0) throw ConfigError("model.outcome_dims entries must be positive");
  for (int d : density_dims)
    if (d <= 0) throw ConfigError("model.density_dims entries must be positive");
  if (treatment == TreatmentKind::Continuous && density_grid < 2) throw ConfigError("model.density_grid must be >= 2");
  const bool ok = [&] {
    switch (family.kind) {
      case FamilyKind::Bernoulli: return outcome_activation == Activation::Sigmoid;
      case FamilyKind::Poisson:
        return outcome_activation == Activation::Exp || outcome_activation == Activation::Softplus;
      case FamilyKind::Gaussian: return outcome_activation == Activation::Identity;
    }
    return false;
  }();
  if (!ok) throw ConfigError("model.outcome_activation does not match the family mean domain");
  if (treatment == TreatmentKind::Continuous && eps_basis.kind != BasisConfig::Kind::Spline)
    throw ConfigError("model.eps_basis must be a B-spline basis");
}

Model::Model(ModelConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.treatment == TreatmentKind::Binary) cfg_.eps_basis = BasisConfig{BasisConfig::Kind::Spline, 1, 0, 3};
  cfg_.validate();
  build();
}

void Model::build() {
  const Activation hidden = cfg_.hidden_activation;
  GraphSpec trunk{"trunk", {}};
  int in = cfg_.input_dim;
  for (int d : cfg_.rep_dims) {
    trunk.layers.push_back({LayerKind::Dense, in, d, hidden, {}});
    in = d;
  }
  const int z_dim = in;
  trunk_ = Graph(trunk, store_);

  GraphSpec density{"density", {}};
  in = z_dim;
  for (int d : cfg_.density_dims) {
    density.layers.push_back({LayerKind::Dense, in, d, hidden, {}});
    in = d;
  }
  const int density_out = cfg_.treatment == TreatmentKind::Continuous ? cfg_.density_grid + 1 : 1;
  density.layers.push_back({LayerKind::Dense, in, density_out, Activation::Identity, {}});
  density_ = Graph(density, store_);

  if (cfg_.treatment == TreatmentKind::Continuous) {
    GraphSpec outcome{"outcome", {}};
    in = z_dim;
    for (int d : cfg_.outcome_dims) {
      outcome.layers.push_back({LayerKind::VaryingCoeffDense, in, d, hidden, cfg_.outcome_basis});
      in = d;
    }
    outcome.layers.push_back({LayerKind::VaryingCoeffDense, in, 1, cfg_.outcome_activation, cfg_.outcome_basis});
    outcome_[0] = Graph(outcome, store_);
  } else {
    for (int arm = 0; arm < 2; ++arm) {
      GraphSpec outcome{"outcome" + std::to_string(arm), {}};
      in = z_dim;
      for (int d : cfg_.outcome_dims) {
        outcome.layers.push_back({LayerKind::Dense, in, d, hidden, {}});
        in = d;
      }
      outcome.layers.push_back({LayerKind::Dense, in, 1, cfg_.outcome_activation, {}});
      outcome_[static_cast<std::size_t>(arm)] = Graph(outcome, store_);
    }
  }

  eps_basis_ = cfg_.eps_basis.build();
  store_.add("eps", basis_size(eps_basis_));
}

void Model::initialize(Rng& rng) {
  Eigen::VectorXd& p = store_.values();
  trunk_.initialize(p, rng);
  density_.initialize(p, rng);
  outcome_[0].initialize(p, rng);
  if (cfg_.treatment == TreatmentKind::Binary) outcome_[1].initialize(p, rng);
  store_.segment("eps").setZero();
}

ModelForward Model::forward(const Eigen::VectorXd& params, const Eigen::MatrixXd& X, const Eigen::VectorXd& A) const {
  if (A.size() != X.rows()) throw ConfigError("forward: dose vector length does not match the batch");
  for (Eigen::Index i = 0; i < A.size(); ++i) check_dose(A(i));
  const Eigen::Index n = X.rows();
  ModelForward f;
  f.doses = A;
  f.z = trunk_.forward(params, X, nullptr, &f.trunk_cache);

  if (cfg_.treatment == TreatmentKind::Continuous) {
    f.mu_raw = outcome_[0].forward(params, f.z, &A, &f.outcome_cache[0]).col(0);
  } else {
    const Eigen::VectorXd m0 = outcome_[0].forward(params, f.z, nullptr, &f.outcome_cache[0]).col(0);
    const Eigen::VectorXd m1 = outcome_[1].forward(params, f.z, nullptr, &f.outcome_cache[1]).col(0);
    f.mu_raw.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) f.mu_raw(i) = A(i) == 1.0 ? m1(i) : m0(i);
  }
  f.mu.resize(n);
  f.theta.resize(n);
  f.h_prime.resize(n);
  f.h_second.resize(n);
  f.mu_clamped.assign(static_cast<std::size_t>(n), false);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!std::isfinite(f.mu_raw(i))) throw NumericError("non-finite outcome head output", static_cast<long>(i));
    f.mu_clamped[static_cast<std::size_t>(i)] = mean_is_clamped(cfg_.family, f.mu_raw(i));
    const double mu = clamp_mean(cfg_.family, f.mu_raw(i));
    f.mu(i) = mu;
    f.theta(i) = link(cfg_.family, mu);
    f.h_prime(i) = link_prime(cfg_.family, mu);
    f.h_second(i) = link_second(cfg_.family, mu);
  }

  const Eigen::MatrixXd logits = density_.forward(params, f.z, nullptr, &f.density_cache);
  f.pi.resize(n);
  f.log_pi.resize(n);
  if (cfg_.treatment == TreatmentKind::Continuous) {
    const int B = cfg_.density_grid;
    f.scores.resize(n, B + 1);
    f.grid_lo.resize(static_cast<std::size_t>(n));
    f.grid_u.resize(n);
    f.interp_mass.resize(n);
    f.trapezoid_mass.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double mx = logits.row(i).maxCoeff();
      Eigen::RowVectorXd s = (logits.row(i).array() - mx).exp();
      s /= s.sum();
      f.scores.row(i) = s;
      const double pos = B * A(i);
      Eigen::Index lo = static_cast<Eigen::Index>(std::floor(pos));
      if (lo >= B) lo = B - 1;
      const double u = pos - static_cast<double>(lo);
      const double C = (1.0 - u) * s(lo) + u * s(lo + 1);
      const double T = (s.sum() - 0.5 * (s(0) + s(B))) / B;
      if (!(T > 0.0)) throw NumericError("density normalizer is not positive", static_cast<long>(i));
      f.grid_lo[static_cast<std::size_t>(i)] = lo;
      f.grid_u(i) = u;
      f.interp_mass(i) = C;
      f.trapezoid_mass(i) = T;
      f.pi(i) = C / T;
      f.log_pi(i) = std::log(C) - std::log(T);
    }
  } else {
    f.arm_prob.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double l = logits(i, 0);
      f.arm_prob(i) = activate(Activation::Sigmoid, l);
      f.pi(i) = A(i) == 1.0 ? f.arm_prob(i) : 1.0 - f.arm_prob(i);
      f.log_pi(i) = A(i) == 1.0 ? log_sigmoid(l) : log_sigmoid(-l);
    }
  }

  f.eps_rows = eval_basis_rows(eps_basis_, A);
  f.eps = f.eps_rows * params.segment(eps_slice().offset, eps_slice().size);
  return f;
}

void Model::backward(const Eigen::VectorXd& params, const ModelForward& f, const Eigen::VectorXd& d_mu_raw,
                     const Eigen::VectorXd& d_log_pi, Eigen::VectorXd& grad) const {
  const Eigen::Index n = f.z.rows();
  Eigen::MatrixXd d_z;
  if (cfg_.treatment == TreatmentKind::Continuous) {
    Eigen::MatrixXd d = d_mu_raw;
    d_z = outcome_[0].backward(params, f.outcome_cache[0], d, grad);
  } else {
    Eigen::MatrixXd d0 = Eigen::MatrixXd::Zero(n, 1), d1 = Eigen::MatrixXd::Zero(n, 1);
    for (Eigen::Index i = 0; i < n; ++i) (f.doses(i) == 1.0 ? d1 : d0)(i, 0) = d_mu_raw(i);
    d_z = outcome_[0].backward(params, f.outcome_cache[0], d0, grad);
    d_z += outcome_[1].backward(params, f.outcome_cache[1], d1, grad);
  }

  Eigen::MatrixXd d_logits;
  if (cfg_.treatment == TreatmentKind::Continuous) {
    const int B = cfg_.density_grid;
    d_logits.resize(n, B + 1);
    for (Eigen::Index i = 0; i < n; ++i) {
      // d log pi / d l_j = s_j (c_j / C - t_j / T)
      const Eigen::Index lo = f.grid_lo[static_cast<std::size_t>(i)];
      const double u = f.grid_u(i);
      const double C = f.interp_mass(i), T = f.trapezoid_mass(i);
      for (Eigen::Index j = 0; j <= B; ++j) {
        double c = 0.0;
        if (j == lo) c += 1.0 - u;
        if (j == lo + 1) c += u;
        const double t = (j == 0 || j == B) ? 0.5 / B : 1.0 / B;
        d_logits(i, j) = d_log_pi(i) * f.scores(i, j) * (c / C - t / T);
      }
    }
  } else {
    d_logits.resize(n, 1);
    for (Eigen::Index i = 0; i < n; ++i)
      d_logits(i, 0) = d_log_pi(i) * (f.doses(i) == 1.0 ? 1.0 - f.arm_prob(i) : -f.arm_prob(i));
  }
  const Eigen::MatrixXd d_z_density = density_.backward(params, f.density_cache, d_logits, grad);
  if (!cfg_.density_stop_gradient) d_z += d_z_density;
  trunk_.backward(params, f.trunk_cache, d_z, grad);
}

void Model::check_dose(double a) const {
  if (cfg_.treatment == TreatmentKind::Binary) {
    if (a != 0.0 && a != 1.0) throw DomainError("binary treatment dose must be 0 or 1");
  } else if (!(a >= 0.0 && a <= 1.0)) {
    throw DomainError("continuous dose must lie in [0, 1]");
  }
}

Eigen::VectorXd Model::doses_for(const Eigen::MatrixXd& X, double a) const {
  check_dose(a);
  return Eigen::VectorXd::Constant(X.rows(), a);
}

Eigen::VectorXd Model::predict_mu(const Eigen::MatrixXd& X, double a) const {
  const Eigen::VectorXd doses = doses_for(X, a);
  const Eigen::VectorXd& p = store_.values();
  const Eigen::MatrixXd z = trunk_.forward(p, X, nullptr);
  Eigen::VectorXd raw;
  if (cfg_.treatment == TreatmentKind::Continuous)
    raw = outcome_[0].forward(p, z, &doses).col(0);
  else
    raw = outcome_[a == 1.0 ? 1 : 0].forward(p, z, nullptr).col(0);
  return raw.unaryExpr([this](double m) { return clamp_mean(cfg_.family, m); });
}

Eigen::VectorXd Model::predict_theta(const Eigen::MatrixXd& X, double a) const {
  return predict_mu(X, a).unaryExpr([this](double m) { return link(cfg_.family, m); });
}

Eigen::VectorXd Model::predict_pi(const Eigen::MatrixXd& X, double a) const {
  const Eigen::VectorXd doses = doses_for(X, a);
  return forward(X, doses).pi;
}

double Model::predict_mu(const Eigen::VectorXd& x, double a) const { return predict_mu(Eigen::MatrixXd(x.transpose()), a)(0); }

double Model::predict_theta(const Eigen::VectorXd& x, double a) const {
  return predict_theta(Eigen::MatrixXd(x.transpose()), a)(0);
}

double Model::predict_pi(const Eigen::VectorXd& x, double a) const { return predict_pi(Eigen::MatrixXd(x.transpose()), a)(0); }

Eigen::MatrixXd Model::density_grid_values(const Eigen::MatrixXd& X) const {
  if (cfg_.treatment != TreatmentKind::Continuous) throw ConfigError("density grid exists for continuous treatment only");
  const ModelForward f = forward(X, Eigen::VectorXd::Zero(X.rows()));
  Eigen::MatrixXd v = f.scores;
  for (Eigen::Index i = 0; i < v.rows(); ++i) v.row(i) /= f.trapezoid_mass(i);
  return v;
}

double Model::eval_eps(double a) const {
  check_dose(a);
  return eval_basis(eps_basis_, a).dot(store_.segment("eps"));
}

std::vector<std::string> Model::slices_with_prefix(const std::string& prefix) const {
  std::vector<std::string> out;
  for (const auto& [name, s] : store_.entries())
    if (name.rfind(prefix, 0) == 0) out.push_back(name);
  return out;
}

}  // namespace eftr
