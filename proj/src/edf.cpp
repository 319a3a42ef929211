#include "eftr/edf.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "eftr/errors.hpp"

namespace eftr {

namespace {

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw DomainError(std::string(what) + ": non-finite argument");
}

double softplus(double t) { return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }

double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

void require_interior(const FamilySpec& f, double mu, const char* what) {
  require_finite(mu, what);
  switch (f.kind) {
    case FamilyKind::Bernoulli:
      if (!(mu > 0.0 && mu < 1.0)) throw DomainError(std::string(what) + ": Bernoulli mean must lie in (0, 1)");
      break;
    case FamilyKind::Poisson:
      if (!(mu > 0.0)) throw DomainError(std::string(what) + ": Poisson mean must be positive");
      break;
    case FamilyKind::Gaussian:
      break;
  }
}

}  // namespace

void FamilySpec::validate() const {
  if (!(dispersion > 0.0) || !std::isfinite(dispersion)) throw DomainError("dispersion must be positive");
  if (kind != FamilyKind::Gaussian && dispersion != 1.0)
    throw DomainError("dispersion is fixed to 1 for Bernoulli and Poisson");
}

std::string to_string(FamilyKind kind) {
  switch (kind) {
    case FamilyKind::Bernoulli: return "bernoulli";
    case FamilyKind::Poisson: return "poisson";
    case FamilyKind::Gaussian: return "gaussian";
  }
  return "?";
}

FamilyKind family_kind_from_string(std::string_view name) {
  if (name == "bernoulli") return FamilyKind::Bernoulli;
  if (name == "poisson") return FamilyKind::Poisson;
  if (name == "gaussian") return FamilyKind::Gaussian;
  throw ConfigError("unknown family '" + std::string(name) + "'");
}

double cumulant(const FamilySpec& f, double theta) {
  require_finite(theta, "cumulant");
  switch (f.kind) {
    case FamilyKind::Bernoulli: return softplus(theta);
    case FamilyKind::Poisson: return std::exp(theta);
    case FamilyKind::Gaussian: return 0.5 * theta * theta;
  }
  return 0.0;
}

double mean_from_theta(const FamilySpec& f, double theta) {
  require_finite(theta, "mean_from_theta");
  switch (f.kind) {
    case FamilyKind::Bernoulli: return sigmoid(theta);
    case FamilyKind::Poisson: return std::exp(theta);
    case FamilyKind::Gaussian: return theta;
  }
  return 0.0;
}

double cumulant_second(const FamilySpec& f, double theta) {
  require_finite(theta, "cumulant_second");
  switch (f.kind) {
    case FamilyKind::Bernoulli: {
      const double s = sigmoid(theta);
      return s * (1.0 - s);
    }
    case FamilyKind::Poisson: return std::exp(theta);
    case FamilyKind::Gaussian: return 1.0;
  }
  return 0.0;
}

double link(const FamilySpec& f, double mu) {
  require_interior(f, mu, "link");
  switch (f.kind) {
    case FamilyKind::Bernoulli: return std::log(mu) - std::log1p(-mu);
    case FamilyKind::Poisson: return std::log(mu);
    case FamilyKind::Gaussian: return mu;
  }
  return 0.0;
}

double link_prime(const FamilySpec& f, double mu) {
  require_interior(f, mu, "link_prime");
  switch (f.kind) {
    case FamilyKind::Bernoulli: return 1.0 / (mu * (1.0 - mu));
    case FamilyKind::Poisson: return 1.0 / mu;
    case FamilyKind::Gaussian: return 1.0;
  }
  return 0.0;
}

double link_second(const FamilySpec& f, double mu) {
  require_interior(f, mu, "link_second");
  switch (f.kind) {
    case FamilyKind::Bernoulli: {
      const double v = mu * (1.0 - mu);
      return (2.0 * mu - 1.0) / (v * v);
    }
    case FamilyKind::Poisson: return -1.0 / (mu * mu);
    case FamilyKind::Gaussian: return 0.0;
  }
  return 0.0;
}

double clamp_mean(const FamilySpec& f, double mu) {
  switch (f.kind) {
    case FamilyKind::Bernoulli: return std::clamp(mu, kEpsMean, 1.0 - kEpsMean);
    case FamilyKind::Poisson: return std::max(mu, kEpsMean);
    case FamilyKind::Gaussian: return mu;
  }
  return mu;
}

bool mean_is_clamped(const FamilySpec& f, double mu) {
  switch (f.kind) {
    case FamilyKind::Bernoulli: return mu < kEpsMean || mu > 1.0 - kEpsMean;
    case FamilyKind::Poisson: return mu < kEpsMean;
    case FamilyKind::Gaussian: return false;
  }
  return false;
}

void check_outcome(const FamilySpec& f, double y) {
  if (!std::isfinite(y)) throw DataError("non-finite outcome");
  switch (f.kind) {
    case FamilyKind::Bernoulli:
      if (y != 0.0 && y != 1.0) throw DataError("Bernoulli outcome must be 0 or 1");
      break;
    case FamilyKind::Poisson:
      if (y < 0.0 || y != std::floor(y)) throw DataError("Poisson outcome must be a nonnegative integer");
      break;
    case FamilyKind::Gaussian:
      break;
  }
}

double nll(const FamilySpec& f, double y, double mu) {
  check_outcome(f, y);
  const double theta = link(f, mu);
  return (-y * theta + cumulant(f, theta)) / f.dispersion;
}

double sample(const FamilySpec& f, double mu, Rng& rng) {
  switch (f.kind) {
    case FamilyKind::Bernoulli: {
      std::uniform_real_distribution<double> u(0.0, 1.0);
      return u(rng) < mu ? 1.0 : 0.0;
    }
    case FamilyKind::Poisson: {
      if (!(mu > 0.0)) return 0.0;
      std::poisson_distribution<long> p(mu);
      return static_cast<double>(p(rng));
    }
    case FamilyKind::Gaussian: {
      std::normal_distribution<double> g(mu, std::sqrt(f.dispersion));
      return g(rng);
    }
  }
  return 0.0;
}

}  // namespace eftr
