#pragma once

// Single-parameter exponential dispersion families
//
//   f(y; theta, phi) = exp{ (y * theta - kappa(theta)) / phi + xi(y; phi) }
//
// with canonical link h = (kappa')^{-1}, so theta = h(mu) and mu = kappa'(theta).
// The normalizer xi(y; phi) does not depend on theta and is dropped from every
// negative log-likelihood computed here; losses are comparable only within a
// family.

#include <string>
#include <string_view>

#include "eftr/rng.hpp"

namespace eftr {

enum class FamilyKind { Bernoulli, Poisson, Gaussian };

// Callers clamp fitted means into [kEpsMean, 1 - kEpsMean] (Bernoulli) or
// [kEpsMean, inf) (Poisson) before evaluating the link or its derivatives.
inline constexpr double kEpsMean = 1e-6;

struct FamilySpec {
  FamilyKind kind = FamilyKind::Bernoulli;
  double dispersion = 1.0;

  static FamilySpec bernoulli() { return {FamilyKind::Bernoulli, 1.0}; }
  static FamilySpec poisson() { return {FamilyKind::Poisson, 1.0}; }
  static FamilySpec gaussian(double dispersion = 1.0) { return {FamilyKind::Gaussian, dispersion}; }

  // Throws DomainError unless dispersion > 0 (and == 1 for Bernoulli/Poisson).
  void validate() const;

  bool operator==(const FamilySpec&) const = default;
};

std::string to_string(FamilyKind kind);
FamilyKind family_kind_from_string(std::string_view name);

// kappa(theta). Overflow-safe softplus for Bernoulli.
double cumulant(const FamilySpec& family, double theta);
// kappa'(theta), the mean.
double mean_from_theta(const FamilySpec& family, double theta);
// kappa''(theta), the variance function at theta.
double cumulant_second(const FamilySpec& family, double theta);

// Canonical link h(mu) and its first two derivatives. `mu` must lie strictly
// inside the mean domain; DomainError otherwise.
double link(const FamilySpec& family, double mu);
double link_prime(const FamilySpec& family, double mu);
double link_second(const FamilySpec& family, double mu);

// Clamp a fitted mean into the admissible region (see kEpsMean).
double clamp_mean(const FamilySpec& family, double mu);
// Whether clamp_mean would alter `mu`.
bool mean_is_clamped(const FamilySpec& family, double mu);

// Throws DataError if y is outside the outcome support.
void check_outcome(const FamilySpec& family, double y);

// (-y h(mu) + kappa(h(mu))) / phi, without xi(y; phi).
double nll(const FamilySpec& family, double y, double mu);

// One draw with E[y] = mu.
double sample(const FamilySpec& family, double mu, Rng& rng);

}  // namespace eftr
