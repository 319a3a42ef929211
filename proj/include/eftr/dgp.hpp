#pragma once

// Data-generating processes with closed-form oracles.
//
// Synthetic (X ~ U(0,1)^6):
//   a~   = f(x) + N(noise_mean, noise_sd)   (noise_sd is a standard deviation)
//   A    = Bernoulli(sigmoid(a~))  or  sigmoid(a~)
//   mu~  = 2 (A + g0) sin(x4) (A + 4 max(x1, x6)^3) / (1 + 2 x3^2),
//          g0 = -0.5 (Bernoulli, Gaussian) or 0.5 (Poisson)
//   Y    = Bernoulli(sigmoid(mu~))  or  Poisson(exp(clip(mu~, -4, 4)))
//
// Semi-synthetic (external covariates, V_j = U_j / |U_j|, U_j ~ N(0, I)):
//   a~   = | w V3'x / V2'x |
//   A    = Bernoulli(sigmoid(a~))  or  Beta(2, |a~|)
//   mu~  = cos(1.2 pi A) 2 max(-2, V2'x / (V3'x + 2) - 0.3) + 10 V1'x          (binary A)
//   mu~  = 20 (A - 0.5) sin(pi A) (max(alpha, V2'x / (V3'x + 2) - 0.3) + beta V1'x)  (continuous A)
//   Y    = Bernoulli(sigmoid(mu~))  or  Poisson(exp(min(4, gamma mu~)))
//
// The Poisson rate cap is min(4, .) by default; `strict_poisson_cap` switches
// to max(4, .).

#include <cstdint>
#include <string>

#include <Eigen/Core>

#include "eftr/dataset.hpp"
#include "eftr/edf.hpp"
#include "eftr/rng.hpp"

namespace eftr {

enum class Scenario { Synthetic, SemiSynthetic };
enum class Preset { News, TCGA, Custom };

std::string to_string(Scenario s);
std::string to_string(Preset p);
Scenario scenario_from_string(const std::string& name);
Preset preset_from_string(const std::string& name);

struct SemiSyntheticParams {
  Preset preset = Preset::News;
  double w = 1.5;
  double alpha = -2.0;
  double beta = 10.0;
  double gamma = 2.5;
  std::uint64_t projection_seed = 0;
  bool strict_poisson_cap = false;

  // Constants for a named preset and treatment kind.
  static SemiSyntheticParams for_preset(Preset preset, TreatmentKind treatment);
};

struct DGPSpec {
  Scenario scenario = Scenario::Synthetic;
  TreatmentKind treatment = TreatmentKind::Binary;
  FamilySpec family;
  double noise_mean = 0.0;
  double noise_sd = 0.5;
  SemiSyntheticParams semi;
  Eigen::MatrixXd projections;  // d x 3: V1, V2, V3 (semi-synthetic, once realized)

  static DGPSpec synthetic(TreatmentKind treatment, FamilySpec family, double noise_mean = 0.0);
  static DGPSpec semi_synthetic(Preset preset, TreatmentKind treatment, FamilySpec family);

  std::string canonical() const;
  std::string hash() const;
};

// Draws the semi-synthetic projection vectors for dimension d from
// semi.projection_seed. Retries (up to 10 times) while V2'x == 0 for some row
// of X; DataError afterwards.
void realize_projections(DGPSpec& spec, const Eigen::MatrixXd& X);

Dataset gen_synthetic(Eigen::Index n, TreatmentKind treatment, const FamilySpec& family, std::uint64_t seed,
                      double noise_mean = 0.0);
Dataset generate(const DGPSpec& spec, Eigen::Index n, std::uint64_t seed);
// Semi-synthetic data over the given covariates; realizes projections in `spec` if needed.
Dataset gen_semisynthetic(const Eigen::MatrixXd& X, DGPSpec& spec, std::uint64_t seed);

// Covariates for self-contained semi-synthetic runs: News-like (sparse,
// nonnegative, d = 498) or TCGA-like (dense, positive, d = 4000); rows are
// scaled to unit Euclidean norm.
Eigen::MatrixXd surrogate_covariates(Preset preset, Eigen::Index n, std::uint64_t seed, Eigen::Index dim = 0);

// Noise-free treatment score f(x) of the synthetic scenario.
double synthetic_treatment_score(const Eigen::Ref<const Eigen::VectorXd>& x);
// mu~(x, a).
double latent_outcome(const DGPSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& x, double a);

double oracle_theta(const DGPSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& x, double a);
double oracle_mu(const DGPSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& x, double a);
// Binary: P(A = a | x). Continuous: density of A at a given x (DomainError at a in {0, 1}).
double oracle_pi(const DGPSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& x, double a);

Eigen::VectorXd oracle_theta_batch(const DGPSpec& spec, const Eigen::MatrixXd& X, double a);
Eigen::VectorXd oracle_mu_batch(const DGPSpec& spec, const Eigen::MatrixXd& X, double a);
Eigen::VectorXd oracle_pi_batch(const DGPSpec& spec, const Eigen::MatrixXd& X, double a);

// Draw of Y at dose a for covariate row x.
double sample_outcome(const DGPSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& x, double a, Rng& rng);

struct OracleValue {
  double value = 0.0;
  double mc_se = 0.0;
  Eigen::Index n_mc = 0;
  std::uint64_t seed = 0;
};

// Mean of the oracle canonical parameter over X_eval (and its standard error
// as a Monte-Carlo estimate of the population value).
OracleValue oracle_adcf(const DGPSpec& spec, const Eigen::MatrixXd& X_eval, double a);
OracleValue oracle_ate(const DGPSpec& spec, const Eigen::MatrixXd& X_eval);

// 64-point Gauss-Hermite rule (weight exp(-t^2)); nodes and weights.
const std::pair<Eigen::VectorXd, Eigen::VectorXd>& gauss_hermite_64();

// Header "x1,...,xd,a,y". DataError names the failing row (1-based line number).
Dataset ingest_csv(const std::string& path, const FamilySpec& family, TreatmentKind treatment);
void export_csv(const Dataset& data, const std::string& path);

}  // namespace eftr
