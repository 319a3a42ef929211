#include "eftr/dgp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "eftr/errors.hpp"
#include "eftr/io.hpp"

namespace eftr {

namespace {

constexpr double kPi = std::numbers::pi;

double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

double synthetic_offset(const FamilySpec& family) { return family.kind == FamilyKind::Poisson ? 0.5 : -0.5; }

// Shape of the Beta(2, b) treatment draw; floored so the draw stays proper
// when a~ vanishes.
double beta_shape(double a_tilde) { return std::max(std::abs(a_tilde), 1e-3); }

// Saturated draws can round onto the boundary, where the dose density is undefined.
double open_unit(double a) { return std::clamp(a, std::nextafter(0.0, 1.0), std::nextafter(1.0, 0.0)); }

struct Projections {
  double v1, v2, v3;
};

Projections project(const DGPSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (spec.projections.rows() != x.size() || spec.projections.cols() != 3)
    throw ConfigError("semi-synthetic projections are not realized for covariate dimension " +
                      std::to_string(x.size()));
  return {spec.projections.col(0).dot(x), spec.projections.col(1).dot(x), spec.projections.col(2).dot(x)};
}

double semi_treatment_score(const DGPSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& x) {
  const Projections p = project(spec, x);
  return std::abs(spec.semi.w * p.v3 / p.v2);
}

double theta_from_latent(const DGPSpec& spec, double latent) {
  switch (spec.family.kind) {
    case FamilyKind::Bernoulli: return latent;
    case FamilyKind::Gaussian: return latent;
    case FamilyKind::Poisson:
      if (spec.scenario == Scenario::Synthetic) return std::clamp(latent, -4.0, 4.0);
      return spec.semi.strict_poisson_cap ? std::max(4.0, spec.semi.gamma * latent)
                                          : std::min(4.0, spec.semi.gamma * latent);
  }
  return latent;
}

double draw_treatment(const DGPSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& x, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  if (spec.scenario == Scenario::Synthetic) {
    std::normal_distribution<double> noise(spec.noise_mean, spec.noise_sd);
    const double a_tilde = synthetic_treatment_score(x) + noise(rng);
    if (spec.treatment == TreatmentKind::Binary) return unif(rng) < sigmoid(a_tilde) ? 1.0 : 0.0;
    return open_unit(sigmoid(a_tilde));
  }
  const double a_tilde = semi_treatment_score(spec, x);
  if (spec.treatment == TreatmentKind::Binary) return unif(rng) < sigmoid(a_tilde) ? 1.0 : 0.0;
  std::gamma_distribution<double> g1(2.0, 1.0), g2(beta_shape(a_tilde), 1.0);
  const double u = g1(rng), v = g2(rng);
  return open_unit(u / (u + v));
}

}  // namespace

std::string to_string(Scenario s) { return s == Scenario::Synthetic ? "synthetic" : "semi_synthetic"; }

std::string to_string(Preset p) {
  switch (p) {
    case Preset::News: return "news";
    case Preset::TCGA: return "tcga";
    case Preset::Custom: return "custom";
  }
  return "?";
}

Scenario scenario_from_string(const std::string& name) {
  if (name == "synthetic") return Scenario::Synthetic;
  if (name == "semi_synthetic") return Scenario::SemiSynthetic;
  throw ConfigError("unknown scenario '" + name + "'");
}

Preset preset_from_string(const std::string& name) {
  if (name == "news") return Preset::News;
  if (name == "tcga") return Preset::TCGA;
  if (name == "custom") return Preset::Custom;
  throw ConfigError("unknown preset '" + name + "'");
}

SemiSyntheticParams SemiSyntheticParams::for_preset(Preset preset, TreatmentKind treatment) {
  SemiSyntheticParams p;
  p.preset = preset;
  const bool binary = treatment == TreatmentKind::Binary;
  switch (preset) {
    case Preset::News:
    case Preset::Custom:
      p.w = binary ? 1.5 : 0.5;
      p.alpha = -2.0;
      p.beta = 10.0;
      p.gamma = 2.5;
      break;
    case Preset::TCGA:
      p.w = binary ? 5.0 : 0.2;
      p.alpha = -0.5;
      p.beta = 5.0;
      p.gamma = 4.5;
      break;
  }
  return p;
}

DGPSpec DGPSpec::synthetic(TreatmentKind treatment, FamilySpec family, double noise_mean) {
  DGPSpec s;
  s.scenario = Scenario::Synthetic;
  s.treatment = treatment;
  s.family = family;
  s.noise_mean = noise_mean;
  return s;
}

DGPSpec DGPSpec::semi_synthetic(Preset preset, TreatmentKind treatment, FamilySpec family) {
  DGPSpec s;
  s.scenario = Scenario::SemiSynthetic;
  s.treatment = treatment;
  s.family = family;
  s.semi = SemiSyntheticParams::for_preset(preset, treatment);
  return s;
}

std::string DGPSpec::canonical() const {
  std::ostringstream ss;
  ss << to_string(scenario) << ';' << to_string(treatment) << ';' << to_string(family.kind) << ';'
     << format_double(family.dispersion) << ';' << format_double(noise_mean) << ';' << format_double(noise_sd);
  if (scenario == Scenario::SemiSynthetic) {
    ss << ';' << to_string(semi.preset) << ';' << format_double(semi.w) << ';' << format_double(semi.alpha) << ';'
       << format_double(semi.beta) << ';' << format_double(semi.gamma) << ';' << semi.projection_seed << ';'
       << semi.strict_poisson_cap;
  }
  return ss.str();
}

std::string DGPSpec::hash() const { return hex64(fnv1a64(canonical())); }

void realize_projections(DGPSpec& spec, const Eigen::MatrixXd& X) {
  const Eigen::Index d = X.cols();
  for (int attempt = 0; attempt < 10; ++attempt) {
    Rng rng = make_stream(spec.semi.projection_seed, "projection", static_cast<std::uint64_t>(attempt));
    std::normal_distribution<double> g(0.0, 1.0);
    Eigen::MatrixXd V(d, 3);
    for (Eigen::Index j = 0; j < 3; ++j) {
      for (Eigen::Index i = 0; i < d; ++i) V(i, j) = g(rng);
      V.col(j) /= V.col(j).norm();
    }
    const Eigen::VectorXd v2x = X * V.col(1);
    if ((v2x.array().abs() > 1e-12).all()) {
      spec.projections = V;
      return;
    }
  }
  throw DataError("V2'x vanished for some covariate row after 10 projection draws");
}

double synthetic_treatment_score(const Eigen::Ref<const Eigen::VectorXd>& x) {
  const double x1 = x(0), x2 = x(1), x3 = x(2), x4 = x(3), x5 = x(4);
  const double m123 = std::max({x1, x2, x3});
  const double m345 = std::max({x3, x4, x5});
  return 10.0 * (std::sin(m123) + m345 * m345 * m345) / (1.0 + (x1 + x5) * (x1 + x5)) +
         std::sin(0.5 * x3) * (1.0 + std::exp(x4 - 0.5 * x3)) + x3 * x3 + 2.0 * std::sin(x4) + 2.0 * x5 - 6.5;
}

double latent_outcome(const DGPSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& x, double a) {
  if (spec.scenario == Scenario::Synthetic) {
    const double m = std::max(x(0), x(5));
    return 2.0 * (a + synthetic_offset(spec.family)) * std::sin(x(3)) * (a + 4.0 * m * m * m) /
           (1.0 + 2.0 * x(2) * x(2));
  }
  const Projections p = project(spec, x);
  const double ratio = p.v2 / (p.v3 + 2.0) - 0.3;
  if (spec.treatment == TreatmentKind::Binary)
    return std::cos(1.2 * kPi * a) * 2.0 * std::max(-2.0, ratio) + 10.0 * p.v1;
  return 20.0 * (a - 0.5) * std::sin(kPi * a) * (std::max(spec.semi.alpha, ratio) + spec.semi.beta * p.v1);
}

double oracle_theta(const DGPSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& x, double a) {
  return theta_from_latent(spec, latent_outcome(spec, x, a));
}

double oracle_mu(const DGPSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& x, double a) {
  return mean_from_theta(spec.family, oracle_theta(spec, x, a));
}

const std::pair<Eigen::VectorXd, Eigen::VectorXd>& gauss_hermite_64() {
  static const std::pair<Eigen::VectorXd, Eigen::VectorXd> rule = [] {
    // Golub-Welsch: eigen-decomposition of the Jacobi matrix of the Hermite recurrence.
    constexpr int n = 64;
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
    for (int k = 1; k < n; ++k) J(k, k - 1) = J(k - 1, k) = std::sqrt(k / 2.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
    Eigen::VectorXd w = es.eigenvectors().row(0).transpose().array().square() * std::sqrt(kPi);
    return std::make_pair(es.eigenvalues(), w);
  }();
  return rule;
}

double oracle_pi(const DGPSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& x, double a) {
  if (spec.treatment == TreatmentKind::Binary) {
    if (a != 0.0 && a != 1.0) throw DomainError("binary oracle_pi needs a in {0, 1}");
    double p1 = 0.0;
    if (spec.scenario == Scenario::Synthetic) {
      const auto& [nodes, weights] = gauss_hermite_64();
      const double f = synthetic_treatment_score(x);
      for (Eigen::Index k = 0; k < nodes.size(); ++k)
        p1 += weights(k) * sigmoid(f + spec.noise_mean + std::sqrt(2.0) * spec.noise_sd * nodes(k));
      p1 /= std::sqrt(kPi);
    } else {
      p1 = sigmoid(semi_treatment_score(spec, x));
    }
    return a == 1.0 ? p1 : 1.0 - p1;
  }
  if (!(a > 0.0 && a < 1.0)) throw DomainError("continuous oracle density is defined on the open interval (0, 1)");
  if (spec.scenario == Scenario::Synthetic) {
    const double z = (std::log(a) - std::log1p(-a) - synthetic_treatment_score(x) - spec.noise_mean) / spec.noise_sd;
    return std::exp(-0.5 * z * z) / (std::sqrt(2.0 * kPi) * spec.noise_sd) / (a * (1.0 - a));
  }
  const double b = beta_shape(semi_treatment_score(spec, x));
  return b * (b + 1.0) * a * std::pow(1.0 - a, b - 1.0);
}

Eigen::VectorXd oracle_theta_batch(const DGPSpec& spec, const Eigen::MatrixXd& X, double a) {
  Eigen::VectorXd out(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const Eigen::VectorXd xi = X.row(i).transpose();
    out(i) = oracle_theta(spec, xi, a);
  }
  return out;
}

Eigen::VectorXd oracle_mu_batch(const DGPSpec& spec, const Eigen::MatrixXd& X, double a) {
  Eigen::VectorXd out(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const Eigen::VectorXd xi = X.row(i).transpose();
    out(i) = oracle_mu(spec, xi, a);
  }
  return out;
}

Eigen::VectorXd oracle_pi_batch(const DGPSpec& spec, const Eigen::MatrixXd& X, double a) {
  Eigen::VectorXd out(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const Eigen::VectorXd xi = X.row(i).transpose();
    out(i) = oracle_pi(spec, xi, a);
  }
  return out;
}

double sample_outcome(const DGPSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& x, double a, Rng& rng) {
  return sample(spec.family, oracle_mu(spec, x, a), rng);
}

Dataset generate(const DGPSpec& spec, Eigen::Index n, std::uint64_t seed) {
  if (n < 1) throw ConfigError("dataset size must be >= 1");
  if (spec.scenario != Scenario::Synthetic)
    throw ConfigError("semi-synthetic data needs covariates; use gen_semisynthetic");
  Rng rng = make_stream(seed, "data");
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Dataset d;
  d.X.resize(n, 6);
  d.A.resize(n);
  d.Y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < 6; ++j) d.X(i, j) = unif(rng);
    d.A(i) = draw_treatment(spec, d.X.row(i).transpose(), rng);
    d.Y(i) = sample_outcome(spec, d.X.row(i).transpose(), d.A(i), rng);
  }
  d.meta = {seed, spec.hash(), spec.family, spec.treatment};
  return d;
}

Dataset gen_synthetic(Eigen::Index n, TreatmentKind treatment, const FamilySpec& family, std::uint64_t seed,
                      double noise_mean) {
  return generate(DGPSpec::synthetic(treatment, family, noise_mean), n, seed);
}

Dataset gen_semisynthetic(const Eigen::MatrixXd& X, DGPSpec& spec, std::uint64_t seed) {
  if (X.rows() == 0 || X.cols() == 0) throw DataError("semi-synthetic generation needs a nonempty covariate matrix");
  if (spec.scenario != Scenario::SemiSynthetic) throw ConfigError("spec is not semi-synthetic");
  if (spec.projections.rows() != X.cols()) realize_projections(spec, X);
  Rng rng = make_stream(seed, "data");
  Dataset d;
  d.X = X;
  d.A.resize(X.rows());
  d.Y.resize(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    d.A(i) = draw_treatment(spec, X.row(i).transpose(), rng);
    d.Y(i) = sample_outcome(spec, X.row(i).transpose(), d.A(i), rng);
  }
  d.meta = {seed, spec.hash(), spec.family, spec.treatment};
  return d;
}

Eigen::MatrixXd surrogate_covariates(Preset preset, Eigen::Index n, std::uint64_t seed, Eigen::Index dim) {
  Rng rng = make_stream(seed, "covariates");
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::exponential_distribution<double> expo(1.0);
  const bool tcga = preset == Preset::TCGA;
  const Eigen::Index d = dim > 0 ? dim : (tcga ? 4000 : 498);
  Eigen::MatrixXd X(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) {
      if (tcga)
        X(i, j) = std::exp(0.5 * std::log(1e-3 + unif(rng)));
      else
        X(i, j) = unif(rng) < 0.05 ? std::floor(1.0 + 3.0 * expo(rng)) : 0.0;
    }
    if (!tcga && X.row(i).maxCoeff() == 0.0)
      X(i, static_cast<Eigen::Index>(unif(rng) * static_cast<double>(d)) % d) = 1.0;
    X.row(i) /= X.row(i).norm();
  }
  return X;
}

OracleValue oracle_adcf(const DGPSpec& spec, const Eigen::MatrixXd& X_eval, double a) {
  if (X_eval.rows() == 0) throw DataError("oracle over an empty covariate matrix");
  const Eigen::VectorXd th = oracle_theta_batch(spec, X_eval, a);
  OracleValue out;
  out.n_mc = th.size();
  out.value = th.mean();
  if (th.size() > 1)
    out.mc_se = std::sqrt((th.array() - out.value).square().sum() / static_cast<double>(th.size() - 1) /
                          static_cast<double>(th.size()));
  return out;
}

OracleValue oracle_ate(const DGPSpec& spec, const Eigen::MatrixXd& X_eval) {
  if (spec.treatment != TreatmentKind::Binary) throw ConfigError("ATE oracle needs binary treatment");
  if (X_eval.rows() == 0) throw DataError("oracle over an empty covariate matrix");
  const Eigen::VectorXd d = oracle_theta_batch(spec, X_eval, 1.0) - oracle_theta_batch(spec, X_eval, 0.0);
  OracleValue out;
  out.n_mc = d.size();
  out.value = d.mean();
  if (d.size() > 1)
    out.mc_se = std::sqrt((d.array() - out.value).square().sum() / static_cast<double>(d.size() - 1) /
                          static_cast<double>(d.size()));
  return out;
}

Dataset ingest_csv(const std::string& path, const FamilySpec& family, TreatmentKind treatment) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset '" + path + "'");
  auto split = [](const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
  };
  std::string line;
  if (!std::getline(in, line)) throw DataError("dataset '" + path + "' is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::vector<std::string> header = split(line);
  if (header.size() < 3) throw DataError("header must be x1,...,xd,a,y", 1);
  const std::size_t d = header.size() - 2;
  for (std::size_t j = 0; j < d; ++j)
    if (header[j] != "x" + std::to_string(j + 1))
      throw DataError("header column " + std::to_string(j + 1) + " must be 'x" + std::to_string(j + 1) + "'", 1);
  if (header[d] != "a" || header[d + 1] != "y") throw DataError("header must end with a,y", 1);

  std::vector<std::vector<double>> rows;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> cells = split(line);
    if (cells.size() != header.size())
      throw DataError("expected " + std::to_string(header.size()) + " cells, found " + std::to_string(cells.size()),
                      line_no);
    std::vector<double> values(cells.size());
    for (std::size_t j = 0; j < cells.size(); ++j)
      if (!parse_double(cells[j], values[j])) throw DataError("cannot parse '" + cells[j] + "' as a number", line_no);
    const double a = values[d], y = values[d + 1];
    if (treatment == TreatmentKind::Binary ? (a != 0.0 && a != 1.0) : !(a >= 0.0 && a <= 1.0))
      throw DataError("treatment " + cells[d] + " outside its domain", line_no);
    try {
      check_outcome(family, y);
    } catch (const DataError& e) {
      throw DataError(std::string(e.what()) + ": y = " + cells[d + 1], line_no);
    }
    rows.push_back(std::move(values));
  }
  if (rows.empty()) throw DataError("dataset '" + path + "' has no rows");
  Dataset out;
  const auto n = static_cast<Eigen::Index>(rows.size());
  out.X.resize(n, static_cast<Eigen::Index>(d));
  out.A.resize(n);
  out.Y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    for (std::size_t j = 0; j < d; ++j) out.X(i, static_cast<Eigen::Index>(j)) = r[j];
    out.A(i) = r[d];
    out.Y(i) = r[d + 1];
  }
  out.meta.family = family;
  out.meta.treatment = treatment;
  return out;
}

void export_csv(const Dataset& data, const std::string& path) {
  std::string s;
  for (Eigen::Index j = 0; j < data.dim(); ++j) s += "x" + std::to_string(j + 1) + ",";
  s += "a,y\n";
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    for (Eigen::Index j = 0; j < data.dim(); ++j) s += format_double(data.X(i, j)) + ",";
    s += format_double(data.A(i)) + "," + format_double(data.Y(i)) + "\n";
  }
  write_file_atomic(path, s);
}

}  // namespace eftr
