#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "doctest.h"
#include "eftr/dgp.hpp"
#include "eftr/errors.hpp"
#include "eftr/io.hpp"

using namespace eftr;

namespace {

const DGPSpec kBinBern = DGPSpec::synthetic(TreatmentKind::Binary, FamilySpec::bernoulli());
const DGPSpec kBinPois = DGPSpec::synthetic(TreatmentKind::Binary, FamilySpec::poisson());
const DGPSpec kConBern = DGPSpec::synthetic(TreatmentKind::Continuous, FamilySpec::bernoulli());

bool same(const Dataset& a, const Dataset& b) {
  return a.X == b.X && a.A == b.A && a.Y == b.Y;
}

std::string temp_path(const std::string& name) { return "eftr_test_" + name; }

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

}  // namespace

TEST_CASE("synthetic ranges") {
  const Dataset b = generate(kBinBern, 2000, 1);
  CHECK(b.X.minCoeff() >= 0.0);
  CHECK(b.X.maxCoeff() <= 1.0);
  CHECK(((b.A.array() == 0.0) || (b.A.array() == 1.0)).all());
  CHECK(((b.Y.array() == 0.0) || (b.Y.array() == 1.0)).all());
  CHECK_NOTHROW(b.validate());
  const Dataset c = generate(kConBern, 2000, 2);
  CHECK(c.A.minCoeff() > 0.0);
  CHECK(c.A.maxCoeff() <= 1.0);
  const Dataset p = generate(kBinPois, 2000, 3);
  CHECK(p.Y.minCoeff() >= 0.0);
  CHECK((p.Y.array() == p.Y.array().floor()).all());
  CHECK(p.dim() == 6);
}

TEST_CASE("deterministic replay") {
  CHECK(same(generate(kBinBern, 500, 7), generate(kBinBern, 500, 7)));
  CHECK_FALSE(same(generate(kBinBern, 500, 7), generate(kBinBern, 500, 8)));
  CHECK(same(gen_synthetic(300, TreatmentKind::Continuous, FamilySpec::poisson(), 9),
             gen_synthetic(300, TreatmentKind::Continuous, FamilySpec::poisson(), 9)));
}

TEST_CASE("latent outcome formula") {
  Eigen::VectorXd x(6);
  x << 0.2, 0.9, 0.4, 0.7, 0.1, 0.5;
  const double expected = 2 * (1 - 0.5) * std::sin(0.7) * (1 + 4 * 0.125) / (1 + 2 * 0.16);
  CHECK(latent_outcome(kBinBern, x, 1.0) == doctest::Approx(expected).epsilon(1e-14));
  const double pois = 2 * (0 + 0.5) * std::sin(0.7) * (0 + 4 * 0.125) / (1 + 2 * 0.16);
  CHECK(latent_outcome(kBinPois, x, 0.0) == doctest::Approx(pois).epsilon(1e-14));
  CHECK(oracle_theta(kBinBern, x, 1.0) == latent_outcome(kBinBern, x, 1.0));
  CHECK(oracle_mu(kBinBern, x, 1.0) == doctest::Approx(1 / (1 + std::exp(-expected))).epsilon(1e-14));
  CHECK(oracle_theta(kBinPois, x, 0.0) == doctest::Approx(pois).epsilon(1e-14));
  CHECK(oracle_mu(kBinPois, x, 0.0) == doctest::Approx(std::exp(pois)).epsilon(1e-14));
}

TEST_CASE("Poisson canonical parameter is capped") {
  DGPSpec spec = DGPSpec::synthetic(TreatmentKind::Continuous, FamilySpec::poisson());
  Eigen::VectorXd x(6);
  x << 1, 1, 0, std::numbers::pi / 2, 0, 1;  // mu~ = 2 (a + 0.5)(a + 4) at a
  CHECK(latent_outcome(spec, x, 1.0) == doctest::Approx(15.0));
  CHECK(oracle_theta(spec, x, 1.0) == 4.0);
}

TEST_CASE("arm-0 Bernoulli outcomes lean negative") {
  const Dataset d = generate(kBinBern, 100000, 10);
  double s = 0;
  long n = 0;
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    CHECK(latent_outcome(kBinBern, d.X.row(i).transpose(), 0.0) <= 0.0);
    if (d.A(i) == 0.0) {
      s += d.Y(i);
      ++n;
    }
  }
  REQUIRE(n > 1000);
  CHECK(s / n < 0.5);
}

TEST_CASE("binary propensity") {
  Eigen::VectorXd x(6);
  x << 0.3, 0.6, 0.2, 0.8, 0.5, 0.4;
  DGPSpec centered = kBinBern;
  centered.noise_mean = -synthetic_treatment_score(x);
  CHECK(oracle_pi(centered, x, 1.0) == doctest::Approx(0.5).epsilon(1e-14));
  DGPSpec shifted = kBinBern;
  shifted.noise_mean = 20.0;
  CHECK(oracle_pi(shifted, x, 1.0) >= 0.999);
  CHECK(oracle_pi(kBinBern, x, 0.0) + oracle_pi(kBinBern, x, 1.0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK_THROWS_AS(oracle_pi(kBinBern, x, 0.5), DomainError);

  // quadrature agrees with the empirical arm frequency
  const Dataset d = generate(kBinBern, 100000, 11);
  const Eigen::VectorXd p = oracle_pi_batch(kBinBern, d.X, 1.0);
  const double expected = p.mean();
  const double observed = d.A.mean();
  CHECK(std::abs(observed - expected) <= 5 * std::sqrt(expected * (1 - expected) / d.size()));
}

TEST_CASE("Gauss-Hermite rule") {
  const auto& [t, w] = gauss_hermite_64();
  REQUIRE(t.size() == 64);
  CHECK(w.sum() == doctest::Approx(std::sqrt(std::numbers::pi)).epsilon(1e-12));
  CHECK((w.array() * t.array().square()).sum() == doctest::Approx(std::sqrt(std::numbers::pi) / 2).epsilon(1e-12));
  CHECK(std::abs((w.array() * t.array()).sum()) <= 1e-13);
}

TEST_CASE("continuous density integrates to one") {
  const Dataset d = generate(kConBern, 5, 12);
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    const Eigen::VectorXd x = d.X.row(i).transpose();
    // substitute a = sigmoid(t): the integrand becomes the normal density in t
    const int steps = 40000;
    const double lo = std::log(1e-6 / (1 - 1e-6)), hi = -lo, h = (hi - lo) / steps;
    double total = 0;
    for (int k = 0; k < steps; ++k) {
      const double tt = lo + (k + 0.5) * h;
      const double a = 1 / (1 + std::exp(-tt));
      total += oracle_pi(kConBern, x, a) * a * (1 - a) * h;
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-4));
  }
  Eigen::VectorXd x = d.X.row(0).transpose();
  CHECK_THROWS_AS(oracle_pi(kConBern, x, 0.0), DomainError);
  CHECK_THROWS_AS(oracle_pi(kConBern, x, 1.0), DomainError);
}

TEST_CASE("oracle mean matches binned outcomes") {
  for (const DGPSpec& spec : {kBinBern, kBinPois}) {
    const Dataset d = generate(spec, 100000, 13);
    const int bins = 10;
    for (double arm : {0.0, 1.0}) {
      std::vector<double> sum_y(bins, 0), sum_mu(bins, 0), sum_var(bins, 0);
      std::vector<long> count(bins, 0);
      for (Eigen::Index i = 0; i < d.size(); ++i) {
        if (d.A(i) != arm) continue;
        const double mu = oracle_mu(spec, d.X.row(i).transpose(), arm);
        const int b = std::min(bins - 1, static_cast<int>(d.X(i, 3) * bins));
        sum_y[b] += d.Y(i);
        sum_mu[b] += mu;
        sum_var[b] += spec.family.kind == FamilyKind::Bernoulli ? mu * (1 - mu) : mu;
        ++count[b];
      }
      for (int b = 0; b < bins; ++b) {
        if (count[b] < 30) continue;
        CHECK(std::abs(sum_y[b] - sum_mu[b]) <= 3.5 * std::sqrt(sum_var[b]));
      }
    }
  }
}

// Fixtures from tests/oracles/synthetic_oracle.py (4e6 draws, numpy).
TEST_CASE("frozen population ADCF") {
  struct Fixture {
    DGPSpec spec;
    double psi0, se0, psi1, se1, ate, se_ate;
  };
  const Fixture fixtures[] = {
      {kBinBern, -0.496794, 0.000275, 0.807250, 0.000345, 1.304044, 0.000616},
      {kBinPois, 0.496794, 0.000275, 2.057474, 0.000665, 1.560680, 0.000458},
  };
  for (const Fixture& f : fixtures) {
    const Eigen::MatrixXd X = generate(f.spec, 400000, 14).X;
    const OracleValue p0 = oracle_adcf(f.spec, X, 0.0), p1 = oracle_adcf(f.spec, X, 1.0);
    const OracleValue ate = oracle_ate(f.spec, X);
    CHECK(std::abs(p0.value - f.psi0) <= 4 * std::hypot(p0.mc_se, f.se0));
    CHECK(std::abs(p1.value - f.psi1) <= 4 * std::hypot(p1.mc_se, f.se1));
    CHECK(std::abs(ate.value - f.ate) <= 4 * std::hypot(ate.mc_se, f.se_ate));
    CHECK(ate.value == doctest::Approx(p1.value - p0.value).epsilon(1e-12));
    CHECK(p0.n_mc == 400000);
  }
}

TEST_CASE("oracle on a single repeated row is that row's value") {
  Eigen::MatrixXd X(50, 6);
  X.rowwise() = Eigen::RowVectorXd::LinSpaced(6, 0.1, 0.9);
  const OracleValue v = oracle_adcf(kBinBern, X, 1.0);
  CHECK(v.value == doctest::Approx(oracle_theta(kBinBern, X.row(0).transpose(), 1.0)).epsilon(1e-14));
  CHECK(v.mc_se <= 1e-12);
}

TEST_CASE("continuous ADCF curve is smooth") {
  const Eigen::MatrixXd X = generate(kConBern, 20000, 15).X;
  for (int k = 0; k < 100; ++k) {
    const double a = k / 100.0;
    CHECK(std::abs(oracle_adcf(kConBern, X, a).value - oracle_adcf(kConBern, X, a + 1e-4).value) <= 1e-2);
  }
}

TEST_CASE("semi-synthetic presets") {
  const SemiSyntheticParams news = SemiSyntheticParams::for_preset(Preset::News, TreatmentKind::Continuous);
  const SemiSyntheticParams tcga = SemiSyntheticParams::for_preset(Preset::TCGA, TreatmentKind::Binary);
  CHECK(news.w == 0.5);
  CHECK(tcga.w == 5.0);
  CHECK(to_string(Preset::TCGA) == "tcga");
  CHECK(preset_from_string("news") == Preset::News);
  CHECK(scenario_from_string(to_string(Scenario::SemiSynthetic)) == Scenario::SemiSynthetic);
  CHECK_THROWS_AS(preset_from_string("ihdp"), ConfigError);
}

TEST_CASE("surrogate covariates") {
  const Eigen::MatrixXd news = surrogate_covariates(Preset::News, 50, 1);
  CHECK(news.cols() == 498);
  CHECK(news.minCoeff() >= 0.0);
  CHECK((news.rowwise().norm().array() - 1.0).abs().maxCoeff() <= 1e-12);
  const Eigen::MatrixXd tcga = surrogate_covariates(Preset::TCGA, 10, 2, 40);
  CHECK(tcga.cols() == 40);
  CHECK(tcga.minCoeff() > 0.0);
  CHECK(surrogate_covariates(Preset::News, 5, 3) == surrogate_covariates(Preset::News, 5, 3));
}

TEST_CASE("semi-synthetic generation") {
  const Eigen::MatrixXd X = surrogate_covariates(Preset::TCGA, 2000, 4, 30);
  SUBCASE("continuous doses lie inside (0, 1)") {
    DGPSpec spec = DGPSpec::semi_synthetic(Preset::TCGA, TreatmentKind::Continuous, FamilySpec::bernoulli());
    const Dataset d = gen_semisynthetic(X, spec, 5);
    CHECK(spec.projections.rows() == 30);
    CHECK(spec.projections.cols() == 3);
    CHECK((spec.projections.colwise().norm().array() - 1.0).abs().maxCoeff() <= 1e-12);
    CHECK(d.A.minCoeff() > 0.0);
    CHECK(d.A.maxCoeff() < 1.0);
    DGPSpec again = DGPSpec::semi_synthetic(Preset::TCGA, TreatmentKind::Continuous, FamilySpec::bernoulli());
    CHECK(same(d, gen_semisynthetic(X, again, 5)));
  }
  SUBCASE("binary contrast") {
    DGPSpec spec = DGPSpec::semi_synthetic(Preset::News, TreatmentKind::Binary, FamilySpec::bernoulli());
    const Dataset d = gen_semisynthetic(X, spec, 6);
    const Eigen::VectorXd v1 = X * spec.projections.col(0), v2 = X * spec.projections.col(1),
                          v3 = X * spec.projections.col(2);
    double mean = 0;
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      const Eigen::VectorXd x = X.row(i).transpose();
      const double contrast = (1 - std::cos(1.2 * std::numbers::pi)) * 2 * std::max(-2.0, v2(i) / (v3(i) + 2) - 0.3);
      CHECK(latent_outcome(spec, x, 0.0) - latent_outcome(spec, x, 1.0) == doctest::Approx(contrast).epsilon(1e-10));
      mean += oracle_theta(spec, x, 1.0) - oracle_theta(spec, x, 0.0);
      (void)v1;
    }
    CHECK(oracle_ate(spec, X).value == doctest::Approx(mean / X.rows()).epsilon(1e-12));
  }
  SUBCASE("treatment score") {
    DGPSpec spec = DGPSpec::semi_synthetic(Preset::News, TreatmentKind::Binary, FamilySpec::bernoulli());
    realize_projections(spec, X);
    const Eigen::VectorXd x = X.row(0).transpose();
    const double score = std::abs(spec.semi.w * spec.projections.col(2).dot(x) / spec.projections.col(1).dot(x));
    CHECK(oracle_pi(spec, x, 1.0) == doctest::Approx(1 / (1 + std::exp(-score))).epsilon(1e-14));
  }
  SUBCASE("zero covariate rows exhaust the projection retries") {
    DGPSpec spec = DGPSpec::semi_synthetic(Preset::News, TreatmentKind::Binary, FamilySpec::bernoulli());
    CHECK_THROWS_AS(realize_projections(spec, Eigen::MatrixXd::Zero(3, 30)), DataError);
  }
}

TEST_CASE("CSV ingest and export") {
  const std::string path = temp_path("small.csv");
  write_text(path, "x1,x2,a,y\n0.5,1e-3,1,0\n0.25,-2,0,1\n3,4,1,1\n");
  const Dataset d = ingest_csv(path, FamilySpec::bernoulli(), TreatmentKind::Binary);
  CHECK(d.size() == 3);
  CHECK(d.dim() == 2);
  CHECK(d.X(1, 1) == -2.0);
  CHECK(d.Y(0) == 0.0);

  const std::string out = temp_path("round.csv");
  const Dataset g = generate(kConBern, 200, 16);
  export_csv(g, out);
  const Dataset back = ingest_csv(out, FamilySpec::bernoulli(), TreatmentKind::Continuous);
  CHECK(same(g, back));
  const std::string out2 = temp_path("round2.csv");
  export_csv(back, out2);
  CHECK(read_file(out) == read_file(out2));

  write_text(path, "x1,x2,a,y\n0.5,1,1,0\n0.5,1,1,2\n");
  try {
    ingest_csv(path, FamilySpec::bernoulli(), TreatmentKind::Binary);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(e.row() == 3);
  }
  write_text(path, "x1,x2,a,y\n0.5,1,1\n");
  CHECK_THROWS_AS(ingest_csv(path, FamilySpec::bernoulli(), TreatmentKind::Binary), DataError);
  write_text(path, "x1,z,a,y\n0.5,1,1,0\n");
  CHECK_THROWS_AS(ingest_csv(path, FamilySpec::bernoulli(), TreatmentKind::Binary), DataError);
  write_text(path, "x1,a,y\n0.5x,1,0\n");
  CHECK_THROWS_AS(ingest_csv(path, FamilySpec::bernoulli(), TreatmentKind::Binary), DataError);
  write_text(path, "x1,a,y\n0.5,0.3,0\n");
  CHECK_THROWS_AS(ingest_csv(path, FamilySpec::bernoulli(), TreatmentKind::Binary), DataError);
  CHECK_THROWS_AS(ingest_csv(temp_path("missing.csv"), FamilySpec::bernoulli(), TreatmentKind::Binary), DataError);
  std::remove(path.c_str());
  std::remove(out.c_str());
  std::remove(out2.c_str());
}

TEST_CASE("spec hash") {
  const DGPSpec a = DGPSpec::synthetic(TreatmentKind::Binary, FamilySpec::bernoulli());
  DGPSpec b = a;
  CHECK(a.hash() == b.hash());
  b.noise_mean = 0.1;
  CHECK(a.hash() != b.hash());
  CHECK(a.canonical().find("bernoulli") != std::string::npos);
}
