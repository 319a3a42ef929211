#include <cmath>

#include "doctest.h"
#include "eftr/basis.hpp"
#include "eftr/errors.hpp"

using namespace eftr;

TEST_CASE("quadratic spline with knots at thirds") {
  const SplineBasis b(2, 2);
  REQUIRE(b.size() == 5);
  const std::vector<double> expected{0, 0, 0, 1.0 / 3, 2.0 / 3, 1, 1, 1};
  REQUIRE(b.knots().size() == expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) CHECK(b.knots()[i] == doctest::Approx(expected[i]));

  const Basis basis = b;
  CHECK(eval_basis(basis, 0.5).sum() == doctest::Approx(1.0).epsilon(1e-15));
  const Eigen::VectorXd at0 = eval_basis(basis, 0.0);
  CHECK(at0(0) == 1.0);
  CHECK(at0.tail(4).cwiseAbs().maxCoeff() == 0.0);
  const Eigen::VectorXd at1 = eval_basis(basis, 1.0);
  CHECK(at1(4) == 1.0);
  CHECK(at1.head(4).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("partition of unity and nonnegativity") {
  for (int degree = 0; degree <= 3; ++degree) {
    for (int knots = 0; knots <= 5; ++knots) {
      const Basis basis = SplineBasis(degree, knots);
      for (int i = 0; i <= 200; ++i) {
        const Eigen::VectorXd v = eval_basis(basis, i / 200.0);
        CHECK(v.sum() == doctest::Approx(1.0).epsilon(1e-13));
        CHECK(v.minCoeff() >= 0.0);
        CHECK(eval_basis_derivative(basis, i / 200.0).sum() == doctest::Approx(0.0).scale(1.0).epsilon(1e-10));
      }
    }
  }
}

TEST_CASE("known quadratic values") {
  // single interior knot at 0.5; closed forms on [0, 0.5)
  const Basis basis = SplineBasis(2, 1);
  const double a = 0.2, t = a / 0.5;
  const Eigen::VectorXd v = eval_basis(basis, a);
  CHECK(v(0) == doctest::Approx((1 - t) * (1 - t)));
  CHECK(v(1) == doctest::Approx(2 * t - 1.5 * t * t));
  CHECK(v(2) == doctest::Approx(0.5 * t * t));
  CHECK(v(3) == 0.0);
}

TEST_CASE("linear spline without interior knots is (1 - a, a)") {
  const Basis basis = SplineBasis(1, 0);
  const Eigen::VectorXd v = eval_basis(basis, 0.3);
  CHECK(v(0) == doctest::Approx(0.7));
  CHECK(v(1) == doctest::Approx(0.3));
  CHECK(eval_basis(basis, 1.0)(1) == 1.0);
}

TEST_CASE("spline derivative against finite differences") {
  const Basis basis = SplineBasis(3, 3);
  for (double a : {0.1, 0.33, 0.6, 0.9}) {
    const double h = 1e-6;
    const Eigen::VectorXd fd = (eval_basis(basis, a + h) - eval_basis(basis, a - h)) / (2 * h);
    const Eigen::VectorXd d = eval_basis_derivative(basis, a);
    CHECK((fd - d).cwiseAbs().maxCoeff() <= 1e-6);
  }
}

TEST_CASE("poly basis") {
  const Basis basis = PolyBasis(3);
  const Eigen::VectorXd v = eval_basis(basis, 0.5);
  CHECK(v(0) == 1.0);
  CHECK(v(1) == 0.5);
  CHECK(v(2) == 0.25);
  const Eigen::VectorXd d = eval_basis_derivative(basis, 0.5);
  CHECK(d(0) == 0.0);
  CHECK(d(1) == 1.0);
  CHECK(d(2) == 1.0);
  CHECK(eval_basis(basis, 0.0)(0) == 1.0);
  CHECK_THROWS_AS(PolyBasis(0), DomainError);
}

TEST_CASE("dose outside [0, 1] is rejected") {
  const Basis s = SplineBasis(2, 2);
  const Basis p = PolyBasis(2);
  CHECK_THROWS_AS(eval_basis(s, -0.01), DomainError);
  CHECK_THROWS_AS(eval_basis(s, 1.01), DomainError);
  CHECK_THROWS_AS(eval_basis(p, 2.0), DomainError);
  CHECK_THROWS_AS(eval_basis_derivative(s, std::nan("")), DomainError);
  CHECK_THROWS_AS(SplineBasis(-1, 2), DomainError);
  CHECK_THROWS_AS(SplineBasis(2, -1), DomainError);
}

TEST_CASE("basis rows") {
  const Basis basis = SplineBasis(2, 2);
  Eigen::VectorXd doses(3);
  doses << 0.0, 0.5, 1.0;
  const Eigen::MatrixXd rows = eval_basis_rows(basis, doses);
  CHECK(rows.rows() == 3);
  CHECK(rows.cols() == 5);
  for (int i = 0; i < 3; ++i) CHECK((rows.row(i).transpose() - eval_basis(basis, doses(i))).norm() == 0.0);
}

TEST_CASE("basis config") {
  BasisConfig c;
  c.kind = BasisConfig::Kind::Poly;
  c.poly_size = 4;
  CHECK(basis_size(c.build()) == 4);
  c.kind = BasisConfig::Kind::Spline;
  c.degree = 3;
  c.interior_knots = 1;
  CHECK(basis_size(c.build()) == 5);
}

TEST_CASE("perturbation basis size rule") {
  CHECK(kn_for_sample_size(10000) == 7);
  CHECK(kn_for_sample_size(64) == 6);
  CHECK(kn_for_sample_size(1000000) == 12);
  CHECK(kn_for_sample_size(10000, 3) == 8);
  CHECK_THROWS_AS(kn_for_sample_size(1), DomainError);
}
