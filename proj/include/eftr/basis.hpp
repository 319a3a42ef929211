#pragma once

// Dose bases on [0, 1]: clamped B-splines with equally spaced knots and
// monomials. Both back the varying-coefficient weights w(a) = sum_l alpha_l phi_l(a)
// of the outcome head; B-splines also back the perturbation eps(a) = sum_k c_k B_k(a).

#include <variant>
#include <vector>

#include <Eigen/Core>

namespace eftr {

// Clamped B-spline basis of the given degree. Knots: 0 and 1 repeated degree+1
// times, plus `interior_knots` equally spaced interior knots. Basis size is
// interior_knots + degree + 1. Evaluation is right-continuous and closed at 1.
class SplineBasis {
 public:
  SplineBasis(int degree, int interior_knots);

  int degree() const { return degree_; }
  int interior_knots() const { return interior_; }
  int size() const { return interior_ + degree_ + 1; }
  const std::vector<double>& knots() const { return knots_; }

  // Writes size() values into `out`.
  void eval(double a, double* out) const;
  // d/da of each basis function; one-sided (right) derivative on interior knots.
  void derivative(double a, double* out) const;

 private:
  int span(double a) const;
  // The order+1 nonzero basis functions of degree `order` on span `s`.
  void nonzero(int s, double a, int order, double* values) const;

  int degree_;
  int interior_;
  std::vector<double> knots_;
};

// phi_l(a) = a^(l-1), l = 1..size.
class PolyBasis {
 public:
  explicit PolyBasis(int size);

  int size() const { return size_; }
  void eval(double a, double* out) const;
  void derivative(double a, double* out) const;

 private:
  int size_;
};

using Basis = std::variant<SplineBasis, PolyBasis>;

// Serializable description of a basis.
struct BasisConfig {
  enum class Kind { Spline, Poly };
  Kind kind = Kind::Spline;
  int degree = 2;          // spline degree
  int interior_knots = 2;  // spline interior knots
  int poly_size = 3;       // number of monomials for Kind::Poly

  Basis build() const;
  bool operator==(const BasisConfig&) const = default;
};

int basis_size(const Basis& basis);

// Throws DomainError for a outside [0, 1].
Eigen::VectorXd eval_basis(const Basis& basis, double a);
Eigen::VectorXd eval_basis_derivative(const Basis& basis, double a);

// Row i holds the basis values at doses(i).
Eigen::MatrixXd eval_basis_rows(const Basis& basis, const Eigen::VectorXd& doses);

// Size of the perturbation basis for n samples: max(floor_size, round(c * n^(1/6))) + degree.
int kn_for_sample_size(long n, int degree = 2, double constant = 1.0, int floor_size = 4);

}  // namespace eftr
