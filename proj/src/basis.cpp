#include "eftr/basis.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "eftr/errors.hpp"

namespace eftr {

namespace {

void require_unit(double a) {
  if (!(a >= 0.0 && a <= 1.0)) throw DomainError("basis argument must lie in [0, 1], got " + std::to_string(a));
}

}  // namespace

SplineBasis::SplineBasis(int degree, int interior_knots) : degree_(degree), interior_(interior_knots) {
  if (degree < 0) throw DomainError("spline degree must be >= 0");
  if (interior_knots < 0) throw DomainError("interior knot count must be >= 0");
  knots_.assign(static_cast<std::size_t>(degree + 1), 0.0);
  for (int j = 1; j <= interior_knots; ++j) knots_.push_back(static_cast<double>(j) / (interior_knots + 1));
  knots_.insert(knots_.end(), static_cast<std::size_t>(degree + 1), 1.0);
}

int SplineBasis::span(double a) const {
  // Largest s with knots[s] <= a < knots[s+1]; a == 1 falls in the last non-empty span.
  const int last = size() - 1;
  if (a >= 1.0) return last;
  int s = degree_;
  while (s < last && knots_[static_cast<std::size_t>(s + 1)] <= a) ++s;
  return s;
}

void SplineBasis::nonzero(int s, double a, int order, double* values) const {
  // Cox-de Boor triangle for the order+1 functions supported on span s.
  std::vector<double> left(static_cast<std::size_t>(order + 1)), right(static_cast<std::size_t>(order + 1));
  values[0] = 1.0;
  for (int j = 1; j <= order; ++j) {
    left[static_cast<std::size_t>(j)] = a - knots_[static_cast<std::size_t>(s + 1 - j)];
    right[static_cast<std::size_t>(j)] = knots_[static_cast<std::size_t>(s + j)] - a;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double denom = right[static_cast<std::size_t>(r + 1)] + left[static_cast<std::size_t>(j - r)];
      const double temp = denom == 0.0 ? 0.0 : values[r] / denom;
      values[r] = saved + right[static_cast<std::size_t>(r + 1)] * temp;
      saved = left[static_cast<std::size_t>(j - r)] * temp;
    }
    values[j] = saved;
  }
}

void SplineBasis::eval(double a, double* out) const {
  require_unit(a);
  const int k = size();
  for (int i = 0; i < k; ++i) out[i] = 0.0;
  const int s = span(a);
  std::vector<double> v(static_cast<std::size_t>(degree_ + 1));
  nonzero(s, a, degree_, v.data());
  for (int r = 0; r <= degree_; ++r) out[s - degree_ + r] = v[static_cast<std::size_t>(r)];
}

void SplineBasis::derivative(double a, double* out) const {
  require_unit(a);
  const int k = size();
  for (int i = 0; i < k; ++i) out[i] = 0.0;
  if (degree_ == 0) return;
  const int p = degree_;
  const int s = span(a);
  // B'_{i,p} = p/(t_{i+p}-t_i) B_{i,p-1} - p/(t_{i+p+1}-t_{i+1}) B_{i+1,p-1}
  std::vector<double> lower(static_cast<std::size_t>(p));
  nonzero(s, a, p - 1, lower.data());
  // lower[r] is B_{s-p+1+r, p-1}, r = 0..p-1.
  auto lower_at = [&](int i) -> double {
    const int r = i - (s - p + 1);
    return (r >= 0 && r < p) ? lower[static_cast<std::size_t>(r)] : 0.0;
  };
  for (int i = s - p; i <= s; ++i) {
    const double d1 = knots_[static_cast<std::size_t>(i + p)] - knots_[static_cast<std::size_t>(i)];
    const double d2 = knots_[static_cast<std::size_t>(i + p + 1)] - knots_[static_cast<std::size_t>(i + 1)];
    double v = 0.0;
    if (d1 > 0.0) v += p / d1 * lower_at(i);
    if (d2 > 0.0) v -= p / d2 * lower_at(i + 1);
    out[i] = v;
  }
}

PolyBasis::PolyBasis(int size) : size_(size) {
  if (size < 1) throw DomainError("polynomial basis size must be >= 1");
}

void PolyBasis::eval(double a, double* out) const {
  require_unit(a);
  double p = 1.0;
  for (int l = 0; l < size_; ++l) {
    out[l] = p;
    p *= a;
  }
}

void PolyBasis::derivative(double a, double* out) const {
  require_unit(a);
  out[0] = 0.0;
  double p = 1.0;
  for (int l = 1; l < size_; ++l) {
    out[l] = l * p;
    p *= a;
  }
}

Basis BasisConfig::build() const {
  if (kind == Kind::Poly) return PolyBasis(poly_size);
  return SplineBasis(degree, interior_knots);
}

int basis_size(const Basis& basis) {
  return std::visit([](const auto& b) { return b.size(); }, basis);
}

Eigen::VectorXd eval_basis(const Basis& basis, double a) {
  Eigen::VectorXd out(basis_size(basis));
  std::visit([&](const auto& b) { b.eval(a, out.data()); }, basis);
  return out;
}

Eigen::VectorXd eval_basis_derivative(const Basis& basis, double a) {
  Eigen::VectorXd out(basis_size(basis));
  std::visit([&](const auto& b) { b.derivative(a, out.data()); }, basis);
  return out;
}

Eigen::MatrixXd eval_basis_rows(const Basis& basis, const Eigen::VectorXd& doses) {
  const int k = basis_size(basis);
  // Row-major scratch so each row is contiguous for the writer.
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rows(doses.size(), k);
  std::visit(
      [&](const auto& b) {
        for (Eigen::Index i = 0; i < doses.size(); ++i) b.eval(doses(i), rows.row(i).data());
      },
      basis);
  return rows;
}

int kn_for_sample_size(long n, int degree, double constant, int floor_size) {
  if (n < 2) throw DomainError("kn_for_sample_size requires n >= 2");
  const int base = static_cast<int>(std::lround(constant * std::pow(static_cast<double>(n), 1.0 / 6.0)));
  return std::max(floor_size, base) + degree;
}

}  // namespace eftr
