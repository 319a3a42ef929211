#include "eftr/dataset.hpp"

#include <cmath>

#include "eftr/errors.hpp"

namespace eftr {

std::string to_string(TreatmentKind kind) { return kind == TreatmentKind::Binary ? "binary" : "continuous"; }

TreatmentKind treatment_kind_from_string(const std::string& name) {
  if (name == "binary") return TreatmentKind::Binary;
  if (name == "continuous") return TreatmentKind::Continuous;
  throw ConfigError("unknown treatment kind '" + name + "'");
}

Dataset Dataset::subset(const std::vector<Eigen::Index>& rows) const {
  Dataset out;
  out.meta = meta;
  const auto n = static_cast<Eigen::Index>(rows.size());
  out.X.resize(n, X.cols());
  out.A.resize(n);
  out.Y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index r = rows[static_cast<std::size_t>(i)];
    out.X.row(i) = X.row(r);
    out.A(i) = A(r);
    out.Y(i) = Y(r);
  }
  return out;
}

void Dataset::validate() const {
  if (A.size() != X.rows() || Y.size() != X.rows()) throw DataError("dataset columns have inconsistent lengths");
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    if (!X.row(i).allFinite()) throw DataError("non-finite covariate", static_cast<long>(i));
    const double a = A(i);
    if (meta.treatment == TreatmentKind::Binary) {
      if (a != 0.0 && a != 1.0) throw DataError("binary treatment must be 0 or 1", static_cast<long>(i));
    } else if (!(a >= 0.0 && a <= 1.0)) {
      throw DataError("continuous treatment must lie in [0, 1]", static_cast<long>(i));
    }
    try {
      check_outcome(meta.family, Y(i));
    } catch (const DataError& e) {
      throw DataError(e.what(), static_cast<long>(i));
    }
  }
}

}  // namespace eftr
