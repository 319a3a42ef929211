#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "eftr/edf.hpp"

namespace eftr {

enum class TreatmentKind { Binary, Continuous };

std::string to_string(TreatmentKind kind);
TreatmentKind treatment_kind_from_string(const std::string& name);

struct DatasetMeta {
  std::uint64_t seed = 0;
  std::string dgp_hash;
  FamilySpec family;
  TreatmentKind treatment = TreatmentKind::Binary;
};

// Observations Z_i = (X_i, A_i, Y_i).
struct Dataset {
  Eigen::MatrixXd X;
  Eigen::VectorXd A;
  Eigen::VectorXd Y;
  DatasetMeta meta;

  Eigen::Index size() const { return X.rows(); }
  Eigen::Index dim() const { return X.cols(); }

  Dataset subset(const std::vector<Eigen::Index>& rows) const;

  // Throws DataError (with row number) on shape mismatch, treatment outside
  // {0,1} / [0,1], or outcome outside the family support.
  void validate() const;
};

}  // namespace eftr
