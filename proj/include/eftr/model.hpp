#pragma once

// Two-head estimator: a shared representation z(x) feeds an outcome head
// mu(x, a) and a treatment-density head pi(a | x); a perturbation
// eps(a) = sum_k c_k B_k(a) lives alongside for targeted regularization.
//
// Continuous treatment: the outcome head is a stack of varying-coefficient
// layers whose weights depend on a. The density head scores the B+1 grid points
// {0, 1/B, ..., 1} with a softmax, rescales the scores so their piecewise-linear
// interpolant integrates to one, and interpolates.
//
// Binary treatment: two outcome sub-heads (one per arm) and a single
// propensity logit; eps uses the linear B-spline basis on [0, 1], whose two
// coefficients are exactly eps(0) and eps(1).

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "eftr/basis.hpp"
#include "eftr/dataset.hpp"
#include "eftr/edf.hpp"
#include "eftr/netcore.hpp"

namespace eftr {

struct ModelConfig {
  TreatmentKind treatment = TreatmentKind::Binary;
  FamilySpec family;
  int input_dim = 6;
  std::vector<int> rep_dims{50, 50};
  std::vector<int> outcome_dims{50};
  std::vector<int> density_dims{50};
  int density_grid = 10;  // B
  BasisConfig outcome_basis{BasisConfig::Kind::Spline, 2, 2, 3};
  BasisConfig eps_basis{BasisConfig::Kind::Spline, 2, 2, 3};
  Activation hidden_activation = Activation::ReLU;
  Activation outcome_activation = Activation::Sigmoid;
  bool density_stop_gradient = false;

  // Final outcome activation matching the family mean domain.
  static Activation default_outcome_activation(const FamilySpec& family);

  // Throws ConfigError when the configuration is inconsistent.
  void validate() const;
};

// Per-batch forward state needed by the losses and by backpropagation.
struct ModelForward {
  Eigen::MatrixXd z;
  Graph::Cache trunk_cache;
  Graph::Cache density_cache;
  std::array<Graph::Cache, 2> outcome_cache;  // binary uses both arms

  Eigen::VectorXd mu_raw;    // outcome head output at the observed dose
  Eigen::VectorXd mu;        // clamped
  Eigen::VectorXd theta;     // h(mu)
  Eigen::VectorXd h_prime;   // h'(mu)
  Eigen::VectorXd h_second;  // h''(mu)
  std::vector<bool> mu_clamped;

  Eigen::VectorXd pi;      // pi(a_i | x_i), unclamped
  Eigen::VectorXd log_pi;  // computed stably
  // Continuous density internals.
  Eigen::MatrixXd scores;                // softmax scores s_0..s_B
  std::vector<Eigen::Index> grid_lo;     // floor(B a)
  Eigen::VectorXd grid_u;                // B a - floor(B a)
  Eigen::VectorXd interp_mass;           // C = sum_b c_b s_b
  Eigen::VectorXd trapezoid_mass;        // T = sum_b t_b s_b
  Eigen::VectorXd arm_prob;              // binary: P(A = 1 | x)

  Eigen::MatrixXd eps_rows;  // B_k(a_i)
  Eigen::VectorXd eps;       // eps(a_i)
  Eigen::VectorXd doses;
};

class Model {
 public:
  explicit Model(ModelConfig cfg);

  const ModelConfig& config() const { return cfg_; }
  const FamilySpec& family() const { return cfg_.family; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }
  const Basis& eps_basis() const { return eps_basis_; }
  int eps_size() const { return basis_size(eps_basis_); }

  // Draws network weights from `rng`; eps coefficients start at zero.
  void initialize(Rng& rng);

  // Forward pass at the observed doses A (binary: A in {0,1}).
  ModelForward forward(const Eigen::VectorXd& params, const Eigen::MatrixXd& X, const Eigen::VectorXd& A) const;
  ModelForward forward(const Eigen::MatrixXd& X, const Eigen::VectorXd& A) const {
    return forward(store_.values(), X, A);
  }

  // Backpropagates d(loss)/d(mu_raw) and d(loss)/d(log pi) through the network,
  // accumulating into `grad` (eps coefficients are not touched here).
  void backward(const Eigen::VectorXd& params, const ModelForward& fwd, const Eigen::VectorXd& d_mu_raw,
                const Eigen::VectorXd& d_log_pi, Eigen::VectorXd& grad) const;

  // Predictions with every row evaluated at the same dose a.
  Eigen::VectorXd predict_mu(const Eigen::MatrixXd& X, double a) const;
  Eigen::VectorXd predict_theta(const Eigen::MatrixXd& X, double a) const;
  Eigen::VectorXd predict_pi(const Eigen::MatrixXd& X, double a) const;
  double predict_mu(const Eigen::VectorXd& x, double a) const;
  double predict_theta(const Eigen::VectorXd& x, double a) const;
  double predict_pi(const Eigen::VectorXd& x, double a) const;

  // Density values v_b = s_b / Z(x) at the grid points (continuous only).
  Eigen::MatrixXd density_grid_values(const Eigen::MatrixXd& X) const;

  double eval_eps(double a) const;
  const Slice& eps_slice() const { return store_.slice("eps"); }

  // Names of the parameter slices that belong to each head.
  std::vector<std::string> slices_with_prefix(const std::string& prefix) const;

 private:
  void build();
  void check_dose(double a) const;
  Eigen::VectorXd doses_for(const Eigen::MatrixXd& X, double a) const;

  ModelConfig cfg_;
  ParamStore store_;
  Graph trunk_;
  Graph density_;
  std::array<Graph, 2> outcome_;
  Basis eps_basis_{SplineBasis(1, 0)};
};

struct TrainingMeta {
  long epochs = 0;
  long best_epoch = 0;
  double final_train_loss = 0.0;
  double best_val_loss = 0.0;
  std::uint64_t seed = 0;
  double eps_stationarity = 0.0;
};

struct TrainedModel {
  Model model;
  TrainingMeta meta;
};

}  // namespace eftr
