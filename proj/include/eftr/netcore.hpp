#pragma once

// A small differentiable-computation engine: a flat parameter store with named
// slices, dense and varying-coefficient dense layers with closed-form batch
// backpropagation, first-order optimizers, and a finite-difference gradient
// checker. Everything is double precision.

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "eftr/basis.hpp"
#include "eftr/rng.hpp"

namespace eftr {

enum class Activation { ReLU, Sigmoid, Exp, Identity, Softplus };

std::string to_string(Activation act);
Activation activation_from_string(const std::string& name);

double activate(Activation act, double pre);
// Derivative of the activation given its input and output.
double activation_derivative(Activation act, double pre, double post);

struct Slice {
  Eigen::Index offset = 0;
  Eigen::Index size = 0;
};

// Flat vector of all trainable parameters plus a registry of named,
// contiguous, disjoint slices in registration order.
class ParamStore {
 public:
  Slice add(const std::string& name, Eigen::Index size);
  const Slice& slice(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  Eigen::Index size() const { return values_.size(); }
  Eigen::VectorXd& values() { return values_; }
  const Eigen::VectorXd& values() const { return values_; }

  auto segment(const std::string& name) {
    const Slice& s = slice(name);
    return values_.segment(s.offset, s.size);
  }
  auto segment(const std::string& name) const {
    const Slice& s = slice(name);
    return values_.segment(s.offset, s.size);
  }

  const std::vector<std::pair<std::string, Slice>>& entries() const { return entries_; }

 private:
  Eigen::VectorXd values_;
  std::vector<std::pair<std::string, Slice>> entries_;
  std::map<std::string, std::size_t> index_;
};

enum class LayerKind { Dense, VaryingCoeffDense };

struct LayerSpec {
  LayerKind kind = LayerKind::Dense;
  int in_dim = 0;
  int out_dim = 0;
  Activation activation = Activation::Identity;
  BasisConfig basis;  // used by VaryingCoeffDense only
};

struct GraphSpec {
  std::string name;
  std::vector<LayerSpec> layers;

  // Throws ConfigError on incompatible adjacent dimensions or an empty graph.
  void validate() const;
  bool needs_dose() const;
  int in_dim() const { return layers.front().in_dim; }
  int out_dim() const { return layers.back().out_dim; }
};

// Feed-forward stack of layers whose parameters live in a ParamStore.
// A VaryingCoeffDense layer at dose a uses W(a) = sum_l phi_l(a) W_l and
// b(a) = sum_l phi_l(a) b_l.
class Graph {
 public:
  struct Cache {
    std::vector<Eigen::MatrixXd> inputs;
    std::vector<Eigen::MatrixXd> pre;
    std::vector<Eigen::MatrixXd> post;
    std::vector<Eigen::MatrixXd> basis_rows;  // empty for Dense layers
  };

  Graph() = default;
  // Registers "<name>.<i>.weight" / "<name>.<i>.bias" slices in `store`.
  Graph(GraphSpec spec, ParamStore& store);

  const GraphSpec& spec() const { return spec_; }

  // Fan-in scaled uniform init, U(-sqrt(6/fan_in), sqrt(6/fan_in)), zero biases.
  // Varying-coefficient blocks start dose-constant.
  void initialize(Eigen::VectorXd& params, Rng& rng) const;

  // X is batch x in_dim; `doses` must be given iff the graph has a varying layer.
  Eigen::MatrixXd forward(const Eigen::VectorXd& params, const Eigen::MatrixXd& X, const Eigen::VectorXd* doses,
                          Cache* cache = nullptr) const;

  // Accumulates d(loss)/d(params) into `grad` and returns d(loss)/d(X).
  Eigen::MatrixXd backward(const Eigen::VectorXd& params, const Cache& cache, const Eigen::MatrixXd& d_out,
                           Eigen::VectorXd& grad) const;

  // Weight matrix of a varying layer materialized at dose a (out x in).
  Eigen::MatrixXd varying_weight(const Eigen::VectorXd& params, std::size_t layer, double a) const;

 private:
  GraphSpec spec_;
  std::vector<Slice> weight_;
  std::vector<Slice> bias_;
  std::vector<Basis> bases_;  // one per layer; unused for Dense
};

// Single-sample forward pass.
Eigen::VectorXd forward(const Graph& graph, const ParamStore& params, const Eigen::VectorXd& x,
                        std::optional<double> a = std::nullopt);

// Scalar loss with optional gradient output (resized by the callee).
using LossFunction = std::function<double(const Eigen::VectorXd& params, Eigen::VectorXd* grad)>;

struct LossAndGrad {
  double value = 0.0;
  Eigen::VectorXd grad;
};

// Evaluates loss and gradient; NumericError if either is non-finite.
LossAndGrad loss_and_grad(const LossFunction& loss, const Eigen::VectorXd& params);

struct GradCheckReport {
  double max_rel_err = 0.0;
  Eigen::Index worst_coordinate = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  bool passed = true;
};

// Central differences on every coordinate. Relative error is
// |g - fd| / max(|g|, |fd|, 1e-4).
GradCheckReport grad_check(const LossFunction& loss, const Eigen::VectorXd& params, double step = 1e-5,
                           double tol = 1e-4);

enum class OptimizerKind { SGD, SGDMomentum, Adam };

std::string to_string(OptimizerKind kind);
OptimizerKind optimizer_from_string(const std::string& name);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Adam;
  double lr = 1e-3;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Optimizer {
 public:
  Optimizer(OptimizerConfig cfg, Eigen::Index size);

  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad);
  long steps() const { return t_; }
  const OptimizerConfig& config() const { return cfg_; }

 private:
  OptimizerConfig cfg_;
  Eigen::VectorXd m_;
  Eigen::VectorXd v_;
  long t_ = 0;
};

}  // namespace eftr
