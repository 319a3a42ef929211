#pragma once

// Experiment orchestration: splitting, training with early stopping, the
// MAE / AMSE metrics, replication tables, beta sweeps and rate studies.

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "eftr/dataset.hpp"
#include "eftr/dgp.hpp"
#include "eftr/estimators.hpp"
#include "eftr/model.hpp"
#include "eftr/netcore.hpp"
#include "eftr/objective.hpp"
#include "json.hpp"

namespace eftr {

struct TrainConfig {
  int epochs = 800;
  int patience = 50;
  double lr = 1e-3;
  int batch_size = 500;
  // Full-batch steps when the training set has at most this many rows.
  long full_batch_max = 2000;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double polish_tol = 1e-8;

  void validate() const;
};

struct RunConfig {
  static constexpr int kSchemaVersion = 1;

  DGPSpec dgp;
  ModelConfig model;
  LossConfig loss;
  TrainConfig train;
  long n = 10000;
  // Semi-synthetic only: covariate source (CSV path; empty = surrogate matrix).
  std::string covariates_path;
  std::array<double, 3> fractions{0.6, 0.2, 0.2};
  int replications = 5;
  std::uint64_t seed = 1;
  // eps basis size from the training-set size (interior knots adjusted).
  bool eps_kn_auto = true;
  // Continuous treatment: dose grid used to evaluate psi curves.
  int dose_grid_points = 101;

  void validate() const;
  // Defaults for a scenario: split fractions and the family-matched outcome activation.
  static RunConfig for_dgp(const DGPSpec& dgp);
};

struct Split {
  Dataset train;
  Dataset val;
  Dataset test;
};

Split split(const Dataset& data, const std::array<double, 3>& fractions, std::uint64_t seed);

struct EpochRecord {
  long epoch = 0;
  double train_loss = 0.0;
  double val_base_loss = 0.0;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  EpsPolishReport polish;
};

// Optimizes the total loss on `train`, monitors the base loss on `val`,
// restores the best validation parameters and polishes eps on `train`.
TrainedModel train(const RunConfig& run, const Dataset& train_set, const Dataset& val_set, std::uint64_t seed,
                   TrainLog* log = nullptr);

// Model configuration actually used for a training set of n rows.
ModelConfig resolved_model_config(const RunConfig& run, Eigen::Index n_train, Eigen::Index input_dim);

double mae_ate(double ate_estimate, double ate_oracle);
double amse_adcf(const std::vector<double>& psi_hat, const std::vector<double>& psi_true);

// psi evaluated on an equally spaced grid, linearly interpolated at `a`.
double interpolate_curve(const std::vector<double>& grid_values, double a);

struct ResultTable {
  std::string metric;
  std::vector<std::string> methods;
  std::vector<std::uint64_t> seeds;
  // values[m][r]: method m, replication r (NaN when the replication failed).
  std::vector<std::vector<double>> values;
  std::vector<std::string> failures;
  std::vector<double> mean;
  std::vector<double> stddev;
  double runtime_seconds = 0.0;
  std::string config_hash;

  void aggregate();
  nlohmann::json to_json() const;
  std::string to_text() const;
};

// Metric per method for one replication.
struct ReplicationResult {
  std::vector<std::string> methods;
  std::vector<double> values;
};

ReplicationResult run_replication(const RunConfig& run, int rep);
ResultTable replicate(const RunConfig& run);

// One table per beta, same methods as replicate(); identical data seeds across betas.
std::vector<ResultTable> beta_sweep(const RunConfig& run, const std::vector<double>& betas);

enum class RateEstimator { DrOracle, PluginCorruptedMu, DrCorruptedPi };
std::string to_string(RateEstimator e);
RateEstimator rate_estimator_from_string(const std::string& name);

struct RateRow {
  long n = 0;
  double mean_abs_error = 0.0;
  std::vector<double> errors;
};

struct RateReport {
  RateEstimator estimator = RateEstimator::DrOracle;
  std::vector<RateRow> rows;
  double slope = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  bool skipped = false;  // all errors at the Monte-Carlo floor
  double truth = 0.0;

  nlohmann::json to_json() const;
};

// log(mean |ATE^ - ATE|) regressed on log n; ATE by large-sample Monte Carlo.
RateReport rate_study(const RunConfig& run, const std::vector<long>& n_grid, int reps, RateEstimator estimator,
                      long n_truth = 1000000);

// Least-squares slope of y on x.
double ols_slope(const std::vector<double>& x, const std::vector<double>& y);

// Worker count: hardware concurrency capped by EF_TARGET_THREADS.
int worker_count();
// Runs body(i) for i in [0, count) over worker_count() threads.
void parallel_for(int count, const std::function<void(int)>& body);

// Data for a run's replication (synthetic draw, or semi-synthetic over covariates).
Dataset make_dataset(const RunConfig& run, std::uint64_t seed, DGPSpec* realized = nullptr);

}  // namespace eftr
