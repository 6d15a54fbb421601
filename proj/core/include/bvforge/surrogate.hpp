#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "bvforge/device.hpp"
#include "bvforge/field_solver.hpp"

namespace bvforge {

using Features = std::array<double, kDesignDims>;

struct NormStats {
  Features feature_mean{};
  Features feature_std{};
  double target_mean = 0.0;
  double target_std = 1.0;
  bool operator==(const NormStats&) const = default;
};

/// Raw features (S, W, D, N, sigma) and fast-model BV with z-score statistics.
struct Dataset {
  std::vector<Features> x;
  std::vector<double> y;
  std::vector<std::size_t> ids;
  NormStats stats{};
  std::size_t dropped = 0;  // non-converged or non-fast records skipped

  std::size_t size() const { return y.size(); }
};

/// Computes statistics; throws ConstantFeature / ZeroVariance on degenerate columns.
Dataset make_dataset(std::vector<Features> x, std::vector<double> y, std::vector<std::size_t> ids = {});
/// Converged fast-mode records only. Throws TooFewSamples below `min_rows`.
Dataset normalize_dataset(const std::vector<BreakdownRecord>& records, std::size_t min_rows = 20);
/// Rows by index, with statistics recomputed on the subset.
Dataset subset(const Dataset& d, const std::vector<std::size_t>& rows);

Features normalize_features(const NormStats& s, const Features& raw);
Features denormalize_features(const NormStats& s, const Features& z);

struct TrainConfig {
  std::vector<int> hidden{50, 50};
  int max_epochs = 1000;
  int batch = 64;
  double learning_rate = 2e-3;
  double lambda = 1e-4;
  std::vector<double> lambda_grid{1e-5, 1e-4, 1e-3};
  int lambda_folds = 5;
  std::uint64_t seed = 1;
  double val_fraction = 0.1;
  int patience = 100;
  double bn_momentum = 0.9;
  double bn_epsilon = 1e-5;
  int folds = 10;
  int repeats = 3;
  double test_fraction = 0.2;
  bool operator==(const TrainConfig&) const = default;
};

/// Affine -> batch norm -> ReLU hidden layers and a linear output, all on
/// z-scored inputs and target.
struct MlpModel {
  std::vector<int> layer_sizes;               // e.g. {5, 50, 50, 1}
  std::vector<std::vector<double>> weights;   // per layer, row-major (out x in)
  std::vector<std::vector<double>> biases;    // per layer
  std::vector<std::vector<double>> bn_scale;  // per hidden layer
  std::vector<std::vector<double>> bn_shift;
  std::vector<std::vector<double>> run_mean;
  std::vector<std::vector<double>> run_var;
  double lambda = 0.0;
  NormStats norm{};
  TrainConfig train_config{};
  std::uint64_t seed = 0;
  int epochs_run = 0;
  double best_val_loss = 0.0;

  bool operator==(const MlpModel&) const = default;
};

/// He-initialised weights, unit BN scale, zero shifts and running mean, unit running variance.
MlpModel init_model(const NormStats& norm, const TrainConfig& cfg, std::uint64_t seed);

/// Adam on MSE + lambda * sum(w^2) with early stopping on a validation slice.
/// Throws NonFiniteLoss.
MlpModel train(const Dataset& data, const TrainConfig& cfg);

/// Inference-mode prediction in volts.
double predict(const MlpModel& model, const DesignVector& dv);
double predict(const MlpModel& model, const Features& raw);
std::vector<double> predict_batch(const MlpModel& model, const std::vector<Features>& raw);

struct SurrogatePrediction {
  double bv_V = 0.0;
  bool extrapolation = false;  // design outside the bounds box
};
SurrogatePrediction predict_checked(const MlpModel& model, const DesignVector& dv, const DesignBounds& bounds);

/// 1 - SS_res / SS_tot. Throws ZeroVariance / InvalidArgument.
double r2(const std::vector<double>& predictions, const std::vector<double>& actuals);

/// Training-mode loss (batch statistics) on normalized rows, and its gradient
/// flattened in the order of `flatten_parameters`.
double batch_loss(const MlpModel& model, const std::vector<Features>& z, const std::vector<double>& t,
                  std::vector<double>* gradient);
std::vector<double> flatten_parameters(const MlpModel& model);
void unflatten_parameters(MlpModel& model, const std::vector<double>& p);

/// Max relative error between analytic and central-difference gradients
/// (step h on the normalized scale) over `samples` random parameters.
double grad_check(const MlpModel& model, const std::vector<Features>& z, const std::vector<double>& t,
                  std::size_t samples = 200, double h = 1e-5, std::uint64_t seed = 11);

struct CVReport {
  std::vector<double> scores;  // folds x repeats
  double mean = 0.0;
  double std = 0.0;
  double test_r2 = 0.0;        // single train/test split
  double lambda = 0.0;
};

/// Repeated shuffled k-fold plus a final train/test split. Throws TooFewSamples.
CVReport cross_validate(const Dataset& data, const TrainConfig& cfg);

/// Lambda from the grid with the best mean k-fold R^2 (ties keep the earlier entry).
double select_lambda(const Dataset& data, const TrainConfig& cfg);

/// Held-out R^2 from one seeded train/test split.
struct HoldoutResult {
  MlpModel model;
  double r2 = 0.0;
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> test_rows;
};
HoldoutResult holdout_score(const Dataset& data, const TrainConfig& cfg);

/// Seeded permutation of 0..n-1 (Fisher-Yates on SplitMix64).
std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed);

}  // namespace bvforge
