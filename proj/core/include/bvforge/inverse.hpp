#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "bvforge/calibration.hpp"
#include "bvforge/device.hpp"
#include "bvforge/surrogate.hpp"
#include "bvforge/sweep.hpp"

namespace bvforge {

struct DEConfig {
  int population = 75;  // 15 per design variable
  double f = 0.8;
  double cr = 0.9;
  int max_generations = 300;
  // Stop once std(population objective) <= tolerance * |mean|.
  double tolerance = 1e-3;
  std::uint64_t seed = 7;
  std::vector<Interval> bounds;
  std::vector<bool> integer_mask;  // empty means all continuous

  /// Throws InvalidArgument on F outside (0, 2], CR outside [0, 1], population < 4,
  /// empty or inverted bounds, or a mask of the wrong length.
  void validate() const;
  bool operator==(const DEConfig&) const = default;
};

/// Evaluates a whole generation at once; must return one value per point.
using BatchObjective = std::function<std::vector<double>(const std::vector<std::vector<double>>&)>;
using Objective = std::function<double(const std::vector<double>&)>;

struct DEResult {
  std::vector<double> best;
  double best_value = 0.0;
  int generations = 0;
  std::size_t evaluations = 0;
  bool converged = false;             // stopped on the spread test
  std::vector<double> best_trace;     // best value after initialisation and each generation
};

/// rand/1/bin with clipping, integer rounding before evaluation and greedy
/// selection (ties go to the trial). Randomness is keyed by (seed, generation,
/// slot) so batch evaluation order cannot change the result.
/// `observer` sees every point handed to the objective. Throws NonFiniteObjective.
DEResult differential_evolution(const BatchObjective& objective, const DEConfig& cfg,
                                const std::function<void(const std::vector<double>&)>& observer = {});
DEResult differential_evolution(const Objective& objective, const DEConfig& cfg,
                                const std::function<void(const std::vector<double>&)>& observer = {});

/// DE settings for design search: `cfg.bounds` and mask are replaced by the design box with N integral.
DEConfig design_de_config(DEConfig cfg, const DesignBounds& bounds);

struct InverseDesignResult {
  DesignVector design{};
  double surrogate_bv = 0.0;
  double objective_residual = 0.0;
  int generations_used = 0;
  double v_target = 0.0;
  std::size_t evaluations = 0;
  bool converged = false;
  bool operator==(const InverseDesignResult&) const = default;
};

/// Minimises |predict(model, x) - v_target| over the design box.
InverseDesignResult inverse_design(const MlpModel& model, double v_target, const DEConfig& cfg,
                                   const DesignBounds& bounds);

struct VerificationRecord {
  DesignVector design{};
  double v_target = 0.0;
  double surrogate_bv = 0.0;
  std::optional<double> full_bv;
  double expected_lo = 0.0;
  double expected_hi = 0.0;
  bool in_expected_range = false;
  bool verified = false;  // the full ramp converged to a breakdown
  double wall_s = 0.0;
  bool operator==(const VerificationRecord&) const = default;
};

/// Full-mode ramp on the designed structure, checked against the prediction
/// interval of `fit` at the target.
VerificationRecord verify_design(const InverseDesignResult& result, const LinearFit& fit,
                                 const SimulationSetup& setup, double level = 0.95);

}  // namespace bvforge
