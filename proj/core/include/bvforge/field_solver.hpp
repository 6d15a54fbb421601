#pragma once

#include <chrono>
#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "bvforge/device.hpp"

namespace bvforge {

/// Converged electrostatic state at one reverse bias.
struct FieldSolution {
  double bias = 0.0;               // reverse bias, V
  std::vector<double> potential;   // V, per node (column-major like DeviceGeometry)
  std::vector<double> field;       // |E|, V/cm, per node
  std::vector<double> ring_levels; // hole quasi-Fermi level of each floating p-region, V (ordered by x)
  double peak_field = 0.0;
  std::size_t peak_node = 0;
  int newton_iterations = 0;
};

struct SolverOptions {
  double update_tolerance_V = 1e-6;
  // A floating-ring barrier node is re-selected when the barrier top moves by more than this.
  double level_tolerance_V = 1e-4;
  int max_newton_iterations = 80;
  int max_line_search_halvings = 8;
  // Exponent clamp for the Boltzmann factors; keeps trial iterates finite.
  double max_exponent = 100.0;
  // Hole density at the barrier top (1/cm^3) above which a floating ring
  // discharges into its inner neighbour.
  double punch_through_density = 1e10;
};

enum class BreakdownMode { Fast, Full };

std::string to_string(BreakdownMode mode);
BreakdownMode parse_mode(const std::string& text);

/// Owns the discretisation and factorisation workspace for one structure.
/// Not shareable across threads; build one per worker.
class PoissonSolver {
 public:
  PoissonSolver(const Structure& structure, const MaterialConfig& mat, SolverOptions opts = {});
  ~PoissonSolver();
  PoissonSolver(PoissonSolver&&) noexcept;
  PoissonSolver& operator=(PoissonSolver&&) noexcept;

  /// Damped Newton solve at `bias` (reverse, >= 0). Throws NewtonDiverged.
  FieldSolution solve(double bias, const FieldSolution* warm_start = nullptr);

  /// Initial guess from local charge neutrality (no previous solution).
  FieldSolution neutral_guess(double bias) const;

  const Structure& structure() const;
  const MaterialConfig& material() const;
  /// Number of floating p-regions (guard rings not merged with the anode).
  std::size_t floating_region_count() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

FieldSolution solve_poisson(const Structure& structure, const MaterialConfig& mat, double bias,
                            const FieldSolution* warm_start = nullptr);

/// Vertical (or general) sampling path for the ionization integral.
struct IonizationPath {
  std::vector<double> x_um;
  std::vector<double> y_um;
  std::vector<double> arc_um;  // cumulative arc length, strictly increasing
  std::vector<double> field;   // |E| in V/cm at each point
};

IonizationPath make_path(std::vector<double> x_um, std::vector<double> y_um, std::vector<double> field);

/// Trapezoidal integral of a*exp(-b/|E|) along the path. Dimensionless.
double ionization_integral(const IonizationPath& path, const MaterialConfig& mat);

/// Probe columns used by the full criterion: the anode centre, each ring centre
/// and the column through the peak-field node.
std::vector<std::size_t> probe_columns(const Structure& structure, const FieldSolution& solution);
IonizationPath column_path(const Structure& structure, const FieldSolution& solution, std::size_t column);
double max_ionization_integral(const Structure& structure, const FieldSolution& solution,
                               const MaterialConfig& mat);

struct RampOptions {
  double initial_step_V = 5.0;
  double growth = 1.5;
  double max_step_V = 50.0;
  double backoff = 0.5;
  double min_step_V = 0.1;
  double max_bias_V = 5000.0;
  // Full mode also limits each step so the ionization integral, extrapolated
  // log-linearly from the last two steps, rises by at most this much.
  double max_integral_rise = 0.02;
  bool warm_start = true;
  bool operator==(const RampOptions&) const = default;
};

struct BreakdownRecord {
  std::size_t id = 0;
  DesignVector design{};
  BreakdownMode mode = BreakdownMode::Fast;
  std::optional<double> bv_V;
  bool converged = false;
  double wall_s = 0.0;
  int bias_steps = 0;
  std::string config_hash;
};

/// Outcome of a bias ramp. `bv_V` is set iff the criterion fired.
struct RampResult {
  std::optional<double> bv_V;
  bool converged = false;
  double wall_s = 0.0;
  int bias_steps = 0;
  double last_bias_V = 0.0;
  std::optional<FieldSolution> last_solution;  // solution at the last converged step below breakdown
};

RampResult ramp_breakdown(const Structure& structure, const MaterialConfig& mat, BreakdownMode mode,
                          const RampOptions& ramp = {}, const SolverOptions& solver = {});

/// Depletion-approximation reference for an abrupt one-sided p+/n junction.
struct Analytic1D {
  double depletion_um = 0.0;  // extent into the drift, capped at the drift width
  double peak_field = 0.0;    // V/cm
  bool punch_through = false;
  double field_slope = 0.0;   // q N_D / eps, V/cm per cm
  double drift_um = 0.0;

  /// Field at distance `y_um` below the junction.
  double field_at(double y_um) const;
};

Analytic1D analytic_1d(const MaterialConfig& mat, double n_d, double drift_um, double bias);
/// Bias at which the analytic peak field reaches `peak_field` (handles both branches).
double analytic_bias_for_peak(const MaterialConfig& mat, double n_d, double drift_um, double peak_field);

/// Ideal 1D structure breakdown for the given material and geometry defaults.
RampResult ideal_1d_breakdown(const MaterialConfig& mat, BreakdownMode mode, const GeometryOptions& geom = {},
                              const RampOptions& ramp = {});

struct CalibrationOptions {
  double relative_tolerance = 0.005;
  int max_bisections = 60;
  double bracket_factor = 1.25;
  int max_bracket_expansions = 40;
};

/// Bisects alpha_b (alpha_a fixed) until the full-mode 1D breakdown hits `target_bv`.
MaterialConfig calibrate_alpha(const MaterialConfig& mat, double target_bv, const GeometryOptions& geom = {},
                               const RampOptions& ramp = {}, const CalibrationOptions& opts = {});

struct FieldTables {
  struct Node {
    double x_um, y_um, field;
  };
  struct Cut {
    double x_um, field;
  };
  std::vector<Node> grid;
  std::vector<Cut> cut;
  double cut_y_um = 0.0;
};

/// Node-wise |E| plus a horizontal cut at the grid row nearest `cut_y_um`.
FieldTables export_field(const Structure& structure, const FieldSolution& solution, double cut_y_um);
void write_field_csv(const FieldTables& tables, const std::string& grid_path, const std::string& cut_path);

}  // namespace bvforge
