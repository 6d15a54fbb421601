#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "bvforge/device.hpp"
#include "bvforge/field_solver.hpp"

namespace bvforge {

/// Ordinary least-squares line y = slope * x + intercept with the sufficient
/// statistics needed for prediction intervals.
struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  std::size_t n = 0;
  double x_mean = 0.0;
  double s_xx = 0.0;       // sum (x - x_mean)^2
  double resid_std = 0.0;  // sqrt(SS_res / (n - 2)); 0 when n == 2

  double predict(double x) const { return slope * x + intercept; }
  bool operator==(const LinearFit&) const = default;
};

/// Throws DegenerateX when fewer than two distinct x values are given.
LinearFit fit_linear(const std::vector<double>& x, const std::vector<double>& y);

/// Regularized incomplete beta I_x(a, b).
double incomplete_beta(double a, double b, double x);
double student_t_cdf(double t, double dof);
/// Inverts student_t_cdf by bisection to 1e-10 in t.
double student_t_quantile(double p, double dof);

/// Two-sided prediction interval for a single new observation at x.
/// Throws InsufficientPoints when n < 3.
Interval prediction_interval(const LinearFit& fit, double x, double level);

/// Smallest fast-model BV in [x_lo, x_hi] whose upper prediction bound
/// reaches `high_bv`. Throws NotReachable if none does.
double screening_threshold(const LinearFit& fit, double high_bv, double level, double x_lo, double x_hi);

struct ScreeningRow {
  double high_bv = 0.0;
  double threshold = 0.0;                 // fast-model V; NaN when unreachable
  std::size_t fast_search_space_count = 0;
  std::size_t verified_high_count = 0;
  double full_only_count = 0.0;           // expected highs from as many random full solves
  double gain_ratio = 0.0;                // verified / full_only; 0 when the baseline is 0
};

struct ScreeningReport {
  double level = 0.95;
  std::size_t campaign_size = 0;
  std::vector<ScreeningRow> rows;
};

/// Fast and full results for one design id.
struct PairedRecord {
  std::size_t id = 0;
  std::optional<BreakdownRecord> fast;
  std::optional<BreakdownRecord> full;
};

/// Groups records by id, ordered by id. With `require_both`, throws MissingPair
/// when an id lacks either mode.
std::vector<PairedRecord> pair_records(const std::vector<BreakdownRecord>& records, bool require_both);

/// Per definition: fast records whose BV is at or above the threshold form the
/// search space; verified counts those whose full BV reaches the definition.
/// The baseline is the high fraction of all full results times the search
/// space. Throws MissingVerification when a screened design has no full run.
ScreeningReport screening_report(const std::vector<PairedRecord>& records, const std::vector<double>& defs,
                                 const LinearFit& fit, double level);

void write_screening_csv(const ScreeningReport& report, const std::string& path);

}  // namespace bvforge
