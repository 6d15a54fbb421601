#include <doctest.h>

#include <cmath>
#include <vector>

#include "bvforge/device.hpp"
#include "bvforge/error.hpp"
#include "bvforge/field_solver.hpp"

using namespace bvforge;

namespace {

constexpr double kQ = 1.602176634e-19;
constexpr double kEps0 = 8.8541878128e-14;  // F/cm
constexpr double kKbOverQ = 8.617333262e-5;

GeometryOptions desk_geometry() {
  GeometryOptions g;
  g.junction_spacing_um = 0.1;
  g.max_spacing_um = 2.0;
  g.grading = 1.3;
  g.limits = {0.1, 2.0, 1.45};
  g.max_domain_width_um = 100.0;
  return g;
}

MaterialConfig calibrated() {
  MaterialConfig m;
  m.alpha_b = 32725000.0;
  return m;
}

// Least-squares slope of |E| against depth over the nodes of column 0 with y in [y0, y1].
double field_slope(const Structure& s, const FieldSolution& sol, double y0, double y1) {
  std::vector<double> x, y;
  for (std::size_t j = 0; j < s.geometry.ny(); ++j) {
    const double d = s.geometry.y_um[j];
    if (d < y0 || d > y1) continue;
    x.push_back(d * 1e-4);
    y.push_back(sol.field[s.geometry.node(0, j)]);
  }
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(x.size());
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxy / sxx;
}

}  // namespace

TEST_CASE("built-in potential across the 1D junction at zero bias") {
  const MaterialConfig m;
  const GeometryOptions g;
  const Structure s = extrude_1d(build_ideal_1d(g));
  const FieldSolution sol = solve_poisson(s, m, 0.0);
  const double vbi = kKbOverQ * m.temperature * std::log(g.peak_acceptor * g.drift_doping / (m.n_i * m.n_i));
  CHECK(vbi == doctest::Approx(3.24076720016714).epsilon(1e-9));
  const double drop = sol.potential[s.geometry.node(0, s.geometry.ny() - 1)] - sol.potential[s.geometry.node(0, 0)];
  CHECK(std::abs(drop) == doctest::Approx(vbi).epsilon(0.01));
}

TEST_CASE("depletion approximation closed form") {
  const MaterialConfig m;
  const Analytic1D a = analytic_1d(m, 1e16, 10.0, 100.0);
  const double slope = kQ * 1e16 / (m.eps_r * kEps0);
  CHECK(a.field_slope == doctest::Approx(slope).epsilon(1e-6));
  CHECK(a.depletion_um == doctest::Approx(std::sqrt(2.0 * 100.0 / slope) * 1e4).epsilon(1e-9));
  CHECK(a.depletion_um == doctest::Approx(3.1364).epsilon(1e-4));
  CHECK_FALSE(a.punch_through);
  // Punch-through branch: peak = V / t + slope t / 2 equals E_crit at the breakdown bias.
  const double t = 10e-4;
  const double bv = (m.e_crit - 0.5 * slope * t) * t;
  CHECK(bv == doctest::Approx(2283.42).epsilon(1e-5));
  CHECK(analytic_bias_for_peak(m, 1e16, 10.0, m.e_crit) == doctest::Approx(bv).epsilon(1e-9));
  CHECK(analytic_1d(m, 1e16, 10.0, bv).punch_through);
}

TEST_CASE("1D field slope in the depleted drift matches q N_D / eps") {
  const MaterialConfig m;
  const GeometryOptions g;
  const Structure s = extrude_1d(build_ideal_1d(g));
  PoissonSolver solver(s, m);
  FieldSolution sol = solver.solve(0.0);
  for (double v = 100.0; v <= 500.0; v += 100.0) sol = solver.solve(v, &sol);
  const Analytic1D a = analytic_1d(m, g.drift_doping, g.drift_thickness_um, 500.0);
  const double y0 = g.anode_depth_um + 1.0;
  const double y1 = g.anode_depth_um + a.depletion_um - 1.5;
  REQUIRE(y1 > y0 + 2.0);
  CHECK(-field_slope(s, sol, y0, y1) == doctest::Approx(a.field_slope).epsilon(0.01));
}

TEST_CASE("1D ramps: fast near the closed form, full below it with default coefficients") {
  const MaterialConfig m;
  const RampResult fast = ideal_1d_breakdown(m, BreakdownMode::Fast);
  REQUIRE(fast.bv_V);
  CHECK(*fast.bv_V == doctest::Approx(2283.42).epsilon(0.02));
  const RampResult full = ideal_1d_breakdown(m, BreakdownMode::Full);
  REQUIRE(full.bv_V);
  CHECK(*full.bv_V < *fast.bv_V);
}

TEST_CASE("calibrated coefficients reproduce the 1D anchor") {
  const RampResult full = ideal_1d_breakdown(calibrated(), BreakdownMode::Full, desk_geometry());
  REQUIRE(full.bv_V);
  CHECK(*full.bv_V == doctest::Approx(2100.0).epsilon(0.01));
}

TEST_CASE("ionization integral of a uniform field") {
  const MaterialConfig m;
  const double e = 2.5e6;
  const IonizationPath p = make_path({0, 0, 0, 0}, {0.0, 1.0, 2.5, 4.0}, {e, e, e, e});
  const double expect = m.alpha_a * std::exp(-m.alpha_b / e) * 4.0e-4;
  CHECK(ionization_integral(p, m) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("warm start does not change the converged state") {
  const Structure s = build_structure({1.0, 1.5, 0.5, 2, 0.05}, desk_geometry());
  const MaterialConfig m = calibrated();
  PoissonSolver solver(s, m);
  FieldSolution prev = solver.solve(0.0);
  for (double v = 50.0; v <= 200.0; v += 50.0) prev = solver.solve(v, &prev);
  const FieldSolution warm = solver.solve(250.0, &prev);
  PoissonSolver cold_solver(s, m);
  FieldSolution cold = cold_solver.solve(0.0);
  for (double v = 25.0; v <= 250.0; v += 25.0) cold = cold_solver.solve(v, &cold);
  double worst = 0.0;
  for (std::size_t k = 0; k < warm.potential.size(); ++k) {
    worst = std::max(worst, std::abs(warm.potential[k] - cold.potential[k]));
  }
  CHECK(worst < 1e-4);
  CHECK(warm.peak_field == doctest::Approx(cold.peak_field).epsilon(1e-5));
}

TEST_CASE("guard rings raise the full-mode breakdown voltage") {
  const MaterialConfig m = calibrated();
  const GeometryOptions g = desk_geometry();
  auto bv = [&](int n) {
    const RampResult r = ramp_breakdown(build_structure({1.0, 2.0, 0.8, n, 0.05}, g), m, BreakdownMode::Full);
    REQUIRE(r.bv_V);
    return *r.bv_V;
  };
  const double bare = bv(0);
  CHECK(std::max(bv(2), bv(4)) > bare);
}

TEST_CASE("full mode costs more than fast mode on the same structure") {
  const Structure s = build_structure({2.0, 3.0, 0.6, 3, 0.04}, desk_geometry());
  const MaterialConfig m = calibrated();
  const RampResult fast = ramp_breakdown(s, m, BreakdownMode::Fast);
  const RampResult full = ramp_breakdown(s, m, BreakdownMode::Full);
  CHECK(full.bias_steps > fast.bias_steps);
  CHECK(full.wall_s > fast.wall_s);
}

TEST_CASE("field export tables") {
  const Structure s = build_structure({1.0, 1.0, 0.5, 1, 0.05}, desk_geometry());
  PoissonSolver solver(s, calibrated());
  FieldSolution sol = solver.solve(0.0);
  sol = solver.solve(50.0, &sol);
  const FieldTables t = export_field(s, sol, 0.5);
  CHECK(t.grid.size() == s.geometry.node_count());
  CHECK(t.cut.size() == s.geometry.nx());
  CHECK(t.cut_y_um == doctest::Approx(0.5));
}

TEST_CASE("mode names round trip and reject junk") {
  CHECK(parse_mode(to_string(BreakdownMode::Fast)) == BreakdownMode::Fast);
  CHECK(parse_mode(to_string(BreakdownMode::Full)) == BreakdownMode::Full);
  CHECK_THROWS_AS(parse_mode("medium"), Error);
}
