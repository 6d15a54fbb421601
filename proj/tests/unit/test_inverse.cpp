#include <doctest.h>

#include <cmath>
#include <vector>

#include "bvforge/error.hpp"
#include "bvforge/inverse.hpp"
#include "bvforge/rng.hpp"

using namespace bvforge;

namespace {

double sphere(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return s;
}

double rastrigin(const std::vector<double>& x) {
  double s = 10.0 * static_cast<double>(x.size());
  for (double v : x) s += v * v - 10.0 * std::cos(2.0 * M_PI * v);
  return s;
}

DEConfig box(std::size_t dim, double lo, double hi) {
  DEConfig c;
  c.bounds.assign(dim, Interval{lo, hi});
  return c;
}

MlpModel toy_model() {
  // Untrained but fixed network over the design box: enough for round-trip properties.
  SplitMix64 r(4);
  std::vector<Features> x;
  std::vector<double> y;
  for (int i = 0; i < 50; ++i) {
    x.push_back({0.25 + 4.75 * r.uniform(), 0.25 + 4.75 * r.uniform(), 0.01 + 0.99 * r.uniform(),
                 std::floor(9.0 * r.uniform()), 0.01 + 0.09 * r.uniform()});
    y.push_back(600.0 + 300.0 * r.uniform());
  }
  const Dataset d = make_dataset(x, y);
  TrainConfig c;
  c.hidden = {8, 8};
  return init_model(d.stats, c, 21);
}

}  // namespace

TEST_CASE("sphere converges below 1e-6") {
  DEConfig c = box(5, -5.0, 5.0);
  c.population = 50;
  c.max_generations = 200;
  c.tolerance = 0.0;
  const DEResult r = differential_evolution(Objective(sphere), c);
  CHECK(r.best_value < 1e-6);
  CHECK(r.generations <= 200);
}

TEST_CASE("rastrigin matches a dense grid search") {
  // Oracle: exhaustive 0.001 grid; the global minimum is 0 at the origin.
  double grid_best = INFINITY;
  for (int i = -5120; i <= 5120; i += 4) {
    for (int j = -5120; j <= 5120; j += 4) {
      grid_best = std::min(grid_best, rastrigin({i * 1e-3, j * 1e-3}));
    }
  }
  CHECK(grid_best == doctest::Approx(0.0).epsilon(1e-12));
  DEConfig c = box(2, -5.12, 5.12);
  c.population = 40;
  c.max_generations = 300;
  c.seed = 3;
  const DEResult r = differential_evolution(Objective(rastrigin), c);
  CHECK(std::abs(r.best_value - grid_best) < 1e-3);
}

TEST_CASE("every evaluated point respects bounds and integrality") {
  DEConfig c = box(3, -2.0, 3.0);
  c.bounds[1] = {0.0, 8.0};
  c.integer_mask = {false, true, false};
  c.max_generations = 40;
  std::size_t seen = 0;
  bool ok = true;
  const DEResult r = differential_evolution(
      Objective([](const std::vector<double>& x) { return std::abs(x[0] - 1.3) + std::abs(x[1] - 4.6) + x[2] * x[2]; }),
      c, [&](const std::vector<double>& x) {
        ++seen;
        for (std::size_t d = 0; d < 3; ++d) ok = ok && x[d] >= c.bounds[d].lo && x[d] <= c.bounds[d].hi;
        ok = ok && x[1] == std::floor(x[1]);
      });
  CHECK(ok);
  CHECK(seen == r.evaluations);
  CHECK(r.best[1] == 5.0);
}

TEST_CASE("best objective never increases across generations") {
  DEConfig c = box(4, -5.0, 5.0);
  c.max_generations = 80;
  const DEResult r = differential_evolution(Objective(rastrigin), c);
  REQUIRE(r.best_trace.size() == static_cast<std::size_t>(r.generations) + 1);
  for (std::size_t g = 1; g < r.best_trace.size(); ++g) CHECK(r.best_trace[g] <= r.best_trace[g - 1]);
}

TEST_CASE("fixed seed gives identical runs, batch or scalar") {
  DEConfig c = box(3, -5.0, 5.0);
  c.max_generations = 50;
  const DEResult a = differential_evolution(Objective(rastrigin), c);
  const DEResult b = differential_evolution(
      BatchObjective([](const std::vector<std::vector<double>>& pts) {
        std::vector<double> v;
        for (auto it = pts.rbegin(); it != pts.rend(); ++it) v.insert(v.begin(), rastrigin(*it));
        return v;
      }),
      c);
  CHECK(a.best == b.best);
  CHECK(a.best_trace == b.best_trace);
}

TEST_CASE("configuration validation") {
  DEConfig c = box(2, -1.0, 1.0);
  c.f = 0.0;
  CHECK_THROWS_AS(c.validate(), Error);
  c.f = 2.5;
  CHECK_THROWS_AS(c.validate(), Error);
  c.f = 0.8;
  c.cr = 1.2;
  CHECK_THROWS_AS(c.validate(), Error);
  c.cr = 0.9;
  c.population = 3;
  CHECK_THROWS_AS(c.validate(), Error);
  c.population = 4;
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("non-finite objective names the point") {
  DEConfig c = box(2, -1.0, 1.0);
  try {
    differential_evolution(Objective([](const std::vector<double>&) { return NAN; }), c);
    FAIL("expected NonFiniteObjective");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NonFiniteObjective);
    CHECK(std::string(e.what()).find('(') != std::string::npos);
  }
}

TEST_CASE("inverse design on a fixed surrogate") {
  const MlpModel m = toy_model();
  const DesignBounds b{{0.25, 5.0}, {0.25, 5.0}, {0.01, 1.0}, 0, 8, {0.01, 0.1}};
  const DesignVector x0{1.2, 2.4, 0.6, 3, 0.05};
  const double target = predict(m, x0);
  DEConfig c;
  c.max_generations = 120;
  const InverseDesignResult r = inverse_design(m, target, c, b);
  CHECK(r.surrogate_bv == predict(m, r.design));
  CHECK(r.objective_residual == std::abs(r.surrogate_bv - target));
  CHECK(r.objective_residual <= 1e-3 * std::max(1.0, target));
  CHECK_NOTHROW(validate_design(r.design, b));
  CHECK(r == inverse_design(m, target, c, b));
  CHECK_THROWS_AS(inverse_design(m, -5.0, c, b), Error);
}

TEST_CASE("zero-residual fit makes the expected range a point") {
  const LinearFit f = fit_linear({1, 2, 3, 4}, {2, 4, 6, 8});
  const Interval band = prediction_interval(f, 500.0, 0.95);
  CHECK(band.lo == band.hi);
  CHECK(band.lo == doctest::Approx(1000.0));
}
