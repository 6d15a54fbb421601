#include <doctest.h>

#include <Eigen/Dense>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <vector>

#include "bvforge/calibration.hpp"
#include "bvforge/error.hpp"
#include "bvforge/rng.hpp"

using namespace bvforge;

namespace {

// Normal-equations OLS and textbook interval, used as the reference.
struct Oracle {
  double slope, intercept, s;
  double xbar, sxx;
  std::size_t n;
};

Oracle oracle_fit(const std::vector<double>& x, const std::vector<double>& y) {
  const auto n = static_cast<Eigen::Index>(x.size());
  Eigen::MatrixXd a(n, 2);
  Eigen::VectorXd b(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    a(i, 0) = 1.0;
    a(i, 1) = x[static_cast<std::size_t>(i)];
    b(i) = y[static_cast<std::size_t>(i)];
  }
  const Eigen::Vector2d beta = (a.transpose() * a).ldlt().solve(a.transpose() * b);
  const double ss = (b - a * beta).squaredNorm();
  const double xbar = a.col(1).mean();
  return {beta(1), beta(0), std::sqrt(ss / static_cast<double>(n - 2)), xbar,
          (a.col(1).array() - xbar).square().sum(), x.size()};
}

std::pair<double, double> oracle_interval(const Oracle& o, double x, double level) {
  boost::math::students_t dist(static_cast<double>(o.n) - 2.0);
  const double t = boost::math::quantile(dist, 0.5 * (1.0 + level));
  const double half = t * o.s * std::sqrt(1.0 + 1.0 / static_cast<double>(o.n) + (x - o.xbar) * (x - o.xbar) / o.sxx);
  const double y = o.intercept + o.slope * x;
  return {y - half, y + half};
}

void synthetic(std::size_t n, std::uint64_t seed, std::vector<double>& x, std::vector<double>& y) {
  SplitMix64 r(seed);
  x.clear();
  y.clear();
  for (std::size_t i = 0; i < n; ++i) {
    x.push_back(300.0 + 900.0 * r.uniform());
    y.push_back(1.5893 * x.back() - 40.0 + 35.0 * r.normal());
  }
}

}  // namespace

TEST_CASE("OLS fit agrees with the normal equations") {
  std::vector<double> x, y;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    synthetic(40 + seed * 17, seed, x, y);
    const LinearFit f = fit_linear(x, y);
    const Oracle o = oracle_fit(x, y);
    CHECK(f.slope == doctest::Approx(o.slope).epsilon(1e-10));
    CHECK(f.intercept == doctest::Approx(o.intercept).epsilon(1e-10));
    CHECK(f.resid_std == doctest::Approx(o.s).epsilon(1e-10));
    CHECK(f.x_mean == doctest::Approx(o.xbar).epsilon(1e-12));
    CHECK(f.s_xx == doctest::Approx(o.sxx).epsilon(1e-10));
  }
}

TEST_CASE("collinear fixture recovers the slope exactly") {
  std::vector<double> x{350, 500, 640, 812, 990, 1100}, y;
  for (double v : x) y.push_back(1.5893 * v + 12.5);
  const LinearFit f = fit_linear(x, y);
  CHECK(f.slope == doctest::Approx(1.5893).epsilon(1e-12));
  CHECK(f.resid_std == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("fit rejects degenerate x") {
  CHECK_THROWS_AS(fit_linear({1.0, 1.0, 1.0}, {1.0, 2.0, 3.0}), Error);
  CHECK_THROWS_AS(fit_linear({1.0}, {1.0}), Error);
}

TEST_CASE("student t quantiles agree with Boost") {
  for (double dof : {1.0, 2.0, 3.0, 5.0, 10.0, 28.0, 98.0, 298.0, 5000.0}) {
    boost::math::students_t dist(dof);
    for (double p : {0.5, 0.6, 0.9, 0.95, 0.975, 0.995, 0.025, 0.001}) {
      const double want = boost::math::quantile(dist, p);
      CHECK(student_t_quantile(p, dof) == doctest::Approx(want).epsilon(1e-9));
      CHECK(student_t_cdf(want, dof) == doctest::Approx(p).epsilon(1e-10));
    }
  }
  // Frozen reference values.
  CHECK(student_t_quantile(0.975, 10.0) == doctest::Approx(2.2281388519649).epsilon(1e-11));
  CHECK(student_t_quantile(0.975, 298.0) == doctest::Approx(1.9679565064965).epsilon(1e-11));
}

TEST_CASE("prediction interval agrees with the textbook formula") {
  std::vector<double> x, y;
  synthetic(60, 9, x, y);
  const LinearFit f = fit_linear(x, y);
  const Oracle o = oracle_fit(x, y);
  for (double xq : {200.0, 650.0, 812.0, 1400.0}) {
    for (double level : {0.9, 0.95, 0.99}) {
      const Interval got = prediction_interval(f, xq, level);
      const auto [lo, hi] = oracle_interval(o, xq, level);
      CHECK(std::abs(got.lo - lo) <= 1e-8 * std::abs(lo));
      CHECK(std::abs(got.hi - hi) <= 1e-8 * std::abs(hi));
    }
  }
}

TEST_CASE("prediction interval widens away from the mean and with level") {
  std::vector<double> x, y;
  synthetic(50, 4, x, y);
  const LinearFit f = fit_linear(x, y);
  const Interval mid = prediction_interval(f, f.x_mean, 0.95);
  const Interval far = prediction_interval(f, f.x_mean + 500.0, 0.95);
  CHECK(far.width() > mid.width());
  CHECK(prediction_interval(f, f.x_mean, 0.99).width() > mid.width());
  CHECK_THROWS_AS(prediction_interval(fit_linear({1, 2}, {1, 2}), 1.0, 0.95), Error);
}

TEST_CASE("zero-residual fit gives a degenerate interval") {
  const LinearFit f = fit_linear({1, 2, 3, 4}, {3, 5, 7, 9});
  const Interval i = prediction_interval(f, 10.0, 0.95);
  CHECK(i.lo == doctest::Approx(21.0));
  CHECK(i.hi == doctest::Approx(21.0));
}

TEST_CASE("interval coverage on data drawn from the fitted noise model") {
  SplitMix64 r(77);
  const int trials = 10000;
  int inside = 0;
  for (int t = 0; t < trials; ++t) {
    std::vector<double> x, y;
    for (int i = 0; i < 20; ++i) {
      x.push_back(r.uniform() * 10.0);
      y.push_back(2.0 * x.back() + 1.0 + r.normal());
    }
    const LinearFit f = fit_linear(x, y);
    const double xq = r.uniform() * 10.0;
    const double yq = 2.0 * xq + 1.0 + r.normal();
    const Interval band = prediction_interval(f, xq, 0.95);
    inside += (yq >= band.lo && yq <= band.hi) ? 1 : 0;
  }
  const double cover = static_cast<double>(inside) / trials;
  CHECK(cover >= 0.92);
  CHECK(cover <= 0.98);
}

TEST_CASE("screening threshold is the smallest qualifying fast BV") {
  std::vector<double> x, y;
  synthetic(80, 12, x, y);
  const LinearFit f = fit_linear(x, y);
  const double thr = screening_threshold(f, 1400.0, 0.95, 300.0, 1200.0);
  CHECK(prediction_interval(f, thr, 0.95).hi == doctest::Approx(1400.0).epsilon(1e-9));
  CHECK(prediction_interval(f, thr - 1.0, 0.95).hi < 1400.0);
  CHECK_THROWS_AS(screening_threshold(f, 5000.0, 0.95, 300.0, 1200.0), Error);
  CHECK(screening_threshold(f, 0.0, 0.95, 300.0, 1200.0) == 300.0);
}

TEST_CASE("screening report counts and baseline") {
  auto rec = [](std::size_t id, BreakdownMode m, double bv) {
    BreakdownRecord r;
    r.id = id;
    r.mode = m;
    r.bv_V = bv;
    r.converged = true;
    return r;
  };
  std::vector<BreakdownRecord> rs;
  const double fast[] = {400, 500, 600, 700, 800, 900};
  const double full[] = {620, 800, 950, 1100, 1300, 1450};
  for (std::size_t i = 0; i < 6; ++i) {
    rs.push_back(rec(i, BreakdownMode::Fast, fast[i]));
    rs.push_back(rec(i, BreakdownMode::Full, full[i]));
  }
  const auto pairs = pair_records(rs, true);
  const LinearFit f = fit_linear({400, 500, 600, 700, 800, 900}, {620, 800, 950, 1100, 1300, 1450});
  const ScreeningReport rep = screening_report(pairs, {1250.0}, f, 0.95);
  REQUIRE(rep.rows.size() == 1);
  const auto& row = rep.rows[0];
  std::size_t space = 0, verified = 0;
  for (std::size_t i = 0; i < 6; ++i) {
    if (fast[i] >= row.threshold) {
      ++space;
      verified += full[i] >= 1250.0 ? 1 : 0;
    }
  }
  CHECK(row.fast_search_space_count == space);
  CHECK(row.verified_high_count == verified);
  CHECK(row.full_only_count == doctest::Approx(2.0 / 6.0 * static_cast<double>(space)));

  rs.pop_back();
  CHECK_THROWS_AS(pair_records(rs, true), Error);
  CHECK_THROWS_AS(screening_report(pair_records(rs, false), {1250.0}, f, 0.95), Error);
}
