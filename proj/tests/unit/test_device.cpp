#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "bvforge/device.hpp"
#include "bvforge/error.hpp"

using namespace bvforge;

namespace {

GeometryOptions coarse_geometry() {
  GeometryOptions g;
  g.junction_spacing_um = 0.1;
  g.max_spacing_um = 2.0;
  g.grading = 1.3;
  g.limits = {0.1, 2.0, 1.45};
  return g;
}

}  // namespace

TEST_CASE("no rings leaves only the anode box and no ring tags") {
  const Structure s = build_structure({1.0, 1.0, 0.5, 0, 0.05}, coarse_geometry());
  CHECK(s.doping.ring_count == 0);
  CHECK(s.geometry.boxes.size() == 1);
  for (int tag : s.doping.region) CHECK(tag <= kAnodeTag);
}

TEST_CASE("ring boxes follow the spacing and width rule") {
  const DesignVector dv{1.5, 2.0, 0.4, 3, 0.05};
  const GeometryOptions g = coarse_geometry();
  const Structure s = build_structure(dv, g);
  REQUIRE(s.geometry.boxes.size() == 4);
  const double a = g.anode_half_width_um;
  for (int i = 1; i <= 3; ++i) {
    const auto& b = s.geometry.boxes[static_cast<std::size_t>(i)];
    CHECK(b.x0_um == doctest::Approx(a + i * dv.s_um + (i - 1) * dv.w_um));
    CHECK(b.x1_um == doctest::Approx(a + i * (dv.s_um + dv.w_um)));
    CHECK(b.depth_um == doctest::Approx(dv.d_um));
  }
  CHECK(s.doping.ring_count == 3);
}

TEST_CASE("acceptor roll-off three sigma outside a ring edge") {
  // Independent oracle: one-sided erf edge, N(x) = Npeak * erfc(x / (sigma sqrt 2)) / 2.
  const double oracle = 0.5 * std::erfc(3.0 / std::sqrt(2.0));
  CHECK(oracle == doctest::Approx(0.0013498980316301).epsilon(1e-12));
  const DesignVector dv{2.0, 2.0, 0.5, 1, 0.08};
  const Structure s = build_structure(dv, coarse_geometry());
  const auto& ring = s.geometry.boxes[1];
  const double y = 0.5 * dv.d_um;
  const double outside = acceptor_density(s.geometry, ring.x1_um + 3.0 * dv.sigma_um, y);
  CHECK(outside <= 0.012 * 1e19);
  CHECK(outside == doctest::Approx(oracle * 1e19).epsilon(0.05));
}

TEST_CASE("doping interpolation reproduces node values and the anode core") {
  const Structure s = build_structure({1.0, 1.0, 0.5, 2, 0.05}, coarse_geometry());
  const auto& g = s.geometry;
  for (std::size_t i = 0; i < g.nx(); i += 7) {
    for (std::size_t j = 0; j < g.ny(); j += 5) {
      CHECK(doping_at(s, g.x_um[i], g.y_um[j]) == s.doping.net[g.node(i, j)]);
    }
  }
  CHECK(doping_at(s, 0.0, 0.25) == doctest::Approx(1e16 - 1e19).epsilon(1e-4));
  CHECK_THROWS_AS(doping_at(s, -1.0, 0.0), Error);
}

TEST_CASE("structure build is deterministic") {
  const DesignVector dv{0.8, 1.7, 0.3, 4, 0.03};
  const Structure a = build_structure(dv, coarse_geometry());
  const Structure b = build_structure(dv, coarse_geometry());
  CHECK(a.geometry.x_um == b.geometry.x_um);
  CHECK(a.geometry.y_um == b.geometry.y_um);
  CHECK(a.doping.net == b.doping.net);
}

TEST_CASE("design validation names the violated field") {
  try {
    validate_design({0.1, 1.0, 0.5, 0, 0.05});
    FAIL("expected OutOfBounds");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::OutOfBounds);
    CHECK(std::string(e.what()).find("s_um") != std::string::npos);
  }
  CHECK_THROWS_AS(validate_design({1.0, 1.0, 0.5, 40, 0.05}), Error);
  CHECK_NOTHROW(validate_design({5.0, 0.25, 1.0, 32, 0.1}));
}

TEST_CASE("graded axis hits features and respects the spacing limits") {
  const auto x = graded_axis(0.0, 20.0, {5.0, 7.5}, {12.0}, 0.1, 2.0, 1.3);
  CHECK(x.front() == 0.0);
  CHECK(x.back() == 20.0);
  for (double f : {5.0, 7.5, 12.0}) CHECK(std::find(x.begin(), x.end(), f) != x.end());
  for (std::size_t i = 1; i < x.size(); ++i) {
    const double h = x[i] - x[i - 1];
    CHECK(h > 0.0);
    CHECK(h <= 2.0 * (1.0 + 1e-9));
  }
}

TEST_CASE("ideal 1D stack") {
  const Profile1D p = build_ideal_1d();
  CHECK(p.drift_thickness_um == 10.0);
  CHECK(p.net.front() == doctest::Approx(-1e19));
  bool has_drift = false;
  for (double v : p.net) has_drift = has_drift || v == doctest::Approx(1e16);
  CHECK(has_drift);
  const Structure s = extrude_1d(p);
  CHECK(s.geometry.nx() == 2);
  CHECK(s.geometry.ny() == p.y_um.size());
}
