#include "bvforge/device.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "bvforge/error.hpp"

namespace bvforge {
namespace {

constexpr double kBoltzmannOverQ = 8.617333262e-5;  // V/K
constexpr double kVacuumPermittivity = 8.8541878128e-14;  // F/cm

std::string range_text(double lo, double hi) {
  std::ostringstream os;
  os << "[" << lo << ", " << hi << "]";
  return os.str();
}

void require_in(const char* field, double value, const Interval& r) {
  if (!(value >= r.lo && value <= r.hi)) {
    std::ostringstream os;
    os << "OutOfBounds(" << field << ", " << value << ", " << range_text(r.lo, r.hi) << ")";
    fail(ErrorKind::OutOfBounds, os.str());
  }
}

// Fraction of a box [x0, x1] seen at x after Gaussian smoothing.
double lateral_rolloff(double x, double x0, double x1, double sigma) {
  const double k = 1.0 / (std::numbers::sqrt2 * sigma);
  return 0.5 * (std::erf((x - x0) * k) - std::erf((x - x1) * k));
}

// Bottom edge rolls off, the top surface is abrupt.
double depth_rolloff(double y, double depth, double sigma) {
  if (y < 0.0) return 0.0;
  return 0.5 * std::erfc((y - depth) / (std::numbers::sqrt2 * sigma));
}

double box_acceptor(const AcceptorBox& b, double x, double y, double sigma) {
  return lateral_rolloff(x, b.x0_um, b.x1_um, sigma) * depth_rolloff(y, b.depth_um, sigma);
}

void check_axis(const std::vector<double>& axis, const std::vector<double>& junctions,
                const SpacingLimits& limits, const char* name) {
  auto too_coarse = [&](const std::string& why) {
    fail(ErrorKind::GridTooCoarse, std::string("GridTooCoarse(") + name + "): " + why);
  };
  if (axis.size() < 2) too_coarse("fewer than two nodes");
  for (std::size_t k = 1; k < axis.size(); ++k) {
    const double h = axis[k] - axis[k - 1];
    if (!(h > 0.0)) too_coarse("axis not strictly increasing");
    if (h > limits.coarse_um * (1.0 + 1e-6)) too_coarse("spacing " + std::to_string(h) + " exceeds coarse limit");
    if (k >= 2) {
      const double prev = axis[k - 1] - axis[k - 2];
      const double ratio = std::max(h / prev, prev / h);
      if (ratio > limits.ratio * (1.0 + 1e-6)) too_coarse("adjacent spacing ratio " + std::to_string(ratio));
    }
  }
  for (double f : junctions) {
    auto it = std::lower_bound(axis.begin(), axis.end(), f - 1e-12);
    if (it == axis.end() || std::abs(*it - f) > 1e-9) too_coarse("junction feature not on a node");
    const std::size_t k = static_cast<std::size_t>(it - axis.begin());
    double local = limits.coarse_um * 2.0;
    if (k > 0) local = std::min(local, axis[k] - axis[k - 1]);
    if (k + 1 < axis.size()) local = std::min(local, axis[k + 1] - axis[k]);
    if (local > limits.fine_um * (1.0 + 1e-9)) {
      too_coarse("spacing " + std::to_string(local) + " at junction exceeds fine limit");
    }
  }
}

}  // namespace

std::array<double, kDesignDims> to_array(const DesignVector& dv) {
  return {dv.s_um, dv.w_um, dv.d_um, static_cast<double>(dv.n_rings), dv.sigma_um};
}

DesignVector from_array(const std::array<double, kDesignDims>& v) {
  return {v[0], v[1], v[2], static_cast<int>(std::lround(v[3])), v[4]};
}

std::array<Interval, kDesignDims> DesignBounds::as_intervals() const {
  return {s_um, w_um, d_um, Interval{static_cast<double>(n_min), static_cast<double>(n_max)}, sigma_um};
}

DesignVector validate_design(const DesignVector& dv, const DesignBounds& bounds) {
  require_in("s_um", dv.s_um, bounds.s_um);
  require_in("w_um", dv.w_um, bounds.w_um);
  require_in("d_um", dv.d_um, bounds.d_um);
  if (dv.n_rings < bounds.n_min || dv.n_rings > bounds.n_max) {
    std::ostringstream os;
    os << "OutOfBounds(n_rings, " << dv.n_rings << ", {" << bounds.n_min << ".." << bounds.n_max << "})";
    fail(ErrorKind::OutOfBounds, os.str());
  }
  require_in("sigma_um", dv.sigma_um, bounds.sigma_um);
  return dv;
}

double MaterialConfig::thermal_voltage() const { return kBoltzmannOverQ * temperature; }

double MaterialConfig::permittivity() const { return eps_r * kVacuumPermittivity; }

void MaterialConfig::validate() const {
  const std::pair<const char*, double> fields[] = {{"eps_r", eps_r},     {"e_crit", e_crit}, {"alpha_a", alpha_a},
                                                   {"alpha_b", alpha_b}, {"n_i", n_i},       {"temperature", temperature}};
  for (const auto& [name, value] : fields) {
    if (!(value > 0.0) || !std::isfinite(value)) {
      fail(ErrorKind::InvalidArgument, std::string("material.") + name + " must be finite and > 0");
    }
  }
}

std::string to_string(Boundary b) {
  switch (b) {
    case Boundary::SymmetryPlane: return "symmetry";
    case Boundary::AnodeContact: return "anode";
    case Boundary::PassivatedSurface: return "surface";
    case Boundary::RightEdge: return "right";
    case Boundary::CathodeContact: return "cathode";
  }
  return "unknown";
}

bool DeviceGeometry::is_anode_contact(std::size_t i, std::size_t j) const {
  return j == 0 && x_um[i] <= anode_half_width_um + 1e-12;
}

std::vector<double> graded_axis(double lo, double hi, const std::vector<double>& fine_features,
                                const std::vector<double>& plain_features, double fine, double coarse,
                                double grading) {
  std::vector<double> features{lo, hi};
  for (double f : fine_features) features.push_back(f);
  for (double f : plain_features) features.push_back(f);
  std::sort(features.begin(), features.end());
  features.erase(std::unique(features.begin(), features.end(), [](double a, double b) { return b - a < 1e-9; }),
                 features.end());
  features.erase(std::remove_if(features.begin(), features.end(), [&](double f) { return f < lo || f > hi; }),
                 features.end());

  // Fine anchors with their local spacing. Near another feature the anchor
  // shrinks (gap/8 between fine features, gap/3 otherwise) so the segment holds
  // enough cells that rounding the count keeps both sides within the ratio limit.
  std::vector<double> fine_sorted;
  for (double f : fine_features) {
    if (f >= lo && f <= hi) fine_sorted.push_back(f);
  }
  std::sort(fine_sorted.begin(), fine_sorted.end());
  auto is_fine = [&](double f) {
    auto it = std::lower_bound(fine_sorted.begin(), fine_sorted.end(), f - 1e-9);
    return it != fine_sorted.end() && std::abs(*it - f) <= 1e-9;
  };
  std::vector<std::pair<double, double>> anchors;
  for (std::size_t k = 0; k < features.size(); ++k) {
    const double f = features[k];
    if (!is_fine(f)) continue;
    double h = fine;
    if (k > 0) {
      const double gap = f - features[k - 1];
      h = std::min(h, is_fine(features[k - 1]) ? gap / 8.0 : gap / 3.0);
    }
    if (k + 1 < features.size()) {
      const double gap = features[k + 1] - f;
      h = std::min(h, is_fine(features[k + 1]) ? gap / 8.0 : gap / 3.0);
    }
    anchors.emplace_back(f, h);
  }
  const double slope = grading - 1.0;
  // The first cell spans where the target has already grown; shrink the anchor
  // so that cell comes out at the requested width.
  const double first_cell = slope > 0.0 ? slope / std::expm1(slope) : 1.0;
  for (auto& anchor : anchors) anchor.second *= first_cell;
  auto target = [&](double x) {
    double h = coarse;
    for (const auto& [f, hf] : anchors) h = std::min(h, hf + slope * std::abs(x - f));
    return h;
  };

  // Equidistribute 1/target over each segment. The quadrature steps at a
  // fraction of the local target so tiny anchors stay resolved.
  constexpr double kSub = 1.0 / 64.0;
  std::vector<double> nodes{features.front()};
  std::vector<double> xs;
  std::vector<double> cumulative;
  for (std::size_t s = 0; s + 1 < features.size(); ++s) {
    const double a = features[s];
    const double b = features[s + 1];
    xs.assign(1, a);
    cumulative.assign(1, 0.0);
    double x = a;
    double prev = 1.0 / target(a);
    while (x < b) {
      const double next = std::min(b, x + kSub * target(x));
      const double cur = 1.0 / target(next);
      cumulative.push_back(cumulative.back() + 0.5 * (prev + cur) * (next - x));
      xs.push_back(next);
      prev = cur;
      x = next;
    }
    const double total = cumulative.back();
    const int cells = std::max(1, static_cast<int>(std::ceil(total - 1e-9)));
    std::size_t q = 0;
    for (int k = 1; k < cells; ++k) {
      const double want = total * k / cells;
      while (q + 2 < cumulative.size() && cumulative[q + 1] < want) ++q;
      const double span = cumulative[q + 1] - cumulative[q];
      const double t = span > 0.0 ? (want - cumulative[q]) / span : 0.0;
      nodes.push_back(xs[q] + t * (xs[q + 1] - xs[q]));
    }
    nodes.push_back(b);
  }

  return nodes;
}

double acceptor_density(const DeviceGeometry& geom, double x_um, double y_um) {
  double sum = 0.0;
  for (const auto& b : geom.boxes) sum += box_acceptor(b, x_um, y_um, geom.sigma_um);
  return geom.peak_acceptor * sum;
}

Structure build_structure(const DesignVector& dv, const GeometryOptions& opts) {
  if (!(dv.sigma_um > 0.0)) fail(ErrorKind::InvalidArgument, "sigma_um must be > 0");
  if (dv.n_rings < 0) fail(ErrorKind::InvalidArgument, "n_rings must be >= 0");

  Structure out;
  DeviceGeometry& g = out.geometry;
  const double a = opts.anode_half_width_um;
  g.anode_half_width_um = a;
  g.anode_depth_um = opts.anode_depth_um;
  g.drift_thickness_um = opts.drift_thickness_um;
  g.total_height_um = opts.anode_depth_um + opts.drift_thickness_um;
  g.sigma_um = dv.sigma_um;
  g.peak_acceptor = opts.peak_acceptor;
  g.drift_doping = opts.drift_doping;

  const double rings_end = a + dv.n_rings * (dv.s_um + dv.w_um);
  g.domain_width_um = rings_end + std::max(opts.edge_margin_um, opts.margin_sigma_factor * dv.sigma_um);
  if (opts.max_domain_width_um > 0.0 && g.domain_width_um > opts.max_domain_width_um) {
    fail(ErrorKind::OutOfDomain, "domain width " + std::to_string(g.domain_width_um) + " um exceeds cap " +
                                     std::to_string(opts.max_domain_width_um));
  }

  g.boxes.push_back({-a, a, opts.anode_depth_um, kAnodeTag});
  std::vector<double> x_junctions{a};
  for (int i = 1; i <= dv.n_rings; ++i) {
    const double left = a + i * dv.s_um + (i - 1) * dv.w_um;
    const double right = a + i * dv.s_um + i * dv.w_um;
    g.boxes.push_back({left, right, dv.d_um, i});
    x_junctions.push_back(left);
    x_junctions.push_back(right);
  }
  std::vector<double> y_junctions{opts.anode_depth_um};
  if (dv.n_rings > 0) y_junctions.push_back(dv.d_um);

  const SpacingLimits& lim = opts.limits;
  if (opts.junction_spacing_um > lim.fine_um * (1.0 + 1e-9) || opts.max_spacing_um > lim.coarse_um * (1.0 + 1e-9)) {
    fail(ErrorKind::GridTooCoarse, "GridTooCoarse: requested spacing exceeds the configured limits");
  }
  g.x_um = graded_axis(0.0, g.domain_width_um, x_junctions, {}, opts.junction_spacing_um, opts.max_spacing_um,
                       opts.grading);
  g.y_um = graded_axis(0.0, g.total_height_um, y_junctions, {}, opts.junction_spacing_um, opts.max_spacing_um,
                       opts.grading);
  check_axis(g.x_um, x_junctions, lim, "x");
  check_axis(g.y_um, y_junctions, lim, "y");

  g.boundaries = {
      {Boundary::SymmetryPlane, 0.0, g.total_height_um},
      {Boundary::AnodeContact, 0.0, a},
      {Boundary::PassivatedSurface, a, g.domain_width_um},
      {Boundary::RightEdge, 0.0, g.total_height_um},
      {Boundary::CathodeContact, 0.0, g.domain_width_um},
  };

  DopingMap& d = out.doping;
  d.ring_count = dv.n_rings;
  const std::size_t n = g.node_count();
  d.net.resize(n);
  d.acceptor.resize(n);
  d.region.assign(n, kDriftTag);
  for (std::size_t i = 0; i < g.nx(); ++i) {
    for (std::size_t j = 0; j < g.ny(); ++j) {
      const double x = g.x_um[i];
      const double y = g.y_um[j];
      double total = 0.0;
      double best = 0.0;
      int best_tag = kDriftTag;
      for (const auto& b : g.boxes) {
        const double c = box_acceptor(b, x, y, g.sigma_um);
        total += c;
        if (c > best) {
          best = c;
          best_tag = b.tag;
        }
      }
      const std::size_t k = g.node(i, j);
      d.acceptor[k] = g.peak_acceptor * total;
      d.net[k] = g.drift_doping - d.acceptor[k];
      if (d.net[k] < 0.0) d.region[k] = best_tag;
    }
  }
  return out;
}

double doping_at(const Structure& s, double x_um, double y_um) {
  const auto& g = s.geometry;
  const auto& xs = g.x_um;
  const auto& ys = g.y_um;
  if (!(x_um >= xs.front() && x_um <= xs.back() && y_um >= ys.front() && y_um <= ys.back())) {
    fail(ErrorKind::OutOfDomain, "OutOfDomain: (" + std::to_string(x_um) + ", " + std::to_string(y_um) + ")");
  }
  auto cell = [](const std::vector<double>& axis, double v) {
    if (axis.size() < 2) return std::size_t{0};
    auto it = std::upper_bound(axis.begin(), axis.end(), v);
    std::size_t k = it == axis.begin() ? 0 : static_cast<std::size_t>(it - axis.begin()) - 1;
    return std::min(k, axis.size() - 2);
  };
  const std::size_t i = cell(xs, x_um);
  const std::size_t j = cell(ys, y_um);
  const double tx = xs.size() < 2 ? 0.0 : (x_um - xs[i]) / (xs[i + 1] - xs[i]);
  const double ty = (y_um - ys[j]) / (ys[j + 1] - ys[j]);
  const auto& net = s.doping.net;
  const std::size_t i1 = std::min(i + 1, xs.size() - 1);
  return (1 - tx) * (1 - ty) * net[g.node(i, j)] + tx * (1 - ty) * net[g.node(i1, j)] +
         (1 - tx) * ty * net[g.node(i, j + 1)] + tx * ty * net[g.node(i1, j + 1)];
}

Profile1D build_ideal_1d(const GeometryOptions& opts) {
  Profile1D p;
  p.anode_depth_um = opts.anode_depth_um;
  p.drift_thickness_um = opts.drift_thickness_um;
  const double total = opts.anode_depth_um + opts.drift_thickness_um;
  p.y_um = graded_axis(0.0, total, {opts.anode_depth_um}, {}, opts.junction_spacing_um, opts.max_spacing_um,
                       opts.grading);
  p.net.reserve(p.y_um.size());
  for (double y : p.y_um) {
    // The node exactly on the metallurgical junction belongs to the p side.
    p.net.push_back(y <= opts.anode_depth_um + 1e-12 ? -opts.peak_acceptor : opts.drift_doping);
  }
  return p;
}

Structure extrude_1d(const Profile1D& profile) {
  Structure s;
  DeviceGeometry& g = s.geometry;
  g.anode_depth_um = profile.anode_depth_um;
  g.drift_thickness_um = profile.drift_thickness_um;
  g.total_height_um = profile.y_um.back();
  g.domain_width_um = 1.0;
  g.anode_half_width_um = g.domain_width_um;
  g.x_um = {0.0, g.domain_width_um};
  g.y_um = profile.y_um;
  g.sigma_um = 0.0;
  g.boundaries = {
      {Boundary::SymmetryPlane, 0.0, g.total_height_um},
      {Boundary::AnodeContact, 0.0, g.domain_width_um},
      {Boundary::RightEdge, 0.0, g.total_height_um},
      {Boundary::CathodeContact, 0.0, g.domain_width_um},
  };
  double na = 0.0;
  double nd = 0.0;
  for (double v : profile.net) {
    na = std::max(na, -v);
    nd = std::max(nd, v);
  }
  g.peak_acceptor = na;
  g.drift_doping = nd;

  DopingMap& d = s.doping;
  for (std::size_t i = 0; i < 2; ++i) {
    for (double v : profile.net) {
      d.net.push_back(v);
      d.acceptor.push_back(v < 0.0 ? -v : 0.0);
      d.region.push_back(v < 0.0 ? kAnodeTag : kDriftTag);
    }
  }
  return s;
}

}  // namespace bvforge
