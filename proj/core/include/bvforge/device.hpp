#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace bvforge {

/// Guard-ring design variables. Lengths are in micrometres.
struct DesignVector {
  double s_um = 1.0;      // ring-to-ring spacing
  double w_um = 1.0;      // ring width
  double d_um = 0.5;      // ring junction depth
  int n_rings = 0;
  double sigma_um = 0.05; // junction gradient standard deviation

  bool operator==(const DesignVector&) const = default;
};

inline constexpr std::size_t kDesignDims = 5;

/// (S, W, D, N, sigma) in that order; N becomes a double.
std::array<double, kDesignDims> to_array(const DesignVector& dv);
/// Inverse of to_array. N is rounded to the nearest integer.
DesignVector from_array(const std::array<double, kDesignDims>& v);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  bool contains(double v) const { return v >= lo && v <= hi; }
  double width() const { return hi - lo; }
  bool operator==(const Interval&) const = default;
};

/// Closed per-variable ranges for the design space. N is always integral.
struct DesignBounds {
  Interval s_um{0.25, 5.0};
  Interval w_um{0.25, 5.0};
  Interval d_um{0.01, 1.0};
  int n_min = 0;
  int n_max = 32;
  Interval sigma_um{0.01, 0.1};

  std::array<Interval, kDesignDims> as_intervals() const;
  bool operator==(const DesignBounds&) const = default;
};

/// Throws Error(OutOfBounds) naming the first violated field; returns dv otherwise.
DesignVector validate_design(const DesignVector& dv, const DesignBounds& bounds = {});

struct MaterialConfig {
  double eps_r = 8.9;
  double e_crit = 3.3e6;    // V/cm
  double alpha_a = 2.9e8;   // 1/cm
  double alpha_b = 3.4e7;   // V/cm
  double n_i = 1.9e-10;     // 1/cm^3
  double temperature = 300.0;

  double thermal_voltage() const;
  /// Permittivity in F/cm.
  double permittivity() const;
  void validate() const;
  bool operator==(const MaterialConfig&) const = default;
};

/// Spacing thresholds the generated grid is checked against.
struct SpacingLimits {
  double fine_um = 0.05;
  double coarse_um = 1.0;
  double ratio = 1.3;
  bool operator==(const SpacingLimits&) const = default;
};

struct GeometryOptions {
  double anode_half_width_um = 5.0;
  double anode_depth_um = 0.5;
  double drift_thickness_um = 10.0;
  double drift_doping = 1e16;      // donors, 1/cm^3
  double peak_acceptor = 1e19;     // 1/cm^3
  double edge_margin_um = 5.0;
  double margin_sigma_factor = 10.0;
  double max_domain_width_um = 0.0;  // 0 disables the cap

  double junction_spacing_um = 0.05;
  double max_spacing_um = 1.0;
  double grading = 1.2;
  SpacingLimits limits{};

  bool operator==(const GeometryOptions&) const = default;
};

enum class Boundary { SymmetryPlane, AnodeContact, PassivatedSurface, RightEdge, CathodeContact };

std::string to_string(Boundary b);

struct BoundarySegment {
  Boundary label;
  // Endpoints in micrometres. Horizontal segments run in x, vertical ones in y.
  double from_um;
  double to_um;
};

/// Acceptor box before edge roll-off. The anode box is stored mirrored about x = 0.
struct AcceptorBox {
  double x0_um;
  double x1_um;
  double depth_um;
  int tag;
};

struct DeviceGeometry {
  double anode_half_width_um = 0.0;
  double anode_depth_um = 0.0;
  double drift_thickness_um = 0.0;
  double domain_width_um = 0.0;
  double total_height_um = 0.0;  // anode depth + drift thickness; y grows downward
  std::vector<double> x_um;
  std::vector<double> y_um;
  std::vector<BoundarySegment> boundaries;
  std::vector<AcceptorBox> boxes;
  double sigma_um = 0.0;
  double peak_acceptor = 0.0;
  double drift_doping = 0.0;

  std::size_t nx() const { return x_um.size(); }
  std::size_t ny() const { return y_um.size(); }
  std::size_t node_count() const { return nx() * ny(); }
  /// Nodes are stored column-major: all y for x index 0, then x index 1, ...
  std::size_t node(std::size_t i, std::size_t j) const { return i * ny() + j; }
  bool is_anode_contact(std::size_t i, std::size_t j) const;
  bool is_cathode_contact(std::size_t j) const { return j + 1 == ny(); }
};

/// Region tags: -1 drift, 0 anode, r >= 1 guard ring r.
inline constexpr int kDriftTag = -1;
inline constexpr int kAnodeTag = 0;

struct DopingMap {
  std::vector<double> net;       // N_D - N_A per node, 1/cm^3
  std::vector<double> acceptor;  // N_A per node
  std::vector<int> region;
  int ring_count = 0;
};

struct Structure {
  DeviceGeometry geometry;
  DopingMap doping;
};

/// Acceptor density of the erf-smoothed boxes at an arbitrary point.
double acceptor_density(const DeviceGeometry& geom, double x_um, double y_um);

Structure build_structure(const DesignVector& dv, const GeometryOptions& opts = {});

/// Bilinear interpolation of net doping. Throws OutOfDomain outside the grid.
double doping_at(const Structure& s, double x_um, double y_um);

struct Profile1D {
  std::vector<double> y_um;
  std::vector<double> net;
  double anode_depth_um = 0.0;
  double drift_thickness_um = 0.0;
};

/// Abrupt p+/n-/cathode stack used as the theoretical-limit reference.
Profile1D build_ideal_1d(const GeometryOptions& opts = {});

/// Wraps a 1D profile as a two-column structure with the anode contact across the top.
Structure extrude_1d(const Profile1D& profile);

/// Graded tensor-grid axis: nodes land exactly on every feature, spacing is
/// `fine` at fine features and grows geometrically up to `coarse`.
std::vector<double> graded_axis(double lo, double hi, const std::vector<double>& fine_features,
                                const std::vector<double>& plain_features, double fine, double coarse,
                                double grading);

}  // namespace bvforge
