#include "bvforge/field_solver.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <deque>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

#include "band_cholesky.hpp"
#include "bvforge/error.hpp"

namespace bvforge {
namespace {

constexpr double kElementaryCharge = 1.602176634e-19;  // C
constexpr double kUmToCm = 1e-4;

enum class NodeKind : unsigned char { Free, Anode, Cathode };

double neutral_potential(double net, double vt, double ni) { return vt * std::asinh(net / (2.0 * ni)); }

}  // namespace

std::string to_string(BreakdownMode mode) { return mode == BreakdownMode::Fast ? "fast" : "full"; }

BreakdownMode parse_mode(const std::string& text) {
  if (text == "fast") return BreakdownMode::Fast;
  if (text == "full") return BreakdownMode::Full;
  fail(ErrorKind::InvalidArgument, "unknown breakdown mode '" + text + "' (expected fast|full)");
}

struct PoissonSolver::Impl {
  Structure structure;
  MaterialConfig mat;
  SolverOptions opts;

  double vt = 0.0;
  double ni = 0.0;
  double eps_q = 0.0;  // permittivity / q, 1/(V cm)
  std::size_t nx = 0;
  std::size_t ny = 0;
  std::size_t n = 0;

  std::vector<double> xc, yc;  // node coordinates, cm
  std::vector<double> volume;  // control-volume area, cm^2
  std::vector<double> cond_x;  // edge (i,j)-(i+1,j), stored at node(i,j)
  std::vector<double> cond_y;  // edge (i,j)-(i,j+1), stored at node(i,j)
  std::vector<NodeKind> kind;
  std::vector<int> unknown;  // node -> unknown index, -1 for Dirichlet nodes
  std::vector<std::size_t> free_nodes;

  // Hole quasi-Fermi level owner: -1 uses the anode level, r >= 0 floating region r.
  std::vector<int> hole_owner;
  std::vector<std::vector<std::size_t>> floating_nodes;
  std::vector<std::size_t> saddles;    // barrier-top node per floating region
  double kappa = 0.0;                  // level offset above the barrier top at the escape density
  std::vector<std::size_t> parent, order, found;  // barrier search scratch
  std::vector<unsigned char> flooded;

  detail::BandCholesky band;  // symmetric part of the Jacobian, then its factor
  Eigen::MatrixXd coupling;    // dF/dphi_r per free unknown
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> block;
  std::vector<double> slopes;  // d target level / d psi(saddle)
  double level_weight = 0.0;   // scales level rows into node-residual units

  Impl(const Structure& s, const MaterialConfig& m, SolverOptions o) : structure(s), mat(m), opts(o) {
    mat.validate();
    const auto& g = structure.geometry;
    vt = mat.thermal_voltage();
    ni = mat.n_i;
    eps_q = mat.permittivity() / kElementaryCharge;
    nx = g.nx();
    ny = g.ny();
    n = g.node_count();
    if (nx < 2 || ny < 2) fail(ErrorKind::InvalidArgument, "structure needs at least a 2x2 grid");
    if (structure.doping.net.size() != n) fail(ErrorKind::InvalidArgument, "doping map does not match grid");

    for (double x : g.x_um) xc.push_back(x * kUmToCm);
    for (double y : g.y_um) yc.push_back(y * kUmToCm);
    auto half_widths = [](const std::vector<double>& c) {
      std::vector<double> h(c.size(), 0.0);
      for (std::size_t k = 0; k + 1 < c.size(); ++k) {
        const double d = c[k + 1] - c[k];
        h[k] += 0.5 * d;
        h[k + 1] += 0.5 * d;
      }
      return h;
    };
    const auto hx = half_widths(xc);
    const auto hy = half_widths(yc);

    volume.resize(n);
    cond_x.assign(n, 0.0);
    cond_y.assign(n, 0.0);
    kind.assign(n, NodeKind::Free);
    unknown.assign(n, -1);
    for (std::size_t i = 0; i < nx; ++i) {
      for (std::size_t j = 0; j < ny; ++j) {
        const std::size_t k = g.node(i, j);
        volume[k] = hx[i] * hy[j];
        if (i + 1 < nx) cond_x[k] = eps_q * hy[j] / (xc[i + 1] - xc[i]);
        if (j + 1 < ny) cond_y[k] = eps_q * hx[i] / (yc[j + 1] - yc[j]);
        if (g.is_anode_contact(i, j)) {
          kind[k] = NodeKind::Anode;
        } else if (g.is_cathode_contact(j)) {
          kind[k] = NodeKind::Cathode;
        } else {
          unknown[k] = static_cast<int>(free_nodes.size());
          free_nodes.push_back(k);
        }
      }
    }
    label_floating_regions();
    std::size_t bandwidth = 0;
    for (std::size_t u = 0; u < free_nodes.size(); ++u) {
      for (std::size_t m : neighbours(free_nodes[u])) {
        if (m < n && unknown[m] > static_cast<int>(u)) bandwidth = std::max(bandwidth, static_cast<std::size_t>(unknown[m]) - u);
      }
    }
    band.resize(free_nodes.size(), bandwidth);
    kappa = vt * std::log(opts.punch_through_density / ni);
    level_weight = 4.0 * eps_q;
  }

  // p-type components that do not touch the anode contact float electrically.
  // Regions are discovered in column-major order, so they come out sorted by x.
  void label_floating_regions() {
    const auto& net = structure.doping.net;
    hole_owner.assign(n, -1);
    std::vector<int> component(n, -2);
    std::vector<std::size_t> stack;
    for (std::size_t seed = 0; seed < n; ++seed) {
      if (net[seed] >= 0.0 || component[seed] != -2) continue;
      std::vector<std::size_t> members;
      bool touches_anode = false;
      stack.push_back(seed);
      component[seed] = -3;
      while (!stack.empty()) {
        const std::size_t k = stack.back();
        stack.pop_back();
        members.push_back(k);
        if (kind[k] == NodeKind::Anode) touches_anode = true;
        for (std::size_t m : neighbours(k)) {
          if (m < n && net[m] < 0.0 && component[m] == -2) {
            component[m] = -3;
            stack.push_back(m);
          }
        }
      }
      if (touches_anode) continue;
      const int r = static_cast<int>(floating_nodes.size());
      std::sort(members.begin(), members.end());
      for (std::size_t k : members) hole_owner[k] = r;
      floating_nodes.push_back(std::move(members));
    }
  }

  std::array<std::size_t, 4> neighbours(std::size_t k) const {
    const std::size_t i = k / ny;
    const std::size_t j = k % ny;
    return {i > 0 ? k - ny : n, i + 1 < nx ? k + ny : n, j > 0 ? k - 1 : n, j + 1 < ny ? k + 1 : n};
  }

  // Lowest hole barrier between each floating region r and the p region just
  // inside it (the previous ring, or the anode for the first ring): the n-type
  // node at the top of the minimax-potential path. Nodes are flooded in order
  // of rising potential; the node whose activation first joins the two regions
  // is the barrier top. n when the regions never join.
  void find_saddles(const std::vector<double>& psi, std::vector<std::size_t>& out) {
    const auto& net = structure.doping.net;
    const std::size_t rings = floating_nodes.size();
    out.assign(rings, n);
    if (rings == 0) return;
    parent.resize(n);
    for (std::size_t k = 0; k < n; ++k) parent[k] = k;
    auto find = [&](std::size_t k) {
      while (parent[k] != k) {
        parent[k] = parent[parent[k]];
        k = parent[k];
      }
      return k;
    };
    // One representative per p region; -1 is the anode region.
    std::vector<std::size_t> rep(rings + 1, n);
    for (std::size_t k = 0; k < n; ++k) {
      if (net[k] >= 0.0) continue;
      const std::size_t slot = static_cast<std::size_t>(hole_owner[k] + 1);
      if (rep[slot] == n) {
        rep[slot] = k;
      } else {
        parent[k] = rep[slot];
      }
    }
    order.clear();
    for (std::size_t k = 0; k < n; ++k) {
      if (net[k] >= 0.0) order.push_back(k);
    }
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return psi[a] < psi[b] || (psi[a] == psi[b] && a < b);
    });
    flooded.assign(n, 0);
    for (std::size_t k = 0; k < n; ++k) {
      if (net[k] < 0.0) flooded[k] = 1;
    }
    std::size_t pending = 0;
    for (std::size_t r = 0; r < rings; ++r) pending += rep[r] < n ? 1 : 0;
    for (std::size_t k : order) {
      flooded[k] = 1;
      bool joined = false;
      for (std::size_t m : neighbours(k)) {
        if (m >= n || !flooded[m]) continue;
        const std::size_t a = find(k);
        const std::size_t b = find(m);
        if (a != b) {
          parent[b] = a;
          joined = true;
        }
      }
      if (!joined) continue;
      for (std::size_t r = 0; r < rings; ++r) {
        if (out[r] == n && rep[r] < n && find(rep[r]) == find(rep[r + 1])) {
          out[r] = k;
          --pending;
        }
      }
      if (pending == 0) break;
    }
  }

  double clamp_exp(double arg) const { return std::exp(std::min(arg, opts.max_exponent)); }
  double electron_density(double psi) const { return ni * clamp_exp(psi / vt); }
  double hole_density(double psi, double phi_p) const { return ni * clamp_exp((phi_p - psi) / vt); }

  // A floating region keeps the cathode level until the barrier towards its
  // inner neighbour collapses; from then on it rides the barrier top, never
  // dropping below the anode level. Both limits are rounded over a thermal
  // voltage so the Newton map stays smooth.
  struct Level {
    double value;
    double slope;  // d value / d psi(saddle)
  };

  Level target_level(std::size_t r, double bias, const std::vector<double>& psi) const {
    const std::size_t s = saddles[r];
    if (s >= n || bias == 0.0) return {0.0, 0.0};
    auto softplus = [](double z) { return z > 30.0 ? z : std::log1p(std::exp(z)); };
    auto sigmoid = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
    const double v = psi[s] + kappa;
    const double upper = -vt * softplus(-v / vt);
    const double d_upper = sigmoid(-v / vt);
    const double z = (upper + bias) / vt;
    return {-bias + vt * softplus(z), sigmoid(z) * d_upper};
  }

  double hole_level(std::size_t k, double bias, const std::vector<double>& phi) const {
    const int owner = hole_owner[k];
    return owner < 0 ? -bias : phi[static_cast<std::size_t>(owner)];
  }

  double dirichlet_value(std::size_t k, double bias) const {
    const double base = neutral_potential(structure.doping.net[k], vt, ni);
    return kind[k] == NodeKind::Anode ? base - bias : base;
  }

  FieldSolution guess(double bias) const {
    FieldSolution s;
    s.bias = bias;
    s.ring_levels.assign(floating_nodes.size(), 0.0);
    s.potential.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      const double net = structure.doping.net[k];
      double level = 0.0;
      if (net < 0.0 && hole_owner[k] < 0) level = -bias;
      s.potential[k] = neutral_potential(net, vt, ni) + level;
      if (kind[k] != NodeKind::Free) s.potential[k] = dirichlet_value(k, bias);
    }
    return s;
  }

  // Residual of the Poisson rows (F) and the level rows (G = phi - target), and
  // optionally the lower triangle of dF/dpsi plus the coupling columns dF/dphi.
  // Returns the merit norm with G weighted like a node row.
  double evaluate(const std::vector<double>& psi, const std::vector<double>& phi, double bias, Eigen::VectorXd& f,
                  Eigen::VectorXd& g, bool jacobian) {
    const auto& net = structure.doping.net;
    const std::size_t nfree = free_nodes.size();
    const std::size_t rings = floating_nodes.size();
    f.resize(static_cast<Eigen::Index>(nfree));
    g.resize(static_cast<Eigen::Index>(rings));
    if (jacobian) {
      band.clear();
      coupling.setZero(static_cast<Eigen::Index>(nfree), static_cast<Eigen::Index>(rings));
      slopes.assign(rings, 0.0);
    }
    for (std::size_t r = 0; r < rings; ++r) {
      const Level t = target_level(r, bias, psi);
      g[static_cast<Eigen::Index>(r)] = phi[r] - t.value;
      if (jacobian) slopes[r] = t.slope;
    }
    for (std::size_t u = 0; u < nfree; ++u) {
      const std::size_t k = free_nodes[u];
      const std::size_t i = k / ny;
      const std::size_t j = k % ny;
      double flux = 0.0;
      double diag = 0.0;
      auto couple = [&](std::size_t m, double c) {
        flux += c * (psi[k] - psi[m]);
        diag += c;
        if (jacobian && unknown[m] >= 0 && static_cast<std::size_t>(unknown[m]) > u) {
          band.at(static_cast<std::size_t>(unknown[m]), u) = -c;
        }
      };
      if (i > 0) couple(k - ny, cond_x[k - ny]);
      if (i + 1 < nx) couple(k + ny, cond_x[k]);
      if (j > 0) couple(k - 1, cond_y[k - 1]);
      if (j + 1 < ny) couple(k + 1, cond_y[k]);

      const double nd = electron_density(psi[k]);
      const double pd = hole_density(psi[k], hole_level(k, bias, phi));
      const double vol = volume[k];
      f[static_cast<Eigen::Index>(u)] = flux - vol * (pd - nd + net[k]);
      if (jacobian) {
        band.at(u, u) = diag + vol * (pd + nd) / vt;
        const int owner = hole_owner[k];
        if (owner >= 0) coupling(static_cast<Eigen::Index>(u), owner) = -vol * pd / vt;
      }
    }
    return std::sqrt(f.squaredNorm() + level_weight * level_weight * g.squaredNorm());
  }

  // Newton direction for the bordered system
  //   [A  B] [dpsi]   [-F]
  //   [C  I] [dphi] = [-G],   C = -slope_r e_{s_r}^T,
  // eliminating dphi and applying the Woodbury identity to A - B C. A is the
  // symmetric part held factorised in `band`.
  void newton_step(const Eigen::VectorXd& f, const Eigen::VectorXd& g, Eigen::VectorXd& dpsi,
                   Eigen::VectorXd& dphi) {
    const std::size_t rings = floating_nodes.size();
    std::vector<std::size_t> active;
    for (std::size_t r = 0; r < rings; ++r) {
      if (slopes[r] > 1e-12 && saddles[r] < n && unknown[saddles[r]] >= 0) active.push_back(r);
    }
    // Column 0 is the plain right-hand side, the rest are A^{-1} B slope_r.
    const auto m = static_cast<Eigen::Index>(active.size());
    block.resize(f.size(), m + 1);
    block.col(0) = -f;
    if (rings > 0) block.col(0) += coupling * g;
    for (Eigen::Index c = 0; c < m; ++c) {
      const auto r = active[static_cast<std::size_t>(c)];
      block.col(c + 1) = slopes[r] * coupling.col(static_cast<Eigen::Index>(r));
    }
    band.solve_rows(block.data(), static_cast<std::size_t>(m + 1));
    dpsi = block.col(0);
    if (m > 0) {
      Eigen::MatrixXd cap = Eigen::MatrixXd::Identity(m, m);
      Eigen::VectorXd vx(m);
      for (Eigen::Index a = 0; a < m; ++a) {
        const Eigen::Index row = unknown[saddles[active[static_cast<std::size_t>(a)]]];
        cap.row(a) += block.row(row).tail(m);
        vx[a] = dpsi[row];
      }
      dpsi -= block.rightCols(m) * cap.partialPivLu().solve(vx);
    }
    dphi.resize(static_cast<Eigen::Index>(rings));
    for (std::size_t r = 0; r < rings; ++r) {
      const std::size_t s = saddles[r];
      const double ds = s < n && unknown[s] >= 0 ? dpsi[unknown[s]] : 0.0;
      dphi[static_cast<Eigen::Index>(r)] = -g[static_cast<Eigen::Index>(r)] + slopes[r] * ds;
    }
  }

  FieldSolution solve(double bias, const FieldSolution* warm) {
    if (!(bias >= 0.0) || !std::isfinite(bias)) fail(ErrorKind::InvalidArgument, "bias must be finite and >= 0");
    const std::size_t rings = floating_nodes.size();
    FieldSolution state = guess(bias);
    if (warm != nullptr && warm->potential.size() == n) {
      state.potential = warm->potential;
      // The anode-connected p region follows the contact.
      const double shift = warm->bias - bias;
      for (std::size_t k = 0; k < n; ++k) {
        if (kind[k] != NodeKind::Free) {
          state.potential[k] = dirichlet_value(k, bias);
        } else if (structure.doping.net[k] < 0.0 && hole_owner[k] < 0) {
          state.potential[k] += shift;
        }
      }
      if (warm->ring_levels.size() == rings) state.ring_levels = warm->ring_levels;
    }
    for (double& l : state.ring_levels) l = std::clamp(l, -bias, 0.0);

    const std::size_t nfree = free_nodes.size();
    const auto m = static_cast<Eigen::Index>(nfree);
    Eigen::VectorXd f(m), g, trial_f(m), trial_g, dpsi, dphi;
    std::vector<double> trial_psi;
    std::vector<double> trial_phi;

    auto diverged = [&](int iters, const std::string& why) {
      std::ostringstream os;
      os << "NewtonDiverged(bias=" << bias << ", iterations=" << iters << "): " << why;
      return Error(ErrorKind::NewtonDiverged, os.str());
    };
    // Barrier nodes are held fixed within a Newton pass; returns true when a
    // re-search moves one far enough to matter.
    auto locate_saddles = [&] {
      bool moved = false;
      find_saddles(state.potential, found);
      for (std::size_t r = 0; r < rings; ++r) {
        const std::size_t s = found[r];
        if (s != saddles[r] && (s >= n || saddles[r] >= n ||
                                std::abs(state.potential[s] - state.potential[saddles[r]]) > opts.level_tolerance_V)) {
          moved = true;
        }
        saddles[r] = s;
      }
      return moved;
    };
    saddles.assign(rings, n);
    locate_saddles();

    double norm = evaluate(state.potential, state.ring_levels, bias, f, g, true);
    // A residual that no damping can reduce will not recover; give the ramp a
    // chance to back off instead of burning the iteration budget.
    constexpr int kMaxStalled = 4;
    int stalled = 0;
    for (int iter = 1; iter <= opts.max_newton_iterations; ++iter) {
      if (!band.factorize()) throw diverged(iter, "Jacobian factorisation failed");
      newton_step(f, g, dpsi, dphi);
      if (!dpsi.allFinite() || !dphi.allFinite()) throw diverged(iter, "non-finite Newton update");
      double max_update = dpsi.size() > 0 ? dpsi.cwiseAbs().maxCoeff() : 0.0;
      if (rings > 0) max_update = std::max(max_update, dphi.cwiseAbs().maxCoeff());

      double lambda = 1.0;
      double trial_norm = 0.0;
      for (int halving = 0;; ++halving) {
        trial_psi = state.potential;
        trial_phi = state.ring_levels;
        for (std::size_t u = 0; u < nfree; ++u) trial_psi[free_nodes[u]] += lambda * dpsi[static_cast<Eigen::Index>(u)];
        for (std::size_t r = 0; r < rings; ++r) trial_phi[r] += lambda * dphi[static_cast<Eigen::Index>(r)];
        trial_norm = evaluate(trial_psi, trial_phi, bias, trial_f, trial_g, false);
        if ((std::isfinite(trial_norm) && trial_norm < norm) || halving >= opts.max_line_search_halvings) break;
        lambda *= 0.5;
      }
      if (!std::isfinite(trial_norm)) throw diverged(iter, "non-finite residual");
      stalled = trial_norm < norm ? 0 : stalled + 1;
      if (stalled >= kMaxStalled) throw diverged(iter, "line search stalled");
      state.potential.swap(trial_psi);
      state.ring_levels.swap(trial_phi);
      if (max_update < opts.update_tolerance_V && !locate_saddles()) {
        state.newton_iterations = iter;
        finish(state);
        return state;
      }
      locate_saddles();
      norm = evaluate(state.potential, state.ring_levels, bias, f, g, true);
    }
    throw diverged(opts.max_newton_iterations, "iteration limit reached");
  }

  // Node-wise |E| from second-order one-sided blends; zero normal field on Neumann edges.
  void finish(FieldSolution& s) const {
    s.field.assign(n, 0.0);
    auto derivative = [](double fm, double f0, double fp, double hm, double hp) {
      const double sm = (f0 - fm) / hm;
      const double sp = (fp - f0) / hp;
      return (hp * sm + hm * sp) / (hm + hp);
    };
    const auto& psi = s.potential;
    double peak = -1.0;
    std::size_t peak_node = 0;
    for (std::size_t i = 0; i < nx; ++i) {
      for (std::size_t j = 0; j < ny; ++j) {
        const std::size_t k = i * ny + j;
        double ex = 0.0;
        if (i > 0 && i + 1 < nx) {
          ex = derivative(psi[k - ny], psi[k], psi[k + ny], xc[i] - xc[i - 1], xc[i + 1] - xc[i]);
        }
        double ey = 0.0;
        if (j > 0 && j + 1 < ny) {
          ey = derivative(psi[k - 1], psi[k], psi[k + 1], yc[j] - yc[j - 1], yc[j + 1] - yc[j]);
        } else if (j == 0 && kind[k] == NodeKind::Anode) {
          ey = (psi[k + 1] - psi[k]) / (yc[1] - yc[0]);
        } else if (j + 1 == ny) {
          ey = (psi[k] - psi[k - 1]) / (yc[j] - yc[j - 1]);
        }
        const double e = std::hypot(ex, ey);
        s.field[k] = e;
        if (e > peak) {
          peak = e;
          peak_node = k;
        }
      }
    }
    s.peak_field = peak;
    s.peak_node = peak_node;
  }
};

PoissonSolver::PoissonSolver(const Structure& structure, const MaterialConfig& mat, SolverOptions opts)
    : impl_(std::make_unique<Impl>(structure, mat, opts)) {}
PoissonSolver::~PoissonSolver() = default;
PoissonSolver::PoissonSolver(PoissonSolver&&) noexcept = default;
PoissonSolver& PoissonSolver::operator=(PoissonSolver&&) noexcept = default;

FieldSolution PoissonSolver::solve(double bias, const FieldSolution* warm_start) {
  return impl_->solve(bias, warm_start);
}

FieldSolution PoissonSolver::neutral_guess(double bias) const { return impl_->guess(bias); }
const Structure& PoissonSolver::structure() const { return impl_->structure; }
const MaterialConfig& PoissonSolver::material() const { return impl_->mat; }
std::size_t PoissonSolver::floating_region_count() const { return impl_->floating_nodes.size(); }

FieldSolution solve_poisson(const Structure& structure, const MaterialConfig& mat, double bias,
                            const FieldSolution* warm_start) {
  PoissonSolver solver(structure, mat);
  return solver.solve(bias, warm_start);
}

IonizationPath make_path(std::vector<double> x_um, std::vector<double> y_um, std::vector<double> field) {
  if (x_um.size() != y_um.size() || x_um.size() != field.size()) {
    fail(ErrorKind::InvalidArgument, "ionization path arrays differ in length");
  }
  IonizationPath p;
  p.arc_um.resize(x_um.size());
  for (std::size_t k = 0; k < x_um.size(); ++k) {
    p.arc_um[k] = k == 0 ? 0.0 : p.arc_um[k - 1] + std::hypot(x_um[k] - x_um[k - 1], y_um[k] - y_um[k - 1]);
    if (k > 0 && !(p.arc_um[k] > p.arc_um[k - 1])) {
      fail(ErrorKind::InvalidArgument, "ionization path arc length must be strictly increasing");
    }
  }
  p.x_um = std::move(x_um);
  p.y_um = std::move(y_um);
  p.field = std::move(field);
  return p;
}

double ionization_integral(const IonizationPath& path, const MaterialConfig& mat) {
  if (path.arc_um.size() < 2) fail(ErrorKind::InvalidArgument, "ionization path needs at least two points");
  auto alpha = [&](double e) {
    const double mag = std::abs(e);
    return mag > 0.0 ? mat.alpha_a * std::exp(-mat.alpha_b / mag) : 0.0;
  };
  double sum = 0.0;
  double prev = alpha(path.field[0]);
  for (std::size_t k = 1; k < path.arc_um.size(); ++k) {
    const double cur = alpha(path.field[k]);
    sum += 0.5 * (prev + cur) * (path.arc_um[k] - path.arc_um[k - 1]) * kUmToCm;
    prev = cur;
  }
  return sum;
}

std::vector<std::size_t> probe_columns(const Structure& structure, const FieldSolution& solution) {
  const auto& g = structure.geometry;
  auto nearest = [&](double x) {
    auto it = std::lower_bound(g.x_um.begin(), g.x_um.end(), x);
    if (it == g.x_um.end()) return g.nx() - 1;
    std::size_t i = static_cast<std::size_t>(it - g.x_um.begin());
    if (i > 0 && (x - g.x_um[i - 1]) <= (g.x_um[i] - x)) --i;
    return i;
  };
  std::vector<std::size_t> cols{0};
  for (const auto& b : g.boxes) {
    if (b.tag >= 1) cols.push_back(nearest(0.5 * (b.x0_um + b.x1_um)));
  }
  cols.push_back(solution.peak_node / g.ny());
  std::sort(cols.begin(), cols.end());
  cols.erase(std::unique(cols.begin(), cols.end()), cols.end());
  return cols;
}

IonizationPath column_path(const Structure& structure, const FieldSolution& solution, std::size_t column) {
  const auto& g = structure.geometry;
  std::vector<double> xs(g.ny(), g.x_um[column]);
  std::vector<double> ys(g.y_um);
  std::vector<double> es(g.ny());
  for (std::size_t j = 0; j < g.ny(); ++j) es[j] = solution.field[g.node(column, j)];
  return make_path(std::move(xs), std::move(ys), std::move(es));
}

double max_ionization_integral(const Structure& structure, const FieldSolution& solution,
                               const MaterialConfig& mat) {
  double best = 0.0;
  for (std::size_t c : probe_columns(structure, solution)) {
    best = std::max(best, ionization_integral(column_path(structure, solution, c), mat));
  }
  return best;
}

namespace {

double breakdown_metric(BreakdownMode mode, const Structure& s, const FieldSolution& sol, const MaterialConfig& mat) {
  return mode == BreakdownMode::Fast ? sol.peak_field : max_ionization_integral(s, sol, mat);
}

// Lagrange extrapolation in bias through up to three earlier solutions.
FieldSolution extrapolate(const std::vector<const FieldSolution*>& history, const FieldSolution& last, double bias) {
  FieldSolution g = last;
  std::vector<const FieldSolution*> pts{&last};
  for (const FieldSolution* h : history) {
    if (h != nullptr && pts.size() < 3 && h->bias < pts.back()->bias) pts.push_back(h);
  }
  if (pts.size() < 2) return g;
  g.bias = bias;
  std::vector<double> w(pts.size(), 1.0);
  for (std::size_t a = 0; a < pts.size(); ++a) {
    for (std::size_t b = 0; b < pts.size(); ++b) {
      if (a != b) w[a] *= (bias - pts[b]->bias) / (pts[a]->bias - pts[b]->bias);
    }
  }
  for (std::size_t k = 0; k < g.potential.size(); ++k) {
    double v = 0.0;
    for (std::size_t a = 0; a < pts.size(); ++a) v += w[a] * pts[a]->potential[k];
    g.potential[k] = v;
  }
  for (std::size_t r = 0; r < g.ring_levels.size(); ++r) {
    double v = 0.0;
    for (std::size_t a = 0; a < pts.size(); ++a) v += w[a] * pts[a]->ring_levels[r];
    g.ring_levels[r] = v;
  }
  return g;
}

}  // namespace

RampResult ramp_breakdown(const Structure& structure, const MaterialConfig& mat, BreakdownMode mode,
                          const RampOptions& ramp, const SolverOptions& solver_opts) {
  const auto start = std::chrono::steady_clock::now();
  RampResult result;
  auto stamp = [&] {
    result.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.wall_s = std::max(result.wall_s, 1e-9);
  };
  const double threshold = mode == BreakdownMode::Fast ? mat.e_crit : 1.0;

  std::optional<PoissonSolver> solver;
  try {
    solver.emplace(structure, mat, solver_opts);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::NewtonDiverged) throw;
    stamp();
    return result;
  }
  // Earlier accepted solutions, newest first.
  std::deque<FieldSolution> history;
  auto solve_at = [&](double bias, const FieldSolution& last) -> std::optional<FieldSolution> {
    try {
      if (ramp.warm_start) {
        std::vector<const FieldSolution*> h;
        for (const auto& e : history) h.push_back(&e);
        FieldSolution g = extrapolate(h, last, bias);
        return solver->solve(bias, &g);
      }
      return solver->solve(bias, nullptr);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::NewtonDiverged) throw;
      return std::nullopt;
    }
  };

  FieldSolution last;
  try {
    last = solver->solve(0.0, nullptr);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::NewtonDiverged) throw;
    stamp();
    return result;
  }
  double last_metric = breakdown_metric(mode, structure, last, mat);
  double step = ramp.initial_step_V;

  while (true) {
    const double bias = std::min(last.bias + step, ramp.max_bias_V);
    std::optional<FieldSolution> sol = solve_at(bias, last);
    ++result.bias_steps;
    if (!sol) {
      step *= ramp.backoff;
      if (step < ramp.min_step_V) break;
      continue;
    }
    const double metric = breakdown_metric(mode, structure, *sol, mat);
    if (metric >= threshold) {
      const double t = metric > last_metric ? (threshold - last_metric) / (metric - last_metric) : 1.0;
      result.bv_V = last.bias + std::clamp(t, 0.0, 1.0) * (sol->bias - last.bias);
      result.converged = true;
      result.last_bias_V = last.bias;
      result.last_solution = std::move(last);
      break;
    }
    history.push_front(std::move(last));
    if (history.size() > 2) history.pop_back();
    const double prev_metric = last_metric;
    last = std::move(*sol);
    last_metric = metric;
    result.last_bias_V = last.bias;
    if (last.bias >= ramp.max_bias_V) break;
    step = std::min(step * ramp.growth, ramp.max_step_V);
    if (mode == BreakdownMode::Full && prev_metric > 0.0 && metric > prev_metric) {
      const double rate = std::log(metric / prev_metric) / (last.bias - history.front().bias);
      step = std::min(step, std::log1p(ramp.max_integral_rise / metric) / rate);
      step = std::max(step, ramp.min_step_V);
    }
  }
  if (!result.converged) result.last_solution = std::move(last);
  stamp();
  return result;
}

double Analytic1D::field_at(double y_um) const {
  if (y_um < 0.0) return 0.0;
  const double reach = punch_through ? drift_um : depletion_um;
  if (y_um > reach) return 0.0;
  return std::max(0.0, peak_field - field_slope * y_um * kUmToCm);
}

Analytic1D analytic_1d(const MaterialConfig& mat, double n_d, double drift_um, double bias) {
  Analytic1D a;
  a.drift_um = drift_um;
  a.field_slope = kElementaryCharge * n_d / mat.permittivity();
  const double drift_cm = drift_um * kUmToCm;
  const double width_cm = std::sqrt(2.0 * std::max(bias, 0.0) / a.field_slope);
  if (width_cm <= drift_cm) {
    a.depletion_um = width_cm / kUmToCm;
    a.peak_field = a.field_slope * width_cm;
  } else {
    a.punch_through = true;
    a.depletion_um = drift_um;
    a.peak_field = bias / drift_cm + 0.5 * a.field_slope * drift_cm;
  }
  return a;
}

double analytic_bias_for_peak(const MaterialConfig& mat, double n_d, double drift_um, double peak_field) {
  const double slope = kElementaryCharge * n_d / mat.permittivity();
  const double drift_cm = drift_um * kUmToCm;
  if (peak_field <= slope * drift_cm) return peak_field * peak_field / (2.0 * slope);
  return peak_field * drift_cm - 0.5 * slope * drift_cm * drift_cm;
}

RampResult ideal_1d_breakdown(const MaterialConfig& mat, BreakdownMode mode, const GeometryOptions& geom,
                              const RampOptions& ramp) {
  return ramp_breakdown(extrude_1d(build_ideal_1d(geom)), mat, mode, ramp);
}

MaterialConfig calibrate_alpha(const MaterialConfig& mat, double target_bv, const GeometryOptions& geom,
                               const RampOptions& ramp, const CalibrationOptions& opts) {
  const Structure s = extrude_1d(build_ideal_1d(geom));
  auto bv_for = [&](double b) {
    MaterialConfig m = mat;
    m.alpha_b = b;
    const RampResult r = ramp_breakdown(s, m, BreakdownMode::Full, ramp);
    // A ramp that never reaches the criterion lies above any reachable target.
    return r.bv_V.value_or(std::numeric_limits<double>::infinity());
  };
  auto unreachable = [&](const std::string& why) {
    std::ostringstream os;
    os << "CalibrationUnreachable(target=" << target_bv << " V): " << why;
    return Error(ErrorKind::CalibrationUnreachable, os.str());
  };
  if (!(target_bv > 0.0)) throw unreachable("target must be positive");
  const double tol = opts.relative_tolerance * target_bv;

  double b0 = mat.alpha_b;
  double v0 = bv_for(b0);
  if (std::abs(v0 - target_bv) <= tol) return mat;

  double lo = b0;
  double hi = b0;
  int expansions = 0;
  if (v0 < target_bv) {
    do {
      lo = hi;
      hi *= opts.bracket_factor;
      if (++expansions > opts.max_bracket_expansions) throw unreachable("no upper bracket");
    } while (bv_for(hi) < target_bv);
  } else {
    do {
      hi = lo;
      lo /= opts.bracket_factor;
      if (++expansions > opts.max_bracket_expansions) throw unreachable("no lower bracket");
    } while (bv_for(lo) > target_bv);
  }
  for (int it = 0; it < opts.max_bisections; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double v = bv_for(mid);
    if (std::abs(v - target_bv) <= tol) {
      MaterialConfig out = mat;
      out.alpha_b = mid;
      return out;
    }
    (v < target_bv ? lo : hi) = mid;
  }
  throw unreachable("bisection did not reach tolerance");
}

FieldTables export_field(const Structure& structure, const FieldSolution& solution, double cut_y_um) {
  const auto& g = structure.geometry;
  if (solution.field.size() != g.node_count()) fail(ErrorKind::InvalidArgument, "solution does not match structure");
  if (!(cut_y_um >= g.y_um.front() && cut_y_um <= g.y_um.back())) {
    fail(ErrorKind::OutOfDomain, "OutOfDomain: cut depth " + std::to_string(cut_y_um) + " um outside device");
  }
  FieldTables t;
  t.cut_y_um = cut_y_um;
  t.grid.reserve(g.node_count());
  for (std::size_t i = 0; i < g.nx(); ++i) {
    for (std::size_t j = 0; j < g.ny(); ++j) t.grid.push_back({g.x_um[i], g.y_um[j], solution.field[g.node(i, j)]});
  }
  auto it = std::upper_bound(g.y_um.begin(), g.y_um.end(), cut_y_um);
  std::size_t j = it == g.y_um.begin() ? 0 : static_cast<std::size_t>(it - g.y_um.begin()) - 1;
  j = std::min(j, g.ny() - 2);
  const double w = (cut_y_um - g.y_um[j]) / (g.y_um[j + 1] - g.y_um[j]);
  t.cut.reserve(g.nx());
  for (std::size_t i = 0; i < g.nx(); ++i) {
    const double e = (1.0 - w) * solution.field[g.node(i, j)] + w * solution.field[g.node(i, j + 1)];
    t.cut.push_back({g.x_um[i], e});
  }
  return t;
}

void write_field_csv(const FieldTables& tables, const std::string& grid_path, const std::string& cut_path) {
  std::ofstream grid(grid_path);
  std::ofstream cut(cut_path);
  if (!grid || !cut) fail(ErrorKind::MissingFile, "cannot open field export for writing");
  grid << std::setprecision(17) << "x_um,y_um,E_Vcm\n";
  for (const auto& r : tables.grid) grid << r.x_um << ',' << r.y_um << ',' << r.field << '\n';
  cut << std::setprecision(17) << "x_um,E_Vcm\n";
  for (const auto& r : tables.cut) cut << r.x_um << ',' << r.field << '\n';
}

}  // namespace bvforge
