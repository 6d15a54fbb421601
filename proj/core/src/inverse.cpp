#include "bvforge/inverse.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "bvforge/error.hpp"
#include "bvforge/rng.hpp"

namespace bvforge {
namespace {

enum Stream : std::uint64_t { kInit = 1, kPick = 2, kForced = 3, kCross = 4 };

std::string point_text(const std::vector<double>& x) {
  std::ostringstream os;
  os.precision(17);
  os << '(';
  for (std::size_t i = 0; i < x.size(); ++i) os << (i ? ", " : "") << x[i];
  os << ')';
  return os.str();
}

}  // namespace

void DEConfig::validate() const {
  if (!(f > 0.0 && f <= 2.0)) fail(ErrorKind::InvalidArgument, "de.F must lie in (0, 2]");
  if (!(cr >= 0.0 && cr <= 1.0)) fail(ErrorKind::InvalidArgument, "de.CR must lie in [0, 1]");
  if (population < 4) fail(ErrorKind::InvalidArgument, "de.population must be >= 4");
  if (max_generations < 0) fail(ErrorKind::InvalidArgument, "de.max_generations must be >= 0");
  if (!(tolerance >= 0.0)) fail(ErrorKind::InvalidArgument, "de.tolerance must be >= 0");
  if (bounds.empty()) fail(ErrorKind::InvalidArgument, "de.bounds is empty");
  for (const auto& b : bounds) {
    if (!(b.lo <= b.hi) || !std::isfinite(b.lo) || !std::isfinite(b.hi)) {
      fail(ErrorKind::InvalidArgument, "de.bounds has an inverted or non-finite interval");
    }
  }
  if (!integer_mask.empty() && integer_mask.size() != bounds.size()) {
    fail(ErrorKind::InvalidArgument, "de.integer_mask length differs from bounds");
  }
}

DEResult differential_evolution(const BatchObjective& objective, const DEConfig& cfg,
                                const std::function<void(const std::vector<double>&)>& observer) {
  cfg.validate();
  const std::size_t dim = cfg.bounds.size();
  const auto np = static_cast<std::size_t>(cfg.population);
  auto is_int = [&](std::size_t d) { return !cfg.integer_mask.empty() && cfg.integer_mask[d]; };
  auto key = [&](std::uint64_t gen, std::uint64_t slot) { return (gen << 24) ^ slot; };
  auto u = [&](Stream s, std::uint64_t gen, std::uint64_t slot, std::uint64_t k) {
    return counter_uniform(counter_u64(cfg.seed, s, key(gen, slot)), k, 0);
  };
  auto pick = [&](std::uint64_t gen, std::uint64_t slot, std::uint64_t k, std::size_t n) {
    return std::min(n - 1, static_cast<std::size_t>(u(kPick, gen, slot, k) * static_cast<double>(n)));
  };

  // Rounded copy that the objective sees; integer genes stay inside the box.
  auto realise = [&](const std::vector<double>& gene) {
    std::vector<double> x = gene;
    for (std::size_t d = 0; d < dim; ++d) {
      if (!is_int(d)) continue;
      const double lo = std::ceil(cfg.bounds[d].lo), hi = std::floor(cfg.bounds[d].hi);
      x[d] = std::clamp(std::nearbyint(x[d]), lo, hi);
    }
    return x;
  };

  DEResult res;
  auto evaluate = [&](const std::vector<std::vector<double>>& genes) {
    std::vector<std::vector<double>> pts;
    pts.reserve(genes.size());
    for (const auto& g : genes) {
      pts.push_back(realise(g));
      if (observer) observer(pts.back());
    }
    std::vector<double> v = objective(pts);
    if (v.size() != pts.size()) fail(ErrorKind::InvalidArgument, "objective returned the wrong number of values");
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!std::isfinite(v[i])) fail(ErrorKind::NonFiniteObjective, "NonFiniteObjective at " + point_text(pts[i]));
    }
    res.evaluations += v.size();
    return v;
  };

  std::vector<std::vector<double>> pop(np, std::vector<double>(dim));
  for (std::size_t i = 0; i < np; ++i) {
    for (std::size_t d = 0; d < dim; ++d) {
      const auto& b = cfg.bounds[d];
      pop[i][d] = b.lo + u(kInit, 0, i, d) * (b.hi - b.lo);
    }
  }
  std::vector<double> fit = evaluate(pop);

  auto best_index = [&] { return static_cast<std::size_t>(std::min_element(fit.begin(), fit.end()) - fit.begin()); };
  auto spread_ok = [&] {
    double mean = 0.0;
    for (double v : fit) mean += v;
    mean /= static_cast<double>(np);
    double var = 0.0;
    for (double v : fit) var += (v - mean) * (v - mean);
    return std::sqrt(var / static_cast<double>(np)) <= cfg.tolerance * std::abs(mean);
  };
  res.best_trace.push_back(fit[best_index()]);

  std::vector<std::vector<double>> trial(np, std::vector<double>(dim));
  int gen = 0;
  while (gen < cfg.max_generations && !(res.converged = spread_ok())) {
    ++gen;
    const auto g = static_cast<std::uint64_t>(gen);
    for (std::size_t i = 0; i < np; ++i) {
      // Three distinct members, all different from i.
      std::size_t r[3];
      std::uint64_t k = 0;
      for (int m = 0; m < 3; ++m) {
        std::size_t c;
        do {
          c = pick(g, i, k++, np);
        } while (c == i || (m > 0 && c == r[0]) || (m > 1 && c == r[1]));
        r[m] = c;
      }
      const std::size_t forced = std::min(dim - 1, static_cast<std::size_t>(u(kForced, g, i, 0) * static_cast<double>(dim)));
      for (std::size_t d = 0; d < dim; ++d) {
        if (d == forced || u(kCross, g, i, d) < cfg.cr) {
          const double v = pop[r[0]][d] + cfg.f * (pop[r[1]][d] - pop[r[2]][d]);
          trial[i][d] = std::clamp(v, cfg.bounds[d].lo, cfg.bounds[d].hi);
        } else {
          trial[i][d] = pop[i][d];
        }
      }
    }
    const std::vector<double> tv = evaluate(trial);
    for (std::size_t i = 0; i < np; ++i) {
      if (tv[i] <= fit[i]) {
        pop[i] = trial[i];
        fit[i] = tv[i];
      }
    }
    res.best_trace.push_back(fit[best_index()]);
  }
  const std::size_t b = best_index();
  res.best = realise(pop[b]);
  res.best_value = fit[b];
  res.generations = gen;
  return res;
}

DEResult differential_evolution(const Objective& objective, const DEConfig& cfg,
                                const std::function<void(const std::vector<double>&)>& observer) {
  BatchObjective batch = [&](const std::vector<std::vector<double>>& pts) {
    std::vector<double> v;
    v.reserve(pts.size());
    for (const auto& p : pts) v.push_back(objective(p));
    return v;
  };
  return differential_evolution(batch, cfg, observer);
}

DEConfig design_de_config(DEConfig cfg, const DesignBounds& bounds) {
  const auto box = bounds.as_intervals();
  cfg.bounds.assign(box.begin(), box.end());
  cfg.integer_mask.assign(kDesignDims, false);
  cfg.integer_mask[3] = true;
  return cfg;
}

InverseDesignResult inverse_design(const MlpModel& model, double v_target, const DEConfig& cfg,
                                   const DesignBounds& bounds) {
  if (!(v_target >= 0.0) || !std::isfinite(v_target)) fail(ErrorKind::InvalidArgument, "target BV must be finite and >= 0");
  const DEConfig de = design_de_config(cfg, bounds);
  BatchObjective obj = [&](const std::vector<std::vector<double>>& pts) {
    std::vector<Features> raw(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) std::copy(pts[i].begin(), pts[i].end(), raw[i].begin());
    std::vector<double> v = predict_batch(model, raw);
    for (double& y : v) y = std::abs(y - v_target);
    return v;
  };
  const DEResult r = differential_evolution(obj, de);
  InverseDesignResult out;
  Features f{};
  std::copy(r.best.begin(), r.best.end(), f.begin());
  out.design = from_array(f);
  out.surrogate_bv = predict(model, out.design);
  out.objective_residual = std::abs(out.surrogate_bv - v_target);
  out.generations_used = r.generations;
  out.v_target = v_target;
  out.evaluations = r.evaluations;
  out.converged = r.converged;
  return out;
}

VerificationRecord verify_design(const InverseDesignResult& result, const LinearFit& fit,
                                 const SimulationSetup& setup, double level) {
  VerificationRecord v;
  v.design = result.design;
  v.v_target = result.v_target;
  v.surrogate_bv = result.surrogate_bv;
  const Interval band = prediction_interval(fit, result.v_target, level);
  v.expected_lo = band.lo;
  v.expected_hi = band.hi;
  const BreakdownRecord rec = simulate_design(0, result.design, BreakdownMode::Full, setup);
  v.wall_s = rec.wall_s;
  v.verified = rec.converged && rec.bv_V.has_value();
  if (v.verified) {
    v.full_bv = rec.bv_V;
    v.in_expected_range = *v.full_bv >= v.expected_lo && *v.full_bv <= v.expected_hi;
  }
  return v;
}

}  // namespace bvforge
