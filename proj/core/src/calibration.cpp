#include "bvforge/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

#include "bvforge/error.hpp"

namespace bvforge {

LinearFit fit_linear(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) fail(ErrorKind::InvalidArgument, "fit_linear: x and y differ in length");
  const std::size_t n = x.size();
  if (n < 2) fail(ErrorKind::DegenerateX, "DegenerateX: need at least two points");
  double sx = 0.0, sy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sx += x[i];
    sy += y[i];
  }
  const double xm = sx / static_cast<double>(n);
  const double ym = sy / static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - xm;
    sxx += dx * dx;
    sxy += dx * (y[i] - ym);
  }
  if (!(sxx > 0.0)) fail(ErrorKind::DegenerateX, "DegenerateX: all x values are equal");
  LinearFit f;
  f.n = n;
  f.x_mean = xm;
  f.s_xx = sxx;
  f.slope = sxy / sxx;
  f.intercept = ym - f.slope * xm;
  if (n > 2) {
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = y[i] - f.predict(x[i]);
      ss += r * r;
    }
    f.resid_std = std::sqrt(ss / static_cast<double>(n - 2));
  }
  return f;
}

namespace {

// Continued fraction for the incomplete beta (modified Lentz).
double beta_fraction(double a, double b, double x) {
  constexpr double tiny = 1e-300;
  constexpr double eps = 1e-16;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 10000; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < eps) break;
  }
  return h;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) fail(ErrorKind::InvalidArgument, "incomplete_beta: a and b must be > 0");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_fraction(a, b, x) / a;
  return 1.0 - front * beta_fraction(b, a, 1.0 - x) / b;
}

double student_t_cdf(double t, double dof) {
  if (!(dof > 0.0)) fail(ErrorKind::InvalidArgument, "student_t_cdf: dof must be > 0");
  if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
  const double tail = 0.5 * incomplete_beta(0.5 * dof, 0.5, dof / (dof + t * t));
  return t > 0.0 ? 1.0 - tail : tail;
}

double student_t_quantile(double p, double dof) {
  if (!(p > 0.0 && p < 1.0)) fail(ErrorKind::InvalidArgument, "student_t_quantile: p must lie in (0, 1)");
  if (p == 0.5) return 0.0;
  double lo = -1.0, hi = 1.0;
  while (student_t_cdf(lo, dof) > p) lo *= 2.0;
  while (student_t_cdf(hi, dof) < p) hi *= 2.0;
  for (int it = 0; it < 400 && hi - lo > 1e-13 * std::max(1.0, std::abs(lo)); ++it) {
    const double mid = 0.5 * (lo + hi);
    (student_t_cdf(mid, dof) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

Interval prediction_interval(const LinearFit& fit, double x, double level) {
  if (fit.n < 3) fail(ErrorKind::InsufficientPoints, "InsufficientPoints: prediction interval needs n >= 3");
  if (!(level > 0.0 && level < 1.0)) fail(ErrorKind::InvalidArgument, "level must lie in (0, 1)");
  const double y = fit.predict(x);
  if (fit.resid_std == 0.0) return {y, y};
  const double n = static_cast<double>(fit.n);
  const double t = student_t_quantile(0.5 * (1.0 + level), n - 2.0);
  const double dx = x - fit.x_mean;
  const double half = t * fit.resid_std * std::sqrt(1.0 + 1.0 / n + dx * dx / fit.s_xx);
  return {y - half, y + half};
}

double screening_threshold(const LinearFit& fit, double high_bv, double level, double x_lo, double x_hi) {
  if (!(fit.slope > 0.0)) fail(ErrorKind::InvalidArgument, "screening_threshold needs a positive slope");
  auto unreachable = [&] {
    std::ostringstream os;
    os << "NotReachable(high_bv=" << high_bv << " V): no fast BV in [" << x_lo << ", " << x_hi << "] qualifies";
    return Error(ErrorKind::NotReachable, os.str());
  };
  if (fit.resid_std == 0.0) {
    const double x = (high_bv - fit.intercept) / fit.slope;
    if (x > x_hi) throw unreachable();
    return std::max(x, x_lo);
  }
  auto upper = [&](double x) { return prediction_interval(fit, x, level).hi; };
  if (upper(x_hi) < high_bv) throw unreachable();
  if (upper(x_lo) >= high_bv) return x_lo;
  double lo = x_lo, hi = x_hi;
  for (int it = 0; it < 200 && hi - lo > 1e-9; ++it) {
    const double mid = 0.5 * (lo + hi);
    (upper(mid) >= high_bv ? hi : lo) = mid;
  }
  return hi;
}

std::vector<PairedRecord> pair_records(const std::vector<BreakdownRecord>& records, bool require_both) {
  std::map<std::size_t, PairedRecord> by_id;
  for (const auto& r : records) {
    auto& p = by_id[r.id];
    p.id = r.id;
    (r.mode == BreakdownMode::Fast ? p.fast : p.full) = r;
  }
  std::vector<PairedRecord> out;
  std::ostringstream missing;
  std::size_t missing_count = 0;
  for (auto& [id, p] : by_id) {
    if (require_both && (!p.fast || !p.full)) {
      if (missing_count++ < 10) missing << ' ' << id;
      continue;
    }
    out.push_back(std::move(p));
  }
  if (missing_count > 0) {
    fail(ErrorKind::MissingPair, "MissingPair: " + std::to_string(missing_count) + " ids lack a mode:" + missing.str());
  }
  return out;
}

ScreeningReport screening_report(const std::vector<PairedRecord>& records, const std::vector<double>& defs,
                                 const LinearFit& fit, double level) {
  ScreeningReport rep;
  rep.level = level;
  rep.campaign_size = records.size();
  double x_lo = std::numeric_limits<double>::infinity();
  double x_hi = -x_lo;
  for (const auto& p : records) {
    if (p.fast && p.fast->bv_V) {
      x_lo = std::min(x_lo, *p.fast->bv_V);
      x_hi = std::max(x_hi, *p.fast->bv_V);
    }
  }
  for (double def : defs) {
    ScreeningRow row;
    row.high_bv = def;
    row.threshold = std::numeric_limits<double>::quiet_NaN();
    if (x_lo <= x_hi) {
      try {
        row.threshold = screening_threshold(fit, def, level, x_lo, x_hi);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::NotReachable) throw;
      }
    }
    std::size_t full_runs = 0, full_high = 0;
    std::ostringstream unverified;
    std::size_t unverified_count = 0;
    for (const auto& p : records) {
      if (p.full) {
        ++full_runs;
        if (p.full->bv_V && *p.full->bv_V >= def) ++full_high;
      }
      if (std::isnan(row.threshold) || !p.fast || !p.fast->bv_V || *p.fast->bv_V < row.threshold) continue;
      ++row.fast_search_space_count;
      if (!p.full) {
        if (unverified_count++ < 10) unverified << ' ' << p.id;
        continue;
      }
      if (p.full->bv_V && *p.full->bv_V >= def) ++row.verified_high_count;
    }
    if (unverified_count > 0) {
      fail(ErrorKind::MissingVerification, "MissingVerification: " + std::to_string(unverified_count) +
                                               " screened designs have no full run:" + unverified.str());
    }
    const double rate = full_runs > 0 ? static_cast<double>(full_high) / static_cast<double>(full_runs) : 0.0;
    row.full_only_count = rate * static_cast<double>(row.fast_search_space_count);
    row.gain_ratio = row.full_only_count > 0.0 ? static_cast<double>(row.verified_high_count) / row.full_only_count : 0.0;
    rep.rows.push_back(row);
  }
  return rep;
}

void write_screening_csv(const ScreeningReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::MissingFile, "MissingFile: cannot write " + path);
  out << std::setprecision(17);
  out << "high_bv_V,threshold_V,fast_search_space,verified_high,full_only_baseline,gain\n";
  for (const auto& r : report.rows) {
    out << r.high_bv << ',';
    if (!std::isnan(r.threshold)) out << r.threshold;
    out << ',' << r.fast_search_space_count << ',' << r.verified_high_count << ',' << r.full_only_count << ','
        << r.gain_ratio << '\n';
  }
}

}  // namespace bvforge
