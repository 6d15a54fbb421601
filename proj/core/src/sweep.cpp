#include "bvforge/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <mutex>
#include <thread>

#include "bvforge/calibration.hpp"
#include "bvforge/error.hpp"
#include "bvforge/io.hpp"
#include "bvforge/rng.hpp"

namespace bvforge {

std::vector<DesignVector> sample_designs(const DesignBounds& bounds, std::size_t count, std::uint64_t seed) {
  if (count < 1) fail(ErrorKind::InvalidArgument, "sample_designs: count must be >= 1");
  if (bounds.n_max < bounds.n_min) fail(ErrorKind::InvalidArgument, "sample_designs: n_max < n_min");
  auto draw = [&](std::size_t i, std::uint64_t v, const Interval& r) {
    return r.lo + counter_uniform(seed, i, v) * (r.hi - r.lo);
  };
  const auto span = static_cast<std::uint64_t>(bounds.n_max - bounds.n_min + 1);
  std::vector<DesignVector> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    DesignVector dv;
    dv.s_um = draw(i, 0, bounds.s_um);
    dv.w_um = draw(i, 1, bounds.w_um);
    dv.d_um = draw(i, 2, bounds.d_um);
    const double u = counter_uniform(seed, i, 3);
    dv.n_rings = bounds.n_min + static_cast<int>(std::min<std::uint64_t>(
                                    span - 1, static_cast<std::uint64_t>(u * static_cast<double>(span))));
    dv.sigma_um = draw(i, 4, bounds.sigma_um);
    out.push_back(dv);
  }
  return out;
}

BreakdownRecord simulate_design(std::size_t id, const DesignVector& dv, BreakdownMode mode,
                                const SimulationSetup& setup) {
  const auto start = std::chrono::steady_clock::now();
  BreakdownRecord rec;
  rec.id = id;
  rec.design = dv;
  rec.mode = mode;
  rec.config_hash = setup.config_hash;
  try {
    const Structure s = build_structure(dv, setup.geometry);
    const RampResult r = ramp_breakdown(s, setup.material, mode, setup.ramp, setup.solver);
    rec.bv_V = r.bv_V;
    rec.converged = r.converged;
    rec.bias_steps = r.bias_steps;
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::GridTooCoarse && e.kind() != ErrorKind::OutOfDomain &&
        e.kind() != ErrorKind::NewtonDiverged) {
      throw;
    }
    rec.converged = false;
  }
  rec.wall_s = std::max(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(), 1e-9);
  return rec;
}

void sort_records(std::vector<BreakdownRecord>& records) {
  std::stable_sort(records.begin(), records.end(), [](const BreakdownRecord& a, const BreakdownRecord& b) {
    if (a.id != b.id) return a.id < b.id;
    return static_cast<int>(a.mode) < static_cast<int>(b.mode);
  });
}

SweepResult run_sweep(const std::vector<DesignVector>& designs, const SimulationSetup& setup,
                      const SweepOptions& opts, std::size_t first_id) {
  for (const auto& dv : designs) validate_design(dv, opts.bounds);
  if (opts.modes.empty()) fail(ErrorKind::InvalidArgument, "run_sweep: no modes requested");
  SweepResult res;
  auto& m = res.manifest;
  m.seed = opts.seed;
  m.count = designs.size();
  m.bounds = opts.bounds;
  m.modes = opts.modes;
  m.worker_count = std::max(1u, opts.workers);
  m.config_hash = setup.config_hash;
  m.started_utc = utc_timestamp();

  const std::size_t tasks = designs.size() * opts.modes.size();
  res.records.resize(tasks);
  std::ofstream sink;
  if (!opts.sink_path.empty()) {
    sink.open(opts.sink_path, std::ios::app);
    if (!sink) fail(ErrorKind::MissingFile, "MissingFile: cannot open sink " + opts.sink_path);
  }
  std::mutex sink_lock;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    while (true) {
      const std::size_t t = next.fetch_add(1);
      if (t >= tasks) return;
      const std::size_t d = t / opts.modes.size();
      const BreakdownMode mode = opts.modes[t % opts.modes.size()];
      BreakdownRecord rec = simulate_design(first_id + d, designs[d], mode, setup);
      std::lock_guard<std::mutex> lock(sink_lock);
      if (sink) {
        sink << format_record_row(rec) << '\n';
        sink.flush();
      }
      if (opts.on_record) opts.on_record(rec);
      res.records[t] = std::move(rec);
    }
  };
  std::vector<std::thread> pool;
  for (unsigned w = 1; w < m.worker_count; ++w) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  sort_records(res.records);
  m.finished_utc = utc_timestamp();
  return res;
}

SpeedupStats speedup_stats(const std::vector<BreakdownRecord>& records) {
  SpeedupStats st;
  const auto pairs = pair_records(records, true);
  if (pairs.empty()) fail(ErrorKind::MissingPair, "MissingPair: no paired records");
  double sum = 0.0;
  st.min_speedup = std::numeric_limits<double>::infinity();
  for (const auto& p : pairs) {
    SpeedupRow row;
    row.id = p.id;
    row.fast_wall_s = p.fast->wall_s;
    row.full_wall_s = p.full->wall_s;
    row.ratio = row.full_wall_s / row.fast_wall_s;
    sum += row.ratio;
    st.max_speedup = std::max(st.max_speedup, row.ratio);
    st.min_speedup = std::min(st.min_speedup, row.ratio);
    st.rows.push_back(row);
  }
  st.mean_speedup = sum / static_cast<double>(st.rows.size());
  return st;
}

}  // namespace bvforge
