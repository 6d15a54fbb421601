#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "bvforge/device.hpp"
#include "bvforge/field_solver.hpp"

namespace bvforge {

/// Uniform designs; variable v of design i uses counter_uniform(seed, i, v), so
/// any prefix or subset regenerates identically. n_rings is uniform over the
/// integers of [n_min, n_max].
std::vector<DesignVector> sample_designs(const DesignBounds& bounds, std::size_t count, std::uint64_t seed);

/// Everything a worker needs to turn a design into a record.
struct SimulationSetup {
  MaterialConfig material{};
  GeometryOptions geometry{};
  RampOptions ramp{};
  SolverOptions solver{};
  std::string config_hash;
};

/// Builds the structure and ramps it. Geometry and solver failures become
/// non-converged records.
BreakdownRecord simulate_design(std::size_t id, const DesignVector& dv, BreakdownMode mode,
                                const SimulationSetup& setup);

struct SweepOptions {
  std::vector<BreakdownMode> modes{BreakdownMode::Fast};
  unsigned workers = 1;
  std::uint64_t seed = 0;         // echoed into the manifest
  DesignBounds bounds{};          // echoed into the manifest
  std::string sink_path;          // append-only CSV written as records finish; empty disables
  std::function<void(const BreakdownRecord&)> on_record;  // called under the sink lock
};

struct SweepManifest {
  std::uint64_t seed = 0;
  std::size_t count = 0;
  DesignBounds bounds{};
  std::vector<BreakdownMode> modes;
  unsigned worker_count = 1;
  std::string config_hash;
  std::string config_json;  // resolved configuration snapshot
  std::string started_utc;
  std::string finished_utc;
  std::string records_file;
};

struct SweepResult {
  std::vector<BreakdownRecord> records;  // sorted by (id, mode)
  SweepManifest manifest;
};

/// Runs every (design, mode) pair on a pool of `workers` threads. Design i keeps
/// id `first_id + i`.
SweepResult run_sweep(const std::vector<DesignVector>& designs, const SimulationSetup& setup,
                      const SweepOptions& opts, std::size_t first_id = 0);

/// Sort key used for campaign output.
void sort_records(std::vector<BreakdownRecord>& records);

struct SpeedupRow {
  std::size_t id = 0;
  double fast_wall_s = 0.0;
  double full_wall_s = 0.0;
  double ratio = 0.0;
};

struct SpeedupStats {
  double mean_speedup = 0.0;
  double max_speedup = 0.0;
  double min_speedup = 0.0;
  std::vector<SpeedupRow> rows;
};

/// full/fast wall-time ratios over ids present in both modes. Throws MissingPair
/// if any id lacks one of the modes.
SpeedupStats speedup_stats(const std::vector<BreakdownRecord>& records);

}  // namespace bvforge
