#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bvforge/device.hpp"
#include "bvforge/field_solver.hpp"
#include "bvforge/inverse.hpp"
#include "bvforge/surrogate.hpp"
#include "bvforge/sweep.hpp"

namespace bvforge {

struct SweepSettings {
  std::size_t count = 300;
  std::uint64_t seed = 42;
  unsigned workers = 1;
  DesignBounds bounds{};
  std::vector<BreakdownMode> modes{BreakdownMode::Fast};
  bool operator==(const SweepSettings&) const = default;
};

struct CalibrationSettings {
  double target_bv = 2100.0;
  double level = 0.95;
  std::vector<double> high_bv{1400.0, 1300.0, 1250.0};
  CalibrationOptions options{};
};

/// Everything a run needs. The DE box comes from `sweep.bounds`.
struct PipelineConfig {
  std::string profile = "desk";
  MaterialConfig material{};
  GeometryOptions geometry{};
  RampOptions ramp{};
  SolverOptions solver{};
  SweepSettings sweep{};
  TrainConfig training{};
  DEConfig de{};
  CalibrationSettings calibration{};
};

/// Built-in defaults for "desk" or "full". Throws InvalidArgument otherwise.
PipelineConfig profile_defaults(const std::string& profile);

/// Strict parse: unknown keys and wrong types throw SchemaMismatch naming the
/// offending path. Missing keys take the defaults of the named profile.
PipelineConfig parse_config(const std::string& json_text);
/// Throws MissingFile when the file cannot be read.
PipelineConfig load_config(const std::string& path);

/// Canonical, fully resolved JSON (sorted keys).
std::string config_to_json(const PipelineConfig& cfg, int indent = 2);
/// FNV-1a 64 of the compact canonical JSON, as 16 hex digits.
std::string config_hash(const PipelineConfig& cfg);
std::string fnv1a_hex(const std::string& bytes);

SimulationSetup make_setup(const PipelineConfig& cfg);
/// Validates every section; throws InvalidArgument naming the field.
void validate_config(const PipelineConfig& cfg);

}  // namespace bvforge
