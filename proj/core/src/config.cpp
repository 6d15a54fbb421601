#include "bvforge/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "bvforge/error.hpp"
#include "json_util.hpp"

namespace bvforge {

using detail::json;

namespace detail {

json parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::MissingFile, "MissingFile: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return json::parse(ss.str());
  } catch (const json::parse_error& e) {
    schema(path, std::string("invalid JSON: ") + e.what());
  }
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::MissingFile, "MissingFile: cannot write " + path);
  out << text;
  if (!out) fail(ErrorKind::MissingFile, "MissingFile: write failed for " + path);
}

}  // namespace detail

namespace {

using namespace detail;

json material_json(const MaterialConfig& m) {
  return {{"eps_r", m.eps_r},     {"e_crit", m.e_crit}, {"alpha_a", m.alpha_a},
          {"alpha_b", m.alpha_b}, {"n_i", m.n_i},       {"temperature", m.temperature}};
}

void read_material(const json& j, MaterialConfig& m, const std::string& p) {
  only_keys(j, p, {"eps_r", "e_crit", "alpha_a", "alpha_b", "n_i", "temperature"});
  read(j, "eps_r", m.eps_r, p);
  read(j, "e_crit", m.e_crit, p);
  read(j, "alpha_a", m.alpha_a, p);
  read(j, "alpha_b", m.alpha_b, p);
  read(j, "n_i", m.n_i, p);
  read(j, "temperature", m.temperature, p);
}

json geometry_json(const GeometryOptions& g) {
  return {{"anode_half_width_um", g.anode_half_width_um},
          {"anode_depth_um", g.anode_depth_um},
          {"drift_thickness_um", g.drift_thickness_um},
          {"drift_doping", g.drift_doping},
          {"peak_acceptor", g.peak_acceptor},
          {"edge_margin_um", g.edge_margin_um},
          {"margin_sigma_factor", g.margin_sigma_factor},
          {"max_domain_width_um", g.max_domain_width_um},
          {"junction_spacing_um", g.junction_spacing_um},
          {"max_spacing_um", g.max_spacing_um},
          {"grading", g.grading},
          {"limits", {{"fine_um", g.limits.fine_um}, {"coarse_um", g.limits.coarse_um}, {"ratio", g.limits.ratio}}}};
}

void read_geometry(const json& j, GeometryOptions& g, const std::string& p) {
  only_keys(j, p,
            {"anode_half_width_um", "anode_depth_um", "drift_thickness_um", "drift_doping", "peak_acceptor",
             "edge_margin_um", "margin_sigma_factor", "max_domain_width_um", "junction_spacing_um", "max_spacing_um",
             "grading", "limits"});
  read(j, "anode_half_width_um", g.anode_half_width_um, p);
  read(j, "anode_depth_um", g.anode_depth_um, p);
  read(j, "drift_thickness_um", g.drift_thickness_um, p);
  read(j, "drift_doping", g.drift_doping, p);
  read(j, "peak_acceptor", g.peak_acceptor, p);
  read(j, "edge_margin_um", g.edge_margin_um, p);
  read(j, "margin_sigma_factor", g.margin_sigma_factor, p);
  read(j, "max_domain_width_um", g.max_domain_width_um, p);
  read(j, "junction_spacing_um", g.junction_spacing_um, p);
  read(j, "max_spacing_um", g.max_spacing_um, p);
  read(j, "grading", g.grading, p);
  if (j.contains("limits")) {
    const json& l = j["limits"];
    const std::string lp = p + ".limits";
    only_keys(l, lp, {"fine_um", "coarse_um", "ratio"});
    read(l, "fine_um", g.limits.fine_um, lp);
    read(l, "coarse_um", g.limits.coarse_um, lp);
    read(l, "ratio", g.limits.ratio, lp);
  }
}

json ramp_json(const RampOptions& r) {
  return {{"initial_step_V", r.initial_step_V}, {"growth", r.growth},
          {"max_step_V", r.max_step_V},         {"backoff", r.backoff},
          {"min_step_V", r.min_step_V},         {"max_bias_V", r.max_bias_V},
          {"max_integral_rise", r.max_integral_rise}, {"warm_start", r.warm_start}};
}

void read_ramp(const json& j, RampOptions& r, const std::string& p) {
  only_keys(j, p, {"initial_step_V", "growth", "max_step_V", "backoff", "min_step_V", "max_bias_V",
                   "max_integral_rise", "warm_start"});
  read(j, "initial_step_V", r.initial_step_V, p);
  read(j, "growth", r.growth, p);
  read(j, "max_step_V", r.max_step_V, p);
  read(j, "backoff", r.backoff, p);
  read(j, "min_step_V", r.min_step_V, p);
  read(j, "max_bias_V", r.max_bias_V, p);
  read(j, "max_integral_rise", r.max_integral_rise, p);
  read(j, "warm_start", r.warm_start, p);
}

json solver_json(const SolverOptions& s) {
  return {{"update_tolerance_V", s.update_tolerance_V},
          {"level_tolerance_V", s.level_tolerance_V},
          {"max_newton_iterations", s.max_newton_iterations},
          {"max_line_search_halvings", s.max_line_search_halvings},
          {"max_exponent", s.max_exponent},
          {"punch_through_density", s.punch_through_density}};
}

void read_solver(const json& j, SolverOptions& s, const std::string& p) {
  only_keys(j, p, {"update_tolerance_V", "level_tolerance_V", "max_newton_iterations", "max_line_search_halvings",
                   "max_exponent", "punch_through_density"});
  read(j, "update_tolerance_V", s.update_tolerance_V, p);
  read(j, "level_tolerance_V", s.level_tolerance_V, p);
  read(j, "max_newton_iterations", s.max_newton_iterations, p);
  read(j, "max_line_search_halvings", s.max_line_search_halvings, p);
  read(j, "max_exponent", s.max_exponent, p);
  read(j, "punch_through_density", s.punch_through_density, p);
}

json sweep_json(const SweepSettings& s) {
  json modes = json::array();
  for (auto m : s.modes) modes.push_back(to_string(m));
  return {{"count", s.count}, {"seed", s.seed}, {"workers", s.workers}, {"bounds", bounds_json(s.bounds)},
          {"modes", modes}};
}

void read_sweep(const json& j, SweepSettings& s, const std::string& p) {
  only_keys(j, p, {"count", "seed", "workers", "bounds", "modes"});
  read(j, "count", s.count, p);
  read_u64(j, "seed", s.seed, p);
  read(j, "workers", s.workers, p);
  if (j.contains("bounds")) read_bounds(j["bounds"], s.bounds, p + ".bounds");
  if (j.contains("modes")) {
    const json& m = j["modes"];
    if (!m.is_array()) schema(p + ".modes", "expected an array");
    s.modes.clear();
    for (std::size_t i = 0; i < m.size(); ++i) {
      const std::string mp = p + ".modes[" + std::to_string(i) + "]";
      const std::string text = as_string(m[i], mp);
      if (text != "fast" && text != "full") schema(mp, "expected \"fast\" or \"full\"");
      s.modes.push_back(parse_mode(text));
    }
  }
}

}  // namespace

namespace detail {

json training_json(const TrainConfig& t) {
  return {{"hidden", t.hidden},           {"max_epochs", t.max_epochs},     {"batch", t.batch},
          {"learning_rate", t.learning_rate}, {"lambda", t.lambda},         {"lambda_grid", t.lambda_grid},
          {"lambda_folds", t.lambda_folds}, {"seed", t.seed},               {"val_fraction", t.val_fraction},
          {"patience", t.patience},       {"bn_momentum", t.bn_momentum},   {"bn_epsilon", t.bn_epsilon},
          {"folds", t.folds},             {"repeats", t.repeats},           {"test_fraction", t.test_fraction}};
}

void read_training(const json& j, TrainConfig& t, const std::string& p) {
  only_keys(j, p, {"hidden", "max_epochs", "batch", "learning_rate", "lambda", "lambda_grid", "lambda_folds", "seed",
                   "val_fraction", "patience", "bn_momentum", "bn_epsilon", "folds", "repeats", "test_fraction"});
  read(j, "hidden", t.hidden, p);
  read(j, "max_epochs", t.max_epochs, p);
  read(j, "batch", t.batch, p);
  read(j, "learning_rate", t.learning_rate, p);
  read(j, "lambda", t.lambda, p);
  read(j, "lambda_grid", t.lambda_grid, p);
  read(j, "lambda_folds", t.lambda_folds, p);
  read_u64(j, "seed", t.seed, p);
  read(j, "val_fraction", t.val_fraction, p);
  read(j, "patience", t.patience, p);
  read(j, "bn_momentum", t.bn_momentum, p);
  read(j, "bn_epsilon", t.bn_epsilon, p);
  read(j, "folds", t.folds, p);
  read(j, "repeats", t.repeats, p);
  read(j, "test_fraction", t.test_fraction, p);
}

json de_json(const DEConfig& d) {
  return {{"population", d.population}, {"F", d.f},       {"CR", d.cr}, {"max_generations", d.max_generations},
          {"tolerance", d.tolerance},   {"seed", d.seed}};
}

void read_de(const json& j, DEConfig& d, const std::string& p) {
  only_keys(j, p, {"population", "F", "CR", "max_generations", "tolerance", "seed"});
  read(j, "population", d.population, p);
  read(j, "F", d.f, p);
  read(j, "CR", d.cr, p);
  read(j, "max_generations", d.max_generations, p);
  read(j, "tolerance", d.tolerance, p);
  read_u64(j, "seed", d.seed, p);
}

json config_json(const PipelineConfig& c) {
  const auto& cal = c.calibration;
  return {{"profile", c.profile},
          {"material", material_json(c.material)},
          {"geometry", geometry_json(c.geometry)},
          {"ramp", ramp_json(c.ramp)},
          {"solver", solver_json(c.solver)},
          {"sweep", sweep_json(c.sweep)},
          {"training", training_json(c.training)},
          {"de", de_json(c.de)},
          {"calibration",
           {{"target_bv", cal.target_bv},
            {"level", cal.level},
            {"high_bv", cal.high_bv},
            {"relative_tolerance", cal.options.relative_tolerance},
            {"max_bisections", cal.options.max_bisections},
            {"bracket_factor", cal.options.bracket_factor},
            {"max_bracket_expansions", cal.options.max_bracket_expansions}}}};
}

}  // namespace detail

PipelineConfig profile_defaults(const std::string& profile) {
  PipelineConfig c;
  c.profile = profile;
  if (profile == "full") {
    c.sweep.count = 300;
    c.geometry.max_domain_width_um = 0.0;
    return c;
  }
  if (profile != "desk") fail(ErrorKind::InvalidArgument, "unknown profile '" + profile + "' (expected desk|full)");
  auto& g = c.geometry;
  g.junction_spacing_um = 0.1;
  g.max_spacing_um = 2.0;
  g.grading = 1.3;
  g.limits = {0.1, 2.0, 1.45};
  g.max_domain_width_um = 100.0;
  c.sweep.bounds.n_max = 8;
  c.sweep.count = 60;
  // The shallower desk grid tops out near 1.4 kV, so the high classes sit lower.
  c.calibration.high_bv = {1000.0, 900.0, 800.0};
  return c;
}

PipelineConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    schema("$", std::string("invalid JSON: ") + e.what());
  }
  const std::string p = "$";
  only_keys(j, p, {"profile", "material", "geometry", "ramp", "solver", "sweep", "training", "de", "calibration"});
  std::string profile = "desk";
  read(j, "profile", profile, p);
  if (profile != "desk" && profile != "full") schema("$.profile", "expected \"desk\" or \"full\"");
  PipelineConfig c = profile_defaults(profile);
  if (j.contains("material")) read_material(j["material"], c.material, p + ".material");
  if (j.contains("geometry")) read_geometry(j["geometry"], c.geometry, p + ".geometry");
  if (j.contains("ramp")) read_ramp(j["ramp"], c.ramp, p + ".ramp");
  if (j.contains("solver")) read_solver(j["solver"], c.solver, p + ".solver");
  if (j.contains("sweep")) read_sweep(j["sweep"], c.sweep, p + ".sweep");
  if (j.contains("training")) read_training(j["training"], c.training, p + ".training");
  if (j.contains("de")) read_de(j["de"], c.de, p + ".de");
  if (j.contains("calibration")) {
    const json& k = j["calibration"];
    const std::string kp = p + ".calibration";
    only_keys(k, kp, {"target_bv", "level", "high_bv", "relative_tolerance", "max_bisections", "bracket_factor",
                      "max_bracket_expansions"});
    auto& cal = c.calibration;
    read(k, "target_bv", cal.target_bv, kp);
    read(k, "level", cal.level, kp);
    read(k, "high_bv", cal.high_bv, kp);
    read(k, "relative_tolerance", cal.options.relative_tolerance, kp);
    read(k, "max_bisections", cal.options.max_bisections, kp);
    read(k, "bracket_factor", cal.options.bracket_factor, kp);
    read(k, "max_bracket_expansions", cal.options.max_bracket_expansions, kp);
  }
  validate_config(c);
  return c;
}

PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::MissingFile, "MissingFile: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_to_json(const PipelineConfig& cfg, int indent) { return detail::config_json(cfg).dump(indent); }

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string config_hash(const PipelineConfig& cfg) { return fnv1a_hex(config_to_json(cfg, -1)); }

SimulationSetup make_setup(const PipelineConfig& cfg) {
  SimulationSetup s;
  s.material = cfg.material;
  s.geometry = cfg.geometry;
  s.ramp = cfg.ramp;
  s.solver = cfg.solver;
  s.config_hash = config_hash(cfg);
  return s;
}

void validate_config(const PipelineConfig& c) {
  auto positive = [](const char* name, double v) {
    if (!(v > 0.0) || !std::isfinite(v)) fail(ErrorKind::InvalidArgument, std::string(name) + " must be finite and > 0");
  };
  c.material.validate();
  const auto& g = c.geometry;
  positive("geometry.anode_half_width_um", g.anode_half_width_um);
  positive("geometry.anode_depth_um", g.anode_depth_um);
  positive("geometry.drift_thickness_um", g.drift_thickness_um);
  positive("geometry.drift_doping", g.drift_doping);
  positive("geometry.peak_acceptor", g.peak_acceptor);
  positive("geometry.junction_spacing_um", g.junction_spacing_um);
  positive("geometry.max_spacing_um", g.max_spacing_um);
  if (!(g.grading > 1.0)) fail(ErrorKind::InvalidArgument, "geometry.grading must be > 1");
  const auto& r = c.ramp;
  positive("ramp.initial_step_V", r.initial_step_V);
  positive("ramp.min_step_V", r.min_step_V);
  positive("ramp.max_step_V", r.max_step_V);
  positive("ramp.max_bias_V", r.max_bias_V);
  positive("ramp.max_integral_rise", r.max_integral_rise);
  if (!(r.growth >= 1.0)) fail(ErrorKind::InvalidArgument, "ramp.growth must be >= 1");
  if (!(r.backoff > 0.0 && r.backoff < 1.0)) fail(ErrorKind::InvalidArgument, "ramp.backoff must lie in (0, 1)");
  positive("solver.update_tolerance_V", c.solver.update_tolerance_V);
  positive("solver.level_tolerance_V", c.solver.level_tolerance_V);
  if (c.solver.max_newton_iterations < 1) fail(ErrorKind::InvalidArgument, "solver.max_newton_iterations must be >= 1");
  const auto& b = c.sweep.bounds;
  for (const auto& [name, iv] : {std::pair{"s_um", b.s_um}, {"w_um", b.w_um}, {"d_um", b.d_um}, {"sigma_um", b.sigma_um}}) {
    if (!(iv.lo > 0.0 && iv.lo <= iv.hi)) fail(ErrorKind::InvalidArgument, std::string("sweep.bounds.") + name + " must satisfy 0 < lo <= hi");
  }
  if (b.n_min < 0 || b.n_max < b.n_min) fail(ErrorKind::InvalidArgument, "sweep.bounds.n_rings must satisfy 0 <= min <= max");
  if (c.sweep.modes.empty()) fail(ErrorKind::InvalidArgument, "sweep.modes is empty");
  if (c.sweep.workers < 1) fail(ErrorKind::InvalidArgument, "sweep.workers must be >= 1");
  DEConfig de = design_de_config(c.de, b);
  de.validate();
  if (!(c.calibration.level > 0.0 && c.calibration.level < 1.0)) {
    fail(ErrorKind::InvalidArgument, "calibration.level must lie in (0, 1)");
  }
  positive("calibration.target_bv", c.calibration.target_bv);
}

}  // namespace bvforge
