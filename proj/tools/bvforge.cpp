#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "bvforge/calibration.hpp"
#include "bvforge/config.hpp"
#include "bvforge/error.hpp"
#include "bvforge/field_solver.hpp"
#include "bvforge/inverse.hpp"
#include "bvforge/io.hpp"
#include "bvforge/surrogate.hpp"
#include "bvforge/sweep.hpp"

namespace fs = std::filesystem;
using namespace bvforge;

namespace {

enum Exit : int { kOk = 0, kUsage = 1, kMissingFile = 2, kSchema = 3, kDomain = 4 };

int exit_code(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::MissingFile: return kMissingFile;
    case ErrorCategory::Schema: return kSchema;
    case ErrorCategory::Domain: return kDomain;
  }
  return kDomain;
}

const char* category_name(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::MissingFile: return "missing-file";
    case ErrorCategory::Schema: return "schema";
    case ErrorCategory::Domain: return "domain";
  }
  return "domain";
}

PipelineConfig config_or_default(const std::string& path) {
  return path.empty() ? profile_defaults("desk") : load_config(path);
}

std::vector<BreakdownRecord> read_all(const std::vector<std::string>& paths) {
  std::vector<BreakdownRecord> all;
  for (const auto& p : paths) {
    auto r = read_records_csv(p);
    all.insert(all.end(), r.begin(), r.end());
  }
  sort_records(all);
  return all;
}

DesignVector parse_design(const std::string& text) {
  std::vector<double> v;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      fail(ErrorKind::InvalidArgument, "--design expects S,W,D,N,sigma; got '" + text + "'");
    }
  }
  if (v.size() != kDesignDims || v[3] != std::floor(v[3])) {
    fail(ErrorKind::InvalidArgument, "--design expects S,W,D,N,sigma with integral N; got '" + text + "'");
  }
  return DesignVector{v[0], v[1], v[2], static_cast<int>(v[3]), v[4]};
}

std::string fmt(double v) { return format_double(v); }

// ---------------------------------------------------------------------------

struct SweepArgs {
  std::string config, out = "runs", mode, manifest;
  std::optional<std::size_t> n;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> workers;
  bool quiet = false;
};

int run_sweep_cmd(const SweepArgs& a) {
  const PipelineConfig cfg = config_or_default(a.config);
  SweepSettings s = cfg.sweep;
  if (!a.manifest.empty()) {
    const SweepManifest m = read_manifest(a.manifest);
    s.seed = m.seed;
    s.count = m.count;
    s.bounds = m.bounds;
    s.modes = m.modes;
  }
  if (a.n) s.count = *a.n;
  if (a.seed) s.seed = *a.seed;
  if (a.workers) s.workers = *a.workers;
  if (!a.mode.empty()) {
    s.modes = a.mode == "both" ? std::vector<BreakdownMode>{BreakdownMode::Fast, BreakdownMode::Full}
                               : std::vector<BreakdownMode>{parse_mode(a.mode)};
  }
  fs::create_directories(a.out);
  const fs::path dir(a.out);
  const std::string part = (dir / "records.csv.part").string();
  fs::remove(part);
  append_records_csv(part, {});

  const auto designs = sample_designs(s.bounds, s.count, s.seed);
  SweepOptions opts;
  opts.modes = s.modes;
  opts.workers = s.workers;
  opts.seed = s.seed;
  opts.bounds = s.bounds;
  opts.sink_path = part;
  std::size_t done = 0;
  const std::size_t total = designs.size() * s.modes.size();
  if (!a.quiet) {
    opts.on_record = [&](const BreakdownRecord& r) {
      std::fprintf(stderr, "[%zu/%zu] id=%zu mode=%s bv=%s wall=%.2fs\n", ++done, total, r.id, to_string(r.mode).c_str(),
                   r.bv_V ? fmt(*r.bv_V).c_str() : "-", r.wall_s);
    };
  }
  SweepResult res = run_sweep(designs, make_setup(cfg), opts);
  res.manifest.config_json = config_to_json(cfg, -1);
  res.manifest.records_file = "records.csv";
  write_records_csv((dir / "records.csv").string(), res.records);
  write_manifest((dir / "manifest.json").string(), res.manifest);
  fs::remove(part);

  std::size_t converged[2] = {0, 0}, runs[2] = {0, 0};
  for (const auto& r : res.records) {
    const int k = r.mode == BreakdownMode::Fast ? 0 : 1;
    ++runs[k];
    converged[k] += r.converged ? 1 : 0;
  }
  for (int k = 0; k < 2; ++k) {
    if (runs[k] == 0) continue;
    std::printf("%s converged %zu/%zu\n", k == 0 ? "fast" : "full", converged[k], runs[k]);
  }
  if (runs[0] > 0 && runs[1] > 0) {
    const SpeedupStats st = speedup_stats(res.records);
    write_fig4_csv((dir / "fig4.csv").string(), st);
    std::printf("full/fast wall ratio mean %.3f min %.3f max %.3f\n", st.mean_speedup, st.min_speedup, st.max_speedup);
  }
  std::printf("config_hash %s\nrecords %s\n", res.manifest.config_hash.c_str(), (dir / "records.csv").c_str());
  return kOk;
}

// ---------------------------------------------------------------------------

int run_calibrate(const std::string& config, std::optional<double> target, const std::string& out) {
  PipelineConfig cfg = config_or_default(config);
  const double t = target.value_or(cfg.calibration.target_bv);
  cfg.material = calibrate_alpha(cfg.material, t, cfg.geometry, cfg.ramp, cfg.calibration.options);
  const RampResult r = ideal_1d_breakdown(cfg.material, BreakdownMode::Full, cfg.geometry, cfg.ramp);
  std::printf("alpha_a %s\nalpha_b %s\nbv_full_1d_V %s\n", fmt(cfg.material.alpha_a).c_str(),
              fmt(cfg.material.alpha_b).c_str(), r.bv_V ? fmt(*r.bv_V).c_str() : "none");
  if (!out.empty()) {
    write_text(out, config_to_json(cfg) + "\n");
    std::printf("config %s\nconfig_hash %s\n", out.c_str(), config_hash(cfg).c_str());
  }
  return kOk;
}

// ---------------------------------------------------------------------------

std::pair<std::vector<double>, std::vector<double>> paired_bv(const std::vector<PairedRecord>& pairs) {
  std::vector<double> x, y;
  for (const auto& p : pairs) {
    if (p.fast && p.full && p.fast->bv_V && p.full->bv_V) {
      x.push_back(*p.fast->bv_V);
      y.push_back(*p.full->bv_V);
    }
  }
  return {x, y};
}

int run_fit(const std::vector<std::string>& records, const std::string& out, const std::string& fig3, double level) {
  const auto pairs = pair_records(read_all(records), false);
  const auto [x, y] = paired_bv(pairs);
  const LinearFit fit = fit_linear(x, y);
  write_fit(out, fit);
  if (!fig3.empty()) write_fig3_csv(fig3, pairs, fit, level);
  std::vector<double> pred;
  for (double v : x) pred.push_back(fit.predict(v));
  std::printf("slope %s\nintercept %s\nn %zu\nresid_std %s\n", fmt(fit.slope).c_str(), fmt(fit.intercept).c_str(),
              fit.n, fmt(fit.resid_std).c_str());
  if (x.size() > 2) std::printf("r2 %s\n", fmt(r2(pred, y)).c_str());
  return kOk;
}

// ---------------------------------------------------------------------------

struct ScreenArgs {
  std::string fit, config, out, verified_out;
  std::vector<std::string> records;
  std::vector<double> high_bv;
  std::optional<double> level;
  std::optional<unsigned> workers;
};

int run_screen(const ScreenArgs& a) {
  const LinearFit fit = read_fit(a.fit);
  const PipelineConfig cfg = config_or_default(a.config);
  const double level = a.level.value_or(cfg.calibration.level);
  const std::vector<double> defs = a.high_bv.empty() ? cfg.calibration.high_bv : a.high_bv;
  std::vector<BreakdownRecord> all = read_all(a.records);

  if (!a.verified_out.empty()) {
    // Run the full model on every screened design that lacks one.
    auto pairs = pair_records(all, false);
    double x_lo = INFINITY, x_hi = -INFINITY;
    for (const auto& p : pairs) {
      if (p.fast && p.fast->bv_V) {
        x_lo = std::min(x_lo, *p.fast->bv_V);
        x_hi = std::max(x_hi, *p.fast->bv_V);
      }
    }
    double lowest = INFINITY;
    for (double d : defs) {
      try {
        lowest = std::min(lowest, screening_threshold(fit, d, level, x_lo, x_hi));
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::NotReachable) throw;
      }
    }
    std::vector<DesignVector> todo;
    std::vector<std::size_t> ids;
    for (const auto& p : pairs) {
      if (p.fast && p.fast->bv_V && *p.fast->bv_V >= lowest && !p.full) {
        todo.push_back(p.fast->design);
        ids.push_back(p.id);
      }
    }
    std::vector<BreakdownRecord> fresh;
    const SimulationSetup setup = make_setup(cfg);
    for (std::size_t i = 0; i < todo.size(); ++i) {
      fresh.push_back(simulate_design(ids[i], todo[i], BreakdownMode::Full, setup));
      std::fprintf(stderr, "[verify %zu/%zu] id=%zu bv=%s\n", i + 1, todo.size(), ids[i],
                   fresh.back().bv_V ? fmt(*fresh.back().bv_V).c_str() : "-");
    }
    append_records_csv(a.verified_out, fresh);
    all.insert(all.end(), fresh.begin(), fresh.end());
    sort_records(all);
  }

  const ScreeningReport rep = screening_report(pair_records(all, false), defs, fit, level);
  if (!a.out.empty()) write_screening_csv(rep, a.out);
  std::printf("high_bv_V threshold_V search_space verified_high baseline gain\n");
  for (const auto& r : rep.rows) {
    std::printf("%g %s %zu %zu %.4g %.4g\n", r.high_bv, std::isnan(r.threshold) ? "-" : fmt(r.threshold).c_str(),
                r.fast_search_space_count, r.verified_high_count, r.full_only_count, r.gain_ratio);
  }
  return kOk;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string config, out;
  std::vector<std::string> records;
  std::optional<std::uint64_t> seed;
  std::optional<double> lambda;
  bool select = false;
  bool holdout = false;
};

int run_train(const TrainArgs& a) {
  const PipelineConfig cfg = config_or_default(a.config);
  TrainConfig tc = cfg.training;
  if (a.seed) tc.seed = *a.seed;
  if (a.lambda) tc.lambda = *a.lambda;
  const Dataset data = normalize_dataset(read_all(a.records));
  std::printf("rows %zu dropped %zu\n", data.size(), data.dropped);
  if (a.select) {
    tc.lambda = select_lambda(data, tc);
    std::printf("lambda %s\n", fmt(tc.lambda).c_str());
  }
  if (a.holdout) {
    const HoldoutResult h = holdout_score(data, tc);
    std::printf("holdout_r2 %s (train %zu, test %zu)\n", fmt(h.r2).c_str(), h.train_rows.size(), h.test_rows.size());
  }
  const MlpModel m = train(data, tc);
  write_model(a.out, m);
  std::printf("epochs %d\nbest_val_loss %s\nmodel %s\n", m.epochs_run, fmt(m.best_val_loss).c_str(), a.out.c_str());
  return kOk;
}

int run_cv(const std::string& config, const std::vector<std::string>& records, std::vector<std::size_t> sizes,
           const std::string& out) {
  const PipelineConfig cfg = config_or_default(config);
  const Dataset data = normalize_dataset(read_all(records));
  if (sizes.empty()) sizes.push_back(data.size());
  const auto perm = permutation(data.size(), cfg.training.seed);
  std::string csv = "size,mean_r2,std_r2,test_r2,lambda\n";
  for (std::size_t n : sizes) {
    if (n > data.size()) {
      fail(ErrorKind::TooFewSamples, "TooFewSamples: size " + std::to_string(n) + " exceeds " +
                                         std::to_string(data.size()) + " rows");
    }
    const Dataset sub = subset(data, std::vector<std::size_t>(perm.begin(), perm.begin() + static_cast<long>(n)));
    const CVReport rep = cross_validate(sub, cfg.training);
    std::printf("size %zu mean_r2 %.6f std_r2 %.6f test_r2 %.6f\n", n, rep.mean, rep.std, rep.test_r2);
    csv += std::to_string(n) + ',' + fmt(rep.mean) + ',' + fmt(rep.std) + ',' + fmt(rep.test_r2) + ',' +
           fmt(rep.lambda) + '\n';
  }
  if (!out.empty()) write_text(out, csv);
  return kOk;
}

// ---------------------------------------------------------------------------

int run_invert(const std::string& config, const std::string& model_path, const std::string& fit_path, double target,
               const std::string& out, std::optional<std::uint64_t> seed) {
  const PipelineConfig cfg = config_or_default(config);
  const MlpModel model = read_model(model_path);
  DesignFile d;
  d.de = cfg.de;
  if (seed) d.de.seed = *seed;
  d.bounds = cfg.sweep.bounds;
  d.level = cfg.calibration.level;
  d.config_hash = config_hash(cfg);
  if (!fit_path.empty()) d.fit = read_fit(fit_path);
  d.result = inverse_design(model, target, d.de, d.bounds);
  write_design(out, d);
  const auto& r = d.result;
  std::printf("design S=%s W=%s D=%s N=%d sigma=%s\nsurrogate_bv %s\nresidual %s\ngenerations %d\n",
              fmt(r.design.s_um).c_str(), fmt(r.design.w_um).c_str(), fmt(r.design.d_um).c_str(), r.design.n_rings,
              fmt(r.design.sigma_um).c_str(), fmt(r.surrogate_bv).c_str(), fmt(r.objective_residual).c_str(),
              r.generations_used);
  if (d.fit) {
    const Interval band = prediction_interval(*d.fit, target, d.level);
    std::printf("expected_range %s %s\n", fmt(band.lo).c_str(), fmt(band.hi).c_str());
  }
  return kOk;
}

int run_verify(const std::string& config, const std::vector<std::string>& designs, const std::string& fig6) {
  const PipelineConfig cfg = config_or_default(config);
  const SimulationSetup setup = make_setup(cfg);
  std::vector<VerificationRecord> all;
  for (const auto& path : designs) {
    DesignFile d = read_design(path);
    if (!d.fit) fail(ErrorKind::SchemaMismatch, "SchemaMismatch at " + path + ":$.fit: design has no calibration fit");
    const VerificationRecord v = verify_design(d.result, *d.fit, setup, d.level);
    d.verifications.push_back(v);
    write_design(path, d);
    all.insert(all.end(), d.verifications.begin(), d.verifications.end());
    std::printf("%s target %s full_bv %s expected [%s, %s] %s\n", path.c_str(), fmt(v.v_target).c_str(),
                v.full_bv ? fmt(*v.full_bv).c_str() : "-", fmt(v.expected_lo).c_str(), fmt(v.expected_hi).c_str(),
                !v.verified ? "unverified" : v.in_expected_range ? "in-range" : "out-of-range");
  }
  if (!fig6.empty()) write_fig6_csv(fig6, all);
  return kOk;
}

// ---------------------------------------------------------------------------

int run_export_field(const std::string& config, const std::string& design_text, const std::string& design_file,
                     std::optional<double> bias, std::optional<double> cut_y, const std::string& mode,
                     const std::string& out, const std::string& cut_out) {
  const PipelineConfig cfg = config_or_default(config);
  DesignVector dv;
  if (!design_file.empty()) {
    dv = read_design(design_file).result.design;
  } else if (!design_text.empty()) {
    dv = parse_design(design_text);
  } else {
    fail(ErrorKind::InvalidArgument, "export-field needs --design or --design-file");
  }
  validate_design(dv, cfg.sweep.bounds);
  const Structure s = build_structure(dv, cfg.geometry);
  FieldSolution sol;
  if (bias) {
    if (!(*bias >= 0.0)) fail(ErrorKind::InvalidArgument, "--bias must be >= 0");
    PoissonSolver solver(s, cfg.material, cfg.solver);
    sol = solver.solve(0.0);
    const double step = cfg.ramp.max_step_V;
    for (double b = std::min(step, *bias); sol.bias < *bias; b = std::min(b + step, *bias)) {
      const FieldSolution next = solver.solve(b, &sol);
      sol = next;
    }
  } else {
    const RampResult r = ramp_breakdown(s, cfg.material, parse_mode(mode), cfg.ramp, cfg.solver);
    if (!r.last_solution) fail(ErrorKind::NewtonDiverged, "NewtonDiverged: no converged bias step to export");
    sol = *r.last_solution;
    std::printf("bv_V %s\n", r.bv_V ? fmt(*r.bv_V).c_str() : "none");
  }
  const double y = cut_y.value_or(dv.d_um);
  const FieldTables t = export_field(s, sol, y);
  write_field_csv(t, out, cut_out);
  std::printf("bias_V %s\npeak_field_Vcm %s\ncut_y_um %s\nfield %s\ncut %s\n", fmt(sol.bias).c_str(),
              fmt(sol.peak_field).c_str(), fmt(t.cut_y_um).c_str(), out.c_str(), cut_out.c_str());
  return kOk;
}

int run_oracle1d(const std::string& config, double bias, bool solve) {
  const PipelineConfig cfg = config_or_default(config);
  const auto& g = cfg.geometry;
  const Analytic1D a = analytic_1d(cfg.material, g.drift_doping, g.drift_thickness_um, bias);
  const double bv = analytic_bias_for_peak(cfg.material, g.drift_doping, g.drift_thickness_um, cfg.material.e_crit);
  std::printf("bias_V %s\ndepletion_um %.6f\npeak_field_Vcm %s\npunch_through %d\nfield_slope_Vcm_per_cm %s\n"
              "bv_fast_analytic_V %s\n",
              fmt(bias).c_str(), a.depletion_um, fmt(a.peak_field).c_str(), a.punch_through ? 1 : 0,
              fmt(a.field_slope).c_str(), fmt(bv).c_str());
  if (solve) {
    for (auto mode : {BreakdownMode::Fast, BreakdownMode::Full}) {
      const RampResult r = ideal_1d_breakdown(cfg.material, mode, g, cfg.ramp);
      std::printf("bv_%s_numeric_V %s\n", to_string(mode).c_str(), r.bv_V ? fmt(*r.bv_V).c_str() : "none");
    }
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bvforge: guard-ring breakdown simulation, calibration, surrogate and inverse design"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "bvforge 0.3.0");

  SweepArgs sw;
  auto* sweep = app.add_subcommand("sweep", "Simulate a random design campaign");
  sweep->add_option("--config", sw.config, "Pipeline config JSON");
  sweep->add_option("--n", sw.n, "Number of designs");
  sweep->add_option("--seed", sw.seed, "Sampling seed");
  sweep->add_option("--mode", sw.mode, "fast | full | both")->check(CLI::IsMember({"fast", "full", "both"}));
  sweep->add_option("--workers", sw.workers, "Worker threads")->check(CLI::PositiveNumber);
  sweep->add_option("--out", sw.out, "Output directory");
  sweep->add_option("--manifest", sw.manifest, "Replay seed, count, bounds and modes from a manifest");
  sweep->add_flag("--quiet", sw.quiet, "No per-record progress");

  std::string cal_config, cal_out;
  std::optional<double> cal_target;
  auto* cal = app.add_subcommand("calibrate-alpha", "Fit alpha_b so the 1D full-mode BV hits a target");
  cal->add_option("--config", cal_config);
  cal->add_option("--target", cal_target, "Target BV in V (default: calibration.target_bv)");
  cal->add_option("--out", cal_out, "Write the calibrated config here");

  std::vector<std::string> fit_records;
  std::string fit_out, fit_fig3;
  double fit_level = 0.95;
  auto* fitc = app.add_subcommand("fit", "Linear fit of full vs fast BV over paired records");
  fitc->add_option("--records", fit_records)->required()->expected(1, -1);
  fitc->add_option("--out", fit_out)->required();
  fitc->add_option("--fig3", fit_fig3, "Also write the scatter + band CSV");
  fitc->add_option("--level", fit_level)->check(CLI::Range(0.0, 1.0));

  ScreenArgs sc;
  auto* screen = app.add_subcommand("screen", "Prediction-interval screening table");
  screen->add_option("--fit", sc.fit)->required();
  screen->add_option("--records", sc.records)->required()->expected(1, -1);
  screen->add_option("--high-bv", sc.high_bv)->expected(1, -1);
  screen->add_option("--level", sc.level)->check(CLI::Range(0.0, 1.0));
  screen->add_option("--config", sc.config);
  screen->add_option("--out", sc.out, "Table CSV");
  screen->add_option("--verified-out", sc.verified_out,
                     "Run the full model on unverified screened designs and append them here");

  TrainArgs tr;
  auto* trainc = app.add_subcommand("train", "Train the MLP surrogate on fast records");
  trainc->add_option("--config", tr.config);
  trainc->add_option("--records", tr.records)->required()->expected(1, -1);
  trainc->add_option("--out", tr.out)->required();
  trainc->add_option("--seed", tr.seed);
  trainc->add_option("--lambda", tr.lambda);
  trainc->add_flag("--select-lambda", tr.select, "Pick lambda from training.lambda_grid by k-fold R^2");
  trainc->add_flag("--holdout", tr.holdout, "Report held-out R^2 from a train/test split first");

  std::string cv_config, cv_out;
  std::vector<std::string> cv_records;
  std::vector<std::size_t> cv_sizes;
  auto* cv = app.add_subcommand("cv", "Repeated k-fold cross-validation, optionally at several dataset sizes");
  cv->add_option("--config", cv_config);
  cv->add_option("--records", cv_records)->required()->expected(1, -1);
  cv->add_option("--sizes", cv_sizes)->expected(1, -1);
  cv->add_option("--out", cv_out);

  std::string inv_config, inv_model, inv_fit, inv_out;
  double inv_target = 0.0;
  std::optional<std::uint64_t> inv_seed;
  auto* inv = app.add_subcommand("invert", "Differential-evolution inverse design on the surrogate");
  inv->add_option("--config", inv_config);
  inv->add_option("--model", inv_model)->required();
  inv->add_option("--fit", inv_fit);
  inv->add_option("--target", inv_target)->required();
  inv->add_option("--seed", inv_seed);
  inv->add_option("--out", inv_out)->required();

  std::string ver_config, ver_fig6;
  std::vector<std::string> ver_designs;
  auto* ver = app.add_subcommand("verify", "Full-model verification of inverse designs");
  ver->add_option("--config", ver_config);
  ver->add_option("--design", ver_designs)->required()->expected(1, -1);
  ver->add_option("--fig6", ver_fig6, "Target vs verified BV CSV");

  std::string ef_config, ef_design, ef_design_file, ef_mode = "fast", ef_out = "field.csv", ef_cut = "cut.csv";
  std::optional<double> ef_bias, ef_cut_y;
  auto* ef = app.add_subcommand("export-field", "Field map and horizontal cut");
  ef->add_option("--config", ef_config);
  ef->add_option("--design", ef_design, "S,W,D,N,sigma");
  ef->add_option("--design-file", ef_design_file);
  ef->add_option("--bias", ef_bias, "Reverse bias in V (default: last step below breakdown)");
  ef->add_option("--mode", ef_mode)->check(CLI::IsMember({"fast", "full"}));
  ef->add_option("--cut-y", ef_cut_y, "Cut depth in um (default: ring junction depth D)");
  ef->add_option("--out", ef_out);
  ef->add_option("--cut-out", ef_cut);

  std::string o_config;
  double o_bias = 0.0;
  bool o_solve = false;
  auto* oracle = app.add_subcommand("oracle1d", "Depletion-approximation reference for the ideal 1D diode");
  oracle->add_option("--config", o_config);
  oracle->add_option("--bias", o_bias)->required()->check(CLI::NonNegativeNumber);
  oracle->add_flag("--solve", o_solve, "Also run the numeric 1D ramps");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    if (*sweep) return run_sweep_cmd(sw);
    if (*cal) return run_calibrate(cal_config, cal_target, cal_out);
    if (*fitc) return run_fit(fit_records, fit_out, fit_fig3, fit_level);
    if (*screen) return run_screen(sc);
    if (*trainc) return run_train(tr);
    if (*cv) return run_cv(cv_config, cv_records, cv_sizes, cv_out);
    if (*inv) return run_invert(inv_config, inv_model, inv_fit, inv_target, inv_out, inv_seed);
    if (*ver) return run_verify(ver_config, ver_designs, ver_fig6);
    if (*ef) return run_export_field(ef_config, ef_design, ef_design_file, ef_bias, ef_cut_y, ef_mode, ef_out, ef_cut);
    if (*oracle) return run_oracle1d(o_config, o_bias, o_solve);
  } catch (const Error& e) {
    nlohmann::json line = {{"error", std::string(to_string(e.kind()))},
                           {"category", category_name(e.category())},
                           {"message", e.what()}};
    std::cerr << line.dump() << '\n';
    return exit_code(e.category());
  } catch (const fs::filesystem_error& e) {
    nlohmann::json line = {{"error", "MissingFile"}, {"category", "missing-file"}, {"message", e.what()}};
    std::cerr << line.dump() << '\n';
    return kMissingFile;
  }
  return kUsage;
}
