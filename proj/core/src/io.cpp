#include "bvforge/io.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <map>
#include <sstream>

#include "bvforge/error.hpp"
#include "json_util.hpp"

namespace bvforge {

using detail::json;
using namespace detail;

std::string format_double(double v) {
  if (!std::isfinite(v)) fail(ErrorKind::InvalidArgument, "cannot serialise a non-finite number");
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::MissingFile, "MissingFile: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) { write_file(path, text); }

// ---- records ---------------------------------------------------------------

std::string format_record_row(const BreakdownRecord& r) {
  std::string s = std::to_string(r.id);
  s += ',' + format_double(r.design.s_um);
  s += ',' + format_double(r.design.w_um);
  s += ',' + format_double(r.design.d_um);
  s += ',' + std::to_string(r.design.n_rings);
  s += ',' + format_double(r.design.sigma_um);
  s += ',' + to_string(r.mode);
  s += ',' + (r.bv_V ? format_double(*r.bv_V) : std::string());
  s += r.converged ? ",1" : ",0";
  s += ',' + format_double(r.wall_s);
  s += ',' + std::to_string(r.bias_steps);
  return s;
}

void write_records_csv(const std::string& path, const std::vector<BreakdownRecord>& records) {
  std::string text = std::string(kRecordsHeader) + '\n';
  for (const auto& r : records) text += format_record_row(r) + '\n';
  write_file(path, text);
}

void append_records_csv(const std::string& path, const std::vector<BreakdownRecord>& records) {
  bool fresh = true;
  {
    std::ifstream in(path);
    fresh = !in || in.peek() == std::ifstream::traits_type::eof();
  }
  std::ofstream out(path, std::ios::app);
  if (!out) fail(ErrorKind::MissingFile, "MissingFile: cannot write " + path);
  if (fresh) out << kRecordsHeader << '\n';
  for (const auto& r : records) out << format_record_row(r) << '\n';
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

template <class T>
T parse_number(const std::string& text, const std::string& where) {
  T v{};
  const char* b = text.data();
  const char* e = b + text.size();
  const auto [ptr, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || ptr != e || text.empty()) schema(where, "cannot parse '" + text + "'");
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(v)) schema(where, "non-finite value");
  }
  return v;
}

}  // namespace

std::vector<BreakdownRecord> read_records_csv(const std::string& path, const std::string& config_hash) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::MissingFile, "MissingFile: " + path);
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::MissingColumn, "MissingColumn: " + path + " has no header");
  const auto header = split_csv(line);
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  const char* names[] = {"id", "S_um", "W_um", "D_um", "N", "sigma_um", "mode", "bv_V", "converged", "wall_s", "bias_steps"};
  std::size_t idx[11];
  for (int k = 0; k < 11; ++k) {
    const auto it = col.find(names[k]);
    if (it == col.end()) fail(ErrorKind::MissingColumn, std::string("MissingColumn: ") + names[k] + " in " + path);
    idx[k] = it->second;
  }
  std::vector<BreakdownRecord> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv(line);
    const std::string at = path + ":" + std::to_string(line_no);
    if (f.size() != header.size()) schema(at, "expected " + std::to_string(header.size()) + " fields");
    auto field = [&](int k) -> const std::string& { return f[idx[k]]; };
    auto where = [&](int k) { return at + ":" + names[k]; };
    BreakdownRecord r;
    r.id = parse_number<std::size_t>(field(0), where(0));
    r.design.s_um = parse_number<double>(field(1), where(1));
    r.design.w_um = parse_number<double>(field(2), where(2));
    r.design.d_um = parse_number<double>(field(3), where(3));
    r.design.n_rings = parse_number<int>(field(4), where(4));
    r.design.sigma_um = parse_number<double>(field(5), where(5));
    if (field(6) != "fast" && field(6) != "full") schema(where(6), "expected fast|full");
    r.mode = parse_mode(field(6));
    if (!field(7).empty()) r.bv_V = parse_number<double>(field(7), where(7));
    const std::string& c = field(8);
    if (c == "1" || c == "true") {
      r.converged = true;
    } else if (c == "0" || c == "false") {
      r.converged = false;
    } else {
      schema(where(8), "expected 0|1");
    }
    r.wall_s = parse_number<double>(field(9), where(9));
    r.bias_steps = parse_number<int>(field(10), where(10));
    r.config_hash = config_hash;
    out.push_back(std::move(r));
  }
  return out;
}

// ---- manifest --------------------------------------------------------------

std::string manifest_to_json(const SweepManifest& m) {
  json modes = json::array();
  for (auto mode : m.modes) modes.push_back(to_string(mode));
  json cfg = m.config_json.empty() ? json(nullptr) : json::parse(m.config_json);
  json j = {{"seed", m.seed},
            {"count", m.count},
            {"bounds", bounds_json(m.bounds)},
            {"modes", modes},
            {"worker_count", m.worker_count},
            {"config_hash", m.config_hash},
            {"config", cfg},
            {"started_utc", m.started_utc},
            {"finished_utc", m.finished_utc},
            {"records_file", m.records_file}};
  return j.dump(2) + "\n";
}

SweepManifest manifest_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    schema("$", std::string("invalid JSON: ") + e.what());
  }
  const std::string p = "$";
  only_keys(j, p, {"seed", "count", "bounds", "modes", "worker_count", "config_hash", "config", "started_utc",
                   "finished_utc", "records_file"});
  require_keys(j, p, {"seed", "count", "bounds", "modes"});
  SweepManifest m;
  read_u64(j, "seed", m.seed, p);
  read(j, "count", m.count, p);
  read_bounds(j["bounds"], m.bounds, p + ".bounds");
  const json& modes = j["modes"];
  if (!modes.is_array()) schema("$.modes", "expected an array");
  for (std::size_t i = 0; i < modes.size(); ++i) {
    const std::string t = as_string(modes[i], "$.modes[" + std::to_string(i) + "]");
    if (t != "fast" && t != "full") schema("$.modes[" + std::to_string(i) + "]", "expected fast|full");
    m.modes.push_back(parse_mode(t));
  }
  read(j, "worker_count", m.worker_count, p);
  read(j, "config_hash", m.config_hash, p);
  if (j.contains("config") && !j["config"].is_null()) m.config_json = j["config"].dump();
  read(j, "started_utc", m.started_utc, p);
  read(j, "finished_utc", m.finished_utc, p);
  read(j, "records_file", m.records_file, p);
  return m;
}

void write_manifest(const std::string& path, const SweepManifest& m) { write_file(path, manifest_to_json(m)); }

SweepManifest read_manifest(const std::string& path) { return manifest_from_json(read_text(path)); }

// ---- fit -------------------------------------------------------------------

namespace {

json fit_json(const LinearFit& f) {
  return {{"slope", f.slope},   {"intercept", f.intercept}, {"n", f.n},
          {"x_mean", f.x_mean}, {"s_xx", f.s_xx},           {"resid_std", f.resid_std}};
}

LinearFit fit_from(const json& j, const std::string& p) {
  only_keys(j, p, {"slope", "intercept", "n", "x_mean", "s_xx", "resid_std"});
  require_keys(j, p, {"slope", "intercept", "n", "x_mean", "s_xx", "resid_std"});
  LinearFit f;
  read(j, "slope", f.slope, p);
  read(j, "intercept", f.intercept, p);
  read(j, "n", f.n, p);
  read(j, "x_mean", f.x_mean, p);
  read(j, "s_xx", f.s_xx, p);
  read(j, "resid_std", f.resid_std, p);
  return f;
}

json parse_text(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    schema("$", std::string("invalid JSON: ") + e.what());
  }
}

}  // namespace

std::string fit_to_json(const LinearFit& fit) { return fit_json(fit).dump(2) + "\n"; }

LinearFit fit_from_json(const std::string& text) { return fit_from(parse_text(text), "$"); }

void write_fit(const std::string& path, const LinearFit& fit) { write_file(path, fit_to_json(fit)); }

LinearFit read_fit(const std::string& path) { return fit_from_json(read_text(path)); }

// ---- model -----------------------------------------------------------------

std::string model_to_json(const MlpModel& m) {
  json norm = {{"feature_mean", m.norm.feature_mean},
               {"feature_std", m.norm.feature_std},
               {"target_mean", m.norm.target_mean},
               {"target_std", m.norm.target_std}};
  json j = {{"layer_sizes", m.layer_sizes},
            {"weights", m.weights},
            {"biases", m.biases},
            {"bn", {{"scale", m.bn_scale}, {"shift", m.bn_shift}, {"run_mean", m.run_mean}, {"run_var", m.run_var}}},
            {"lambda", m.lambda},
            {"norm_stats", norm},
            {"train_config", training_json(m.train_config)},
            {"seed", m.seed},
            {"epochs_run", m.epochs_run},
            {"best_val_loss", m.best_val_loss}};
  return j.dump() + "\n";
}

MlpModel model_from_json(const std::string& text) {
  const json j = parse_text(text);
  const std::string p = "$";
  only_keys(j, p, {"layer_sizes", "weights", "biases", "bn", "lambda", "norm_stats", "train_config", "seed",
                   "epochs_run", "best_val_loss"});
  require_keys(j, p, {"layer_sizes", "weights", "biases", "bn", "lambda", "norm_stats", "train_config", "seed"});
  MlpModel m;
  m.layer_sizes = as_ints(j["layer_sizes"], "$.layer_sizes");
  m.weights = as_matrix(j["weights"], "$.weights");
  m.biases = as_matrix(j["biases"], "$.biases");
  const json& bn = j["bn"];
  only_keys(bn, "$.bn", {"scale", "shift", "run_mean", "run_var"});
  require_keys(bn, "$.bn", {"scale", "shift", "run_mean", "run_var"});
  m.bn_scale = as_matrix(bn["scale"], "$.bn.scale");
  m.bn_shift = as_matrix(bn["shift"], "$.bn.shift");
  m.run_mean = as_matrix(bn["run_mean"], "$.bn.run_mean");
  m.run_var = as_matrix(bn["run_var"], "$.bn.run_var");
  read(j, "lambda", m.lambda, p);
  const json& n = j["norm_stats"];
  only_keys(n, "$.norm_stats", {"feature_mean", "feature_std", "target_mean", "target_std"});
  require_keys(n, "$.norm_stats", {"feature_mean", "feature_std", "target_mean", "target_std"});
  const auto fm = as_doubles(n["feature_mean"], "$.norm_stats.feature_mean");
  const auto fs = as_doubles(n["feature_std"], "$.norm_stats.feature_std");
  if (fm.size() != kDesignDims) schema("$.norm_stats.feature_mean", "expected 5 entries");
  if (fs.size() != kDesignDims) schema("$.norm_stats.feature_std", "expected 5 entries");
  std::copy(fm.begin(), fm.end(), m.norm.feature_mean.begin());
  std::copy(fs.begin(), fs.end(), m.norm.feature_std.begin());
  read(n, "target_mean", m.norm.target_mean, "$.norm_stats");
  read(n, "target_std", m.norm.target_std, "$.norm_stats");
  read_training(j["train_config"], m.train_config, "$.train_config");
  read_u64(j, "seed", m.seed, p);
  read(j, "epochs_run", m.epochs_run, p);
  read(j, "best_val_loss", m.best_val_loss, p);

  // Shape checks so a malformed file fails here rather than inside predict.
  const auto& ls = m.layer_sizes;
  if (ls.size() < 2 || ls.front() != static_cast<int>(kDesignDims) || ls.back() != 1) {
    schema("$.layer_sizes", "expected [5, ..., 1]");
  }
  const std::size_t layers = ls.size() - 1;
  if (m.weights.size() != layers) schema("$.weights", "expected one entry per layer");
  if (m.biases.size() != layers) schema("$.biases", "expected one entry per layer");
  for (std::size_t l = 0; l < layers; ++l) {
    const auto out = static_cast<std::size_t>(ls[l + 1]), in = static_cast<std::size_t>(ls[l]);
    const std::string s = "[" + std::to_string(l) + "]";
    if (m.weights[l].size() != out * in) schema("$.weights" + s, "wrong length");
    if (m.biases[l].size() != out) schema("$.biases" + s, "wrong length");
  }
  const std::pair<const char*, const std::vector<std::vector<double>>*> bn_parts[] = {
      {"scale", &m.bn_scale}, {"shift", &m.bn_shift}, {"run_mean", &m.run_mean}, {"run_var", &m.run_var}};
  for (const auto& [name, v] : bn_parts) {
    if (v->size() != layers - 1) schema(std::string("$.bn.") + name, "expected one entry per hidden layer");
    for (std::size_t l = 0; l + 1 < layers; ++l) {
      if ((*v)[l].size() != static_cast<std::size_t>(ls[l + 1])) {
        schema(std::string("$.bn.") + name + "[" + std::to_string(l) + "]", "wrong length");
      }
    }
  }
  return m;
}

void write_model(const std::string& path, const MlpModel& model) { write_file(path, model_to_json(model)); }

MlpModel read_model(const std::string& path) { return model_from_json(read_text(path)); }

// ---- design ----------------------------------------------------------------

namespace {

json verification_json(const VerificationRecord& v) {
  return {{"design", design_json(v.design)},
          {"v_target", v.v_target},
          {"surrogate_bv", v.surrogate_bv},
          {"full_bv", v.full_bv ? json(*v.full_bv) : json(nullptr)},
          {"expected_lo", v.expected_lo},
          {"expected_hi", v.expected_hi},
          {"in_expected_range", v.in_expected_range},
          {"verified", v.verified},
          {"wall_s", v.wall_s}};
}

VerificationRecord verification_from(const json& j, const std::string& p) {
  only_keys(j, p, {"design", "v_target", "surrogate_bv", "full_bv", "expected_lo", "expected_hi", "in_expected_range",
                   "verified", "wall_s"});
  require_keys(j, p, {"design", "v_target", "full_bv", "expected_lo", "expected_hi", "in_expected_range"});
  VerificationRecord v;
  v.design = design_from(j["design"], p + ".design");
  read(j, "v_target", v.v_target, p);
  read(j, "surrogate_bv", v.surrogate_bv, p);
  if (!j["full_bv"].is_null()) v.full_bv = as_double(j["full_bv"], p + ".full_bv");
  read(j, "expected_lo", v.expected_lo, p);
  read(j, "expected_hi", v.expected_hi, p);
  read(j, "in_expected_range", v.in_expected_range, p);
  read(j, "verified", v.verified, p);
  read(j, "wall_s", v.wall_s, p);
  return v;
}

}  // namespace

std::string design_to_json(const DesignFile& d) {
  const auto& r = d.result;
  json ver = json::array();
  for (const auto& v : d.verifications) ver.push_back(verification_json(v));
  json j = {{"result",
             {{"design", design_json(r.design)},
              {"surrogate_bv", r.surrogate_bv},
              {"objective_residual", r.objective_residual},
              {"generations_used", r.generations_used},
              {"v_target", r.v_target},
              {"evaluations", r.evaluations},
              {"converged", r.converged}}},
            {"fit", d.fit ? fit_json(*d.fit) : json(nullptr)},
            {"level", d.level},
            {"de", de_json(d.de)},
            {"bounds", bounds_json(d.bounds)},
            {"config_hash", d.config_hash},
            {"verifications", ver}};
  return j.dump(2) + "\n";
}

DesignFile design_from_json(const std::string& text) {
  const json j = parse_text(text);
  only_keys(j, "$", {"result", "fit", "level", "de", "bounds", "config_hash", "verifications"});
  require_keys(j, "$", {"result"});
  DesignFile d;
  const json& r = j["result"];
  const std::string rp = "$.result";
  only_keys(r, rp, {"design", "surrogate_bv", "objective_residual", "generations_used", "v_target", "evaluations",
                    "converged"});
  require_keys(r, rp, {"design", "surrogate_bv", "objective_residual", "v_target"});
  d.result.design = design_from(r["design"], rp + ".design");
  read(r, "surrogate_bv", d.result.surrogate_bv, rp);
  read(r, "objective_residual", d.result.objective_residual, rp);
  read(r, "generations_used", d.result.generations_used, rp);
  read(r, "v_target", d.result.v_target, rp);
  read(r, "evaluations", d.result.evaluations, rp);
  read(r, "converged", d.result.converged, rp);
  if (j.contains("fit") && !j["fit"].is_null()) d.fit = fit_from(j["fit"], "$.fit");
  read(j, "level", d.level, "$");
  if (j.contains("de")) read_de(j["de"], d.de, "$.de");
  if (j.contains("bounds")) read_bounds(j["bounds"], d.bounds, "$.bounds");
  read(j, "config_hash", d.config_hash, "$");
  if (j.contains("verifications")) {
    const json& v = j["verifications"];
    if (!v.is_array()) schema("$.verifications", "expected an array");
    for (std::size_t i = 0; i < v.size(); ++i) {
      d.verifications.push_back(verification_from(v[i], "$.verifications[" + std::to_string(i) + "]"));
    }
  }
  return d;
}

void write_design(const std::string& path, const DesignFile& d) { write_file(path, design_to_json(d)); }

DesignFile read_design(const std::string& path) { return design_from_json(read_text(path)); }

// ---- plot CSV exports ------------------------------------------------------

void write_fig3_csv(const std::string& path, const std::vector<PairedRecord>& pairs, const LinearFit& fit,
                    double level) {
  std::string text = std::string(kFig3Header) + '\n';
  for (const auto& p : pairs) {
    if (!p.fast || !p.full || !p.fast->bv_V || !p.full->bv_V) continue;
    const double x = *p.fast->bv_V;
    const Interval band = prediction_interval(fit, x, level);
    text += format_double(x) + ',' + format_double(*p.full->bv_V) + ',' + format_double(fit.predict(x)) + ',' +
            format_double(band.lo) + ',' + format_double(band.hi) + '\n';
  }
  write_file(path, text);
}

void write_fig4_csv(const std::string& path, const SpeedupStats& stats) {
  std::string text = std::string(kFig4Header) + '\n';
  for (const auto& r : stats.rows) {
    text += std::to_string(r.id) + ',' + format_double(r.fast_wall_s) + ',' + format_double(r.full_wall_s) + ',' +
            format_double(r.ratio) + '\n';
  }
  write_file(path, text);
}

void write_fig6_csv(const std::string& path, const std::vector<VerificationRecord>& records) {
  std::string text = std::string(kFig6Header) + '\n';
  for (const auto& v : records) {
    text += format_double(v.v_target) + ',' + format_double(v.surrogate_bv) + ',' +
            (v.full_bv ? format_double(*v.full_bv) : std::string()) + ',' + format_double(v.expected_lo) + ',' +
            format_double(v.expected_hi) + ',' + (v.in_expected_range ? "1" : "0") + '\n';
  }
  write_file(path, text);
}

}  // namespace bvforge
