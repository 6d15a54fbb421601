#pragma once

#include <initializer_list>
#include <string>
#include <vector>

#include <json.hpp>

#include "bvforge/device.hpp"
#include "bvforge/error.hpp"
#include "bvforge/inverse.hpp"
#include "bvforge/surrogate.hpp"

namespace bvforge::detail {

using json = nlohmann::json;

[[noreturn]] inline void schema(const std::string& path, const std::string& what) {
  fail(ErrorKind::SchemaMismatch, "SchemaMismatch at " + path + ": " + what);
}

inline const json& object_at(const json& j, const std::string& path) {
  if (!j.is_object()) schema(path, "expected an object");
  return j;
}

/// Rejects keys outside `allowed`.
inline void only_keys(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
  object_at(j, path);
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) schema(path + "." + it.key(), "unknown key");
  }
}

inline void require_keys(const json& j, const std::string& path, std::initializer_list<const char*> keys) {
  for (const char* k : keys) {
    if (!j.contains(k)) schema(path + "." + k, "missing");
  }
}

inline double as_double(const json& v, const std::string& path) {
  if (!v.is_number()) schema(path, "expected a number");
  return v.get<double>();
}

inline long long as_int(const json& v, const std::string& path) {
  if (!v.is_number_integer()) schema(path, "expected an integer");
  return v.get<long long>();
}

inline std::uint64_t as_u64(const json& v, const std::string& path) {
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
    schema(path, "expected a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

inline bool as_bool(const json& v, const std::string& path) {
  if (!v.is_boolean()) schema(path, "expected a boolean");
  return v.get<bool>();
}

inline std::string as_string(const json& v, const std::string& path) {
  if (!v.is_string()) schema(path, "expected a string");
  return v.get<std::string>();
}

inline std::vector<double> as_doubles(const json& v, const std::string& path) {
  if (!v.is_array()) schema(path, "expected an array");
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(as_double(v[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

inline std::vector<int> as_ints(const json& v, const std::string& path) {
  if (!v.is_array()) schema(path, "expected an array");
  std::vector<int> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out.push_back(static_cast<int>(as_int(v[i], path + "[" + std::to_string(i) + "]")));
  }
  return out;
}

inline std::vector<std::vector<double>> as_matrix(const json& v, const std::string& path) {
  if (!v.is_array()) schema(path, "expected an array of arrays");
  std::vector<std::vector<double>> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(as_doubles(v[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

// Optional-field readers: leave `out` alone when the key is absent.
inline void read(const json& j, const char* key, double& out, const std::string& path) {
  if (j.contains(key)) out = as_double(j[key], path + "." + key);
}
inline void read(const json& j, const char* key, int& out, const std::string& path) {
  if (j.contains(key)) out = static_cast<int>(as_int(j[key], path + "." + key));
}
inline void read(const json& j, const char* key, unsigned& out, const std::string& path) {
  if (j.contains(key)) out = static_cast<unsigned>(as_u64(j[key], path + "." + key));
}
inline void read(const json& j, const char* key, std::size_t& out, const std::string& path) {
  if (j.contains(key)) out = static_cast<std::size_t>(as_u64(j[key], path + "." + key));
}
inline void read_u64(const json& j, const char* key, std::uint64_t& out, const std::string& path) {
  if (j.contains(key)) out = as_u64(j[key], path + "." + key);
}
inline void read(const json& j, const char* key, bool& out, const std::string& path) {
  if (j.contains(key)) out = as_bool(j[key], path + "." + key);
}
inline void read(const json& j, const char* key, std::string& out, const std::string& path) {
  if (j.contains(key)) out = as_string(j[key], path + "." + key);
}
inline void read(const json& j, const char* key, std::vector<double>& out, const std::string& path) {
  if (j.contains(key)) out = as_doubles(j[key], path + "." + key);
}
inline void read(const json& j, const char* key, std::vector<int>& out, const std::string& path) {
  if (j.contains(key)) out = as_ints(j[key], path + "." + key);
}

inline json interval_json(const Interval& i) { return json::array({i.lo, i.hi}); }

inline Interval interval_from(const json& v, const std::string& path) {
  const auto d = as_doubles(v, path);
  if (d.size() != 2) schema(path, "expected [lo, hi]");
  return {d[0], d[1]};
}

inline json bounds_json(const DesignBounds& b) {
  return {{"s_um", interval_json(b.s_um)},
          {"w_um", interval_json(b.w_um)},
          {"d_um", interval_json(b.d_um)},
          {"n_rings", json::array({b.n_min, b.n_max})},
          {"sigma_um", interval_json(b.sigma_um)}};
}

inline void read_bounds(const json& j, DesignBounds& b, const std::string& path) {
  only_keys(j, path, {"s_um", "w_um", "d_um", "n_rings", "sigma_um"});
  if (j.contains("s_um")) b.s_um = interval_from(j["s_um"], path + ".s_um");
  if (j.contains("w_um")) b.w_um = interval_from(j["w_um"], path + ".w_um");
  if (j.contains("d_um")) b.d_um = interval_from(j["d_um"], path + ".d_um");
  if (j.contains("sigma_um")) b.sigma_um = interval_from(j["sigma_um"], path + ".sigma_um");
  if (j.contains("n_rings")) {
    const auto n = as_ints(j["n_rings"], path + ".n_rings");
    if (n.size() != 2) schema(path + ".n_rings", "expected [min, max]");
    b.n_min = n[0];
    b.n_max = n[1];
  }
}

inline json design_json(const DesignVector& dv) {
  return {{"S_um", dv.s_um}, {"W_um", dv.w_um}, {"D_um", dv.d_um}, {"N", dv.n_rings}, {"sigma_um", dv.sigma_um}};
}

inline DesignVector design_from(const json& j, const std::string& path) {
  only_keys(j, path, {"S_um", "W_um", "D_um", "N", "sigma_um"});
  require_keys(j, path, {"S_um", "W_um", "D_um", "N", "sigma_um"});
  DesignVector dv;
  dv.s_um = as_double(j["S_um"], path + ".S_um");
  dv.w_um = as_double(j["W_um"], path + ".W_um");
  dv.d_um = as_double(j["D_um"], path + ".D_um");
  dv.n_rings = static_cast<int>(as_int(j["N"], path + ".N"));
  dv.sigma_um = as_double(j["sigma_um"], path + ".sigma_um");
  return dv;
}

json parse_file(const std::string& path);
json training_json(const ::bvforge::TrainConfig& t);
void read_training(const json& j, ::bvforge::TrainConfig& t, const std::string& path);
json de_json(const ::bvforge::DEConfig& d);
void read_de(const json& j, ::bvforge::DEConfig& d, const std::string& path);
void write_file(const std::string& path, const std::string& text);

}  // namespace bvforge::detail
