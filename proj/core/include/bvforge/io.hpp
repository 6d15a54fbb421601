#pragma once

#include <optional>
#include <string>
#include <vector>

#include "bvforge/calibration.hpp"
#include "bvforge/field_solver.hpp"
#include "bvforge/inverse.hpp"
#include "bvforge/surrogate.hpp"
#include "bvforge/sweep.hpp"

namespace bvforge {

inline constexpr const char* kRecordsHeader = "id,S_um,W_um,D_um,N,sigma_um,mode,bv_V,converged,wall_s,bias_steps";
inline constexpr const char* kFig3Header = "bv_fast_V,bv_full_V,fit_V,pi_lo_V,pi_hi_V";
inline constexpr const char* kFig4Header = "id,fast_wall_s,full_wall_s,ratio";
inline constexpr const char* kFig6Header =
    "v_target_V,surrogate_bv_V,bv_full_V,expected_lo_V,expected_hi_V,in_expected_range";

/// 17 significant digits; NaN and infinities are rejected.
std::string format_double(double v);
std::string utc_timestamp();

std::string format_record_row(const BreakdownRecord& rec);
void write_records_csv(const std::string& path, const std::vector<BreakdownRecord>& records);
/// Header first (if the file is new or empty), then rows.
void append_records_csv(const std::string& path, const std::vector<BreakdownRecord>& records);
/// Columns are matched by name. Throws MissingFile, MissingColumn, SchemaMismatch (path:line:column).
/// Every record gets `config_hash`.
std::vector<BreakdownRecord> read_records_csv(const std::string& path, const std::string& config_hash = "");

std::string manifest_to_json(const SweepManifest& m);
SweepManifest manifest_from_json(const std::string& text);
void write_manifest(const std::string& path, const SweepManifest& m);
SweepManifest read_manifest(const std::string& path);

std::string fit_to_json(const LinearFit& fit);
LinearFit fit_from_json(const std::string& text);
void write_fit(const std::string& path, const LinearFit& fit);
LinearFit read_fit(const std::string& path);

std::string model_to_json(const MlpModel& model);
MlpModel model_from_json(const std::string& text);
void write_model(const std::string& path, const MlpModel& model);
MlpModel read_model(const std::string& path);

/// Design file: the inverse-design result, the DE settings and config hash used,
/// the calibration fit that defines the expected range, and any verification
/// records appended later.
struct DesignFile {
  InverseDesignResult result{};
  std::optional<LinearFit> fit;
  double level = 0.95;
  DEConfig de{};
  DesignBounds bounds{};
  std::string config_hash;
  std::vector<VerificationRecord> verifications;
};
std::string design_to_json(const DesignFile& d);
DesignFile design_from_json(const std::string& text);
void write_design(const std::string& path, const DesignFile& d);
DesignFile read_design(const std::string& path);

/// Scatter of paired records with the fitted line and prediction band at each fast BV.
void write_fig3_csv(const std::string& path, const std::vector<PairedRecord>& pairs, const LinearFit& fit,
                    double level);
void write_fig4_csv(const std::string& path, const SpeedupStats& stats);
void write_fig6_csv(const std::string& path, const std::vector<VerificationRecord>& records);

std::string read_text(const std::string& path);
void write_text(const std::string& path, const std::string& text);

}  // namespace bvforge
