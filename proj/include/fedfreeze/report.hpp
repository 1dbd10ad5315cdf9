#pragma once

#include "fedfreeze/experiment.hpp"
#include "fedfreeze/stats.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace fedfreeze {

inline constexpr int kReportSchemaVersion = 1;

nlohmann::json config_to_json(const ExperimentConfig& cfg);
nlohmann::json report_to_json(const RunReport& report);

/// The report without its "timing" member; equal seeds give equal payloads.
nlohmann::json canonical_payload(const nlohmann::json& report);

/// run_id,seed,centre,subject_id,mae,psnr,ssim (PSNR of identical images written as inf).
std::string metrics_csv(const RunReport& report);

nlohmann::json load_report(const std::filesystem::path& path);

/// Writes to a temporary sibling and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

struct ArmSummary {
  std::size_t reports = 0;
  std::vector<double> time_s, flops, energy_kwh, co2eq_kg, trainable_params;
  std::vector<double> mae;  // pooled per-case values
};

struct Comparison {
  std::string model_preset;
  ArmSummary off, on;
  TTestResult ttest;
  std::string stars;
  nlohmann::json json;
  std::string text;
};

/// Frozen vs unfrozen comparison. Reports of both arms must use the same model preset.
Comparison compare(const std::vector<nlohmann::json>& off_reports, const std::vector<nlohmann::json>& on_reports);

/// Percent reduction of `on` relative to `off`; 0 when `off` is 0.
double percent_reduction(double off, double on);

struct DriftRow {
  int round = 0;
  std::optional<double> drift;
  std::optional<double> rho_percent;
  int consecutive_hits = 0;
  bool frozen = false;
  bool froze_this_round = false;
};

/// Per-round drift log of a report; throws if the report carries none.
std::vector<DriftRow> drift_trace(const nlohmann::json& report);
std::string format_drift_trace(const std::vector<DriftRow>& rows);
std::string drift_trace_csv(const std::vector<DriftRow>& rows);

}  // namespace fedfreeze
