#pragma once

#include "fedfreeze/federation.hpp"
#include "fedfreeze/metrics.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace fedfreeze {

const char* to_string(FreezingMode mode);

/// Everything needed to reproduce one arm of an experiment.
struct ExperimentConfig {
  TrainConfig train;
  std::string model = "unet_concat";
  Index image_size = 32;
  std::vector<SiloConfig> silos;
  SiloConfig eval_silo;
  int repetitions = 5;
  std::string output_dir = "runs";

  /// Throws ConfigError with a dotted field path.
  void validate() const;
  bool operator==(const ExperimentConfig&) const = default;
};

/// Desk-scale defaults: 4 training centres, held-out centre E, 25 rounds, tau 5, patience 3.
ExperimentConfig default_experiment_config();

/// YAML text with sections train / freezing / augment / energy / silos / eval_silo. Missing
/// keys take defaults; unknown keys and ill-typed values are ConfigErrors.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string serialize_config(const ExperimentConfig& cfg);

struct EvalCase {
  int subject_id = 0;
  ImageMetrics metrics;
};

struct LedgerTotals {
  std::int64_t flops_forward = 0;
  std::int64_t flops_backward = 0;
  std::int64_t bytes_uplink = 0;
  std::int64_t bytes_downlink = 0;
  std::int64_t params_updated = 0;
  double energy_kwh = 0.0;
  double co2eq_kg = 0.0;
};

/// Sums over rounds then clients, in order.
LedgerTotals sum_ledger(const std::vector<RoundRecord>& rounds);

struct RunReport {
  std::string run_id;
  int repetition = 0;
  std::uint64_t seed = 0;
  ExperimentConfig config;
  std::int64_t params_encoder = 0;
  std::int64_t params_decoder = 0;
  std::vector<RoundRecord> rounds;
  std::optional<int> freeze_round;
  std::vector<EvalCase> eval;
  LedgerTotals totals;
  double wall_ms_total = 0.0;
  ParamSet final_params;
};

/// Preprocessed data for the training silos and the held-out silo.
std::vector<std::vector<PairedSample>> prepare_silos(const std::vector<SiloConfig>& silos, Index size);

/// Clamped prediction metrics for each held-out case.
std::vector<EvalCase> evaluate(const Network& net, const ParamSet& params,
                               const std::vector<PairedSample>& cases);

/// Runs repetition r with seed train.seed + r.
RunReport run_repetition(const ExperimentConfig& cfg, int repetition);

/// Writes <run_id>.json, <run_id>_metrics.csv and <run_id>_final.params atomically.
void write_run_artifacts(const RunReport& report, const std::filesystem::path& dir);

}  // namespace fedfreeze
