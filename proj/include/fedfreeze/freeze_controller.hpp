#pragma once

#include "fedfreeze/model.hpp"

#include <optional>
#include <span>
#include <vector>

namespace fedfreeze {

/// Aggregated encoder weight tensors at the end of one round.
struct EncoderSnapshot {
  int round = 0;
  std::vector<Tensor> layers;
};

/// Weight tensors (biases excluded) of the encoder partition, in layer order.
EncoderSnapshot encoder_snapshot(const ParamSet& params, int round);

/// Mean over layers of each layer's mean absolute element difference. Every layer counts
/// once regardless of its size.
double encoder_drift(const EncoderSnapshot& current, const EncoderSnapshot& previous);

/// |current - previous| / current * 100, and 0 when current drift is 0.
double rho_percent(double drift_current, double drift_previous);

/// Sample-size weighted mean of client encoders.
EncoderSnapshot encoder_mean_weights(std::span<const EncoderSnapshot> client_encoders,
                                     std::span<const double> client_sizes);

struct DriftRecord {
  int round = 0;
  std::optional<double> drift;        // from the 2nd observed round
  std::optional<double> rho_percent;  // from the 3rd observed round
  int consecutive_hits = 0;
  bool frozen = false;
};

enum class FreezeDecision { continue_training, freeze_now };

struct FreezeState {
  double tau = 5.0;
  int patience = 3;
  int consecutive_hits = 0;
  bool frozen = false;
  std::optional<int> freeze_round;
  /// When false the state only monitors: hits keep counting and the freeze never fires.
  bool latching = true;

  /// Patience update for one round's rho value (absent rho resets nothing and counts nothing).
  FreezeDecision observe_rho(int round, std::optional<double> rho);
};

/// Server-side monitor: tracks encoder drift round by round and latches the freeze.
class FreezeController {
 public:
  FreezeController(double tau, int patience, bool latching = true);

  /// Observes the aggregated encoder after `snapshot.round`. Rounds must increase strictly
  /// and observing after the freeze fired is a ContractError.
  FreezeDecision observe(EncoderSnapshot snapshot);

  const FreezeState& state() const { return state_; }
  const std::vector<DriftRecord>& history() const { return history_; }

 private:
  FreezeState state_;
  std::vector<DriftRecord> history_;
  std::optional<EncoderSnapshot> previous_;
};

}  // namespace fedfreeze
