#include "fedfreeze/freeze_controller.hpp"

#include <cmath>

namespace fedfreeze {

EncoderSnapshot encoder_snapshot(const ParamSet& params, int round) {
  EncoderSnapshot s{round, {}};
  for (const auto& l : params.layers()) {
    if (l.group == Group::encoder) s.layers.push_back(l.weight);
  }
  return s;
}

double encoder_drift(const EncoderSnapshot& current, const EncoderSnapshot& previous) {
  if (current.layers.size() != previous.layers.size()) {
    throw ShapeError("encoder drift: layer count " + std::to_string(current.layers.size()) +
                     " vs " + std::to_string(previous.layers.size()));
  }
  if (current.layers.empty()) throw ShapeError("encoder drift: empty snapshot");
  double sum = 0.0;
  for (std::size_t i = 0; i < current.layers.size(); ++i) {
    const Tensor& a = current.layers[i];
    const Tensor& b = previous.layers[i];
    if (!same_shape(a, b)) {
      throw ShapeError("encoder drift: layer " + std::to_string(i) + " shape " +
                       to_string(a.shape()) + " vs " + to_string(b.shape()));
    }
    sum += (a.data() - b.data()).cwiseAbs().mean();
  }
  return sum / static_cast<double>(current.layers.size());
}

double rho_percent(double drift_current, double drift_previous) {
  if (drift_current == 0.0) return 0.0;
  return std::abs(drift_current - drift_previous) / drift_current * 100.0;
}

EncoderSnapshot encoder_mean_weights(std::span<const EncoderSnapshot> client_encoders,
                                     std::span<const double> client_sizes) {
  if (client_encoders.empty()) throw ContractError("encoder mean: no client encoders");
  if (client_encoders.size() != client_sizes.size()) {
    throw ContractError("encoder mean: one size per client required");
  }
  double total = 0.0;
  for (double n : client_sizes) {
    if (!(n > 0.0)) throw ContractError("encoder mean: client sizes must be positive");
    total += n;
  }
  const auto& first = client_encoders.front();
  EncoderSnapshot out{first.round, {}};
  for (std::size_t i = 0; i < first.layers.size(); ++i) {
    Tensor acc(first.layers[i].shape());
    for (std::size_t k = 0; k < client_encoders.size(); ++k) {
      const auto& layers = client_encoders[k].layers;
      if (layers.size() != first.layers.size() || !same_shape(layers[i], acc)) {
        throw ShapeError("encoder mean: client " + std::to_string(k) + " layer " +
                         std::to_string(i) + " shape mismatch");
      }
      acc.data() += (client_sizes[k] / total) * layers[i].data();
    }
    out.layers.push_back(std::move(acc));
  }
  return out;
}

FreezeDecision FreezeState::observe_rho(int round, std::optional<double> rho) {
  if (frozen) throw ContractError("freeze state: already frozen");
  if (!rho) return FreezeDecision::continue_training;
  consecutive_hits = *rho < tau ? consecutive_hits + 1 : 0;
  if (latching && consecutive_hits == patience) {
    frozen = true;
    freeze_round = round;
    return FreezeDecision::freeze_now;
  }
  return FreezeDecision::continue_training;
}

FreezeController::FreezeController(double tau, int patience, bool latching) {
  if (!(tau >= 0.0)) throw ContractError("freeze controller: tau must be non-negative");
  if (patience < 1) throw ContractError("freeze controller: patience must be >= 1");
  state_.tau = tau;
  state_.patience = patience;
  state_.latching = latching;
}

FreezeDecision FreezeController::observe(EncoderSnapshot snapshot) {
  if (state_.frozen) throw ContractError("freeze controller: observe after freeze");
  if (!history_.empty() && snapshot.round <= history_.back().round) {
    throw ContractError("freeze controller: round " + std::to_string(snapshot.round) +
                        " does not follow " + std::to_string(history_.back().round));
  }
  DriftRecord rec;
  rec.round = snapshot.round;
  if (previous_) {
    rec.drift = encoder_drift(snapshot, *previous_);
    if (!history_.empty() && history_.back().drift) {
      rec.rho_percent = rho_percent(*rec.drift, *history_.back().drift);
    }
  }
  const FreezeDecision d = state_.observe_rho(snapshot.round, rec.rho_percent);
  rec.consecutive_hits = state_.consecutive_hits;
  rec.frozen = state_.frozen;
  history_.push_back(rec);
  previous_ = std::move(snapshot);
  return d;
}

}  // namespace fedfreeze
