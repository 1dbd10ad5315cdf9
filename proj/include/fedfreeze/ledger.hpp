#pragma once

#include "fedfreeze/model.hpp"

#include <cstdint>

namespace fedfreeze {

struct FlopCount {
  std::int64_t forward = 0;
  std::int64_t backward = 0;

  FlopCount& operator+=(const FlopCount& o) {
    forward += o.forward;
    backward += o.backward;
    return *this;
  }
  bool operator==(const FlopCount&) const = default;
};

/// Closed-form convolution FLOPs (2 per multiply-add; element-wise layers are not counted).
/// Backward counts the weight gradient of each trainable convolution and the input gradient
/// of each convolution whose input depends on a trainable parameter.
FlopCount flops_for(const ModelConfig& config, Index batch_size, const FreezeMask& mask);

/// Forward FLOPs of a single convolution layer for the given batch.
std::int64_t conv_flops(const ModelConfig& config, std::size_t layer_index, Index batch_size);

struct EnergyModel {
  double kwh_per_flop = 1e-13;
  double carbon_intensity = 0.4;  // kgCO2eq per kWh

  bool operator==(const EnergyModel&) const = default;
};

struct LedgerEntry {
  std::int64_t flops_forward = 0;
  std::int64_t flops_backward = 0;
  std::int64_t params_updated = 0;
  std::int64_t bytes_uplink = 0;
  std::int64_t bytes_downlink = 0;
  double wall_ms = 0.0;
  double energy_kwh = 0.0;
  double co2eq_kg = 0.0;

  /// Fills energy and emissions from the FLOP counts.
  void apply_energy(const EnergyModel& model);
};

}  // namespace fedfreeze
