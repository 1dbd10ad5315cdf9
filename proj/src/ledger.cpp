#include "fedfreeze/ledger.hpp"

namespace fedfreeze {

std::int64_t conv_flops(const ModelConfig& config, std::size_t layer_index, Index batch_size) {
  const auto geo = resolve_geometry(config);
  const auto& L = config.layers.at(layer_index);
  if (!is_parameterized(L.kind)) return 0;
  const auto& g = geo[layer_index];
  return 2 * 9 * g.in_c * g.out_c * g.out_h * g.out_w * batch_size;
}

FlopCount flops_for(const ModelConfig& config, Index batch_size, const FreezeMask& mask) {
  const auto geo = resolve_geometry(config);
  const GradFlow flow = grad_flow(config, geo, mask);
  FlopCount total;
  for (std::size_t i = 0; i < config.layers.size(); ++i) {
    if (!is_parameterized(config.layers[i].kind)) continue;
    const auto& g = geo[i];
    const std::int64_t f = 2 * 9 * g.in_c * g.out_c * g.out_h * g.out_w * batch_size;
    total.forward += f;
    if (flow.trainable[i]) total.backward += f;
    if (flow.input_requires[i]) total.backward += f;
  }
  return total;
}

void LedgerEntry::apply_energy(const EnergyModel& model) {
  energy_kwh = static_cast<double>(flops_forward + flops_backward) * model.kwh_per_flop;
  co2eq_kg = energy_kwh * model.carbon_intensity;
}

}  // namespace fedfreeze
