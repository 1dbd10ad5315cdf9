#pragma once

#include "fedfreeze/network.hpp"

#include <cstdint>
#include <map>
#include <string>

namespace fedfreeze {

struct AdamMoments {
  Tensor m_weight, v_weight;
  Tensor m_bias, v_bias;
};

struct OptimizerState {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::int64_t step = 0;
  std::map<std::string, AdamMoments> moments;
};

/// Moment buffers shaped like `params`, zero-initialized.
OptimizerState make_adam(const ParamSet& params, double learning_rate);

/// Bias-corrected Adam update on unfrozen layers. A gradient for a frozen layer is a
/// ContractError; frozen tensors and their moments are left untouched.
void adam_step(ParamSet& params, const Gradients& grads, OptimizerState& state,
               const FreezeMask& mask);

}  // namespace fedfreeze
