#include "fedfreeze/adam.hpp"

#include <cmath>

namespace fedfreeze {

OptimizerState make_adam(const ParamSet& params, double learning_rate) {
  OptimizerState s;
  s.learning_rate = learning_rate;
  for (const auto& l : params.layers()) {
    s.moments.emplace(l.id, AdamMoments{Tensor(l.weight.shape()), Tensor(l.weight.shape()),
                                        Tensor(l.bias.shape()), Tensor(l.bias.shape())});
  }
  return s;
}

namespace {

void update(Tensor& w, const Tensor& g, Tensor& m, Tensor& v, const OptimizerState& s,
            double correction1, double correction2) {
  if (!same_shape(w, g) || !same_shape(w, m) || !same_shape(w, v)) {
    throw ShapeError("adam: gradient/moment shape " + to_string(g.shape()) +
                     " does not match parameter " + to_string(w.shape()));
  }
  m.data() = s.beta1 * m.data() + (1.0 - s.beta1) * g.data();
  v.data() = s.beta2 * v.data() + (1.0 - s.beta2) * g.data().cwiseAbs2();
  const double lr = s.learning_rate;
  const double eps = s.epsilon;
  w.data().array() -= lr * (m.data().array() / correction1) /
                      ((v.data().array() / correction2).sqrt() + eps);
}

}  // namespace

void adam_step(ParamSet& params, const Gradients& grads, OptimizerState& state,
               const FreezeMask& mask) {
  for (const auto& [id, g] : grads) {
    const LayerParams& l = params.at(id);
    if (mask.frozen(l.group)) {
      throw ContractError("adam: gradient supplied for frozen layer '" + id + "'");
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (const auto& [id, g] : grads) {
    LayerParams& l = params.at(id);
    auto it = state.moments.find(id);
    if (it == state.moments.end()) {
      it = state.moments
               .emplace(id, AdamMoments{Tensor(l.weight.shape()), Tensor(l.weight.shape()),
                                        Tensor(l.bias.shape()), Tensor(l.bias.shape())})
               .first;
    }
    update(l.weight, g.weight, it->second.m_weight, it->second.v_weight, state, c1, c2);
    update(l.bias, g.bias, it->second.m_bias, it->second.v_bias, state, c1, c2);
  }
}

}  // namespace fedfreeze
