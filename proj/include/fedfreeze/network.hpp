#pragma once

#include "fedfreeze/model.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace fedfreeze {

struct LayerGrad {
  Tensor weight;
  Tensor bias;
};

/// Gradients keyed by layer id; only layers that received an update signal are present.
using Gradients = std::map<std::string, LayerGrad>;

void accumulate(Gradients& into, const Gradients& other);

/// A model description with its validated geometry. Immutable after construction.
class Network {
 public:
  explicit Network(ModelConfig config);

  const ModelConfig& config() const { return config_; }
  const std::vector<LayerGeometry>& geometry() const { return geometry_; }
  Shape input_shape(Index batch) const { return {batch, config_.channels, config_.height, config_.width}; }
  Shape output_shape(Index batch) const;

 private:
  ModelConfig config_;
  std::vector<LayerGeometry> geometry_;
};

struct ForwardResult;

/// Activations recorded by forward(); consumed by exactly one backward().
class Tape {
 public:
  bool consumed() const { return consumed_; }

 private:
  friend ForwardResult forward(const Network&, const ParamSet&, const Tensor&);
  friend Gradients backward(Tape&, const Tensor&, const FreezeMask&);

  const Network* network_ = nullptr;
  ParamSet params_;
  Tensor input_;
  std::vector<Tensor> outputs_;
  bool consumed_ = false;
};

struct ForwardResult {
  Tensor prediction;
  Tape tape;
};

/// Batch is (B, C, H, W). Throws ShapeError with expected and actual shapes.
ForwardResult forward(const Network& net, const ParamSet& params, const Tensor& batch);

/// Backpropagates loss_grad (shape of the prediction). Gradients are produced only for
/// unfrozen layers, and propagation stops where no earlier layer is trainable.
Gradients backward(Tape& tape, const Tensor& loss_grad, const FreezeMask& mask);

struct ProxTerm {
  double mu = 0.0;
  const ParamSet* anchor = nullptr;
};

struct LossResult {
  double loss = 0.0;
  double data_loss = 0.0;
  double prox_loss = 0.0;
  Tensor output_grad;
  Gradients prox_grads;
};

/// Pixel MSE plus the proximal penalty (mu/2)·||w - anchor||² over unfrozen parameters.
LossResult loss_and_grad(const Tensor& prediction, const Tensor& target, const ParamSet& params,
                         const FreezeMask& mask, std::optional<ProxTerm> prox = std::nullopt);

}  // namespace fedfreeze
