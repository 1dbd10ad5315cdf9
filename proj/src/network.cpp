#include "fedfreeze/network.hpp"

#include <algorithm>

namespace fedfreeze {
namespace {

using Mat = RowMatrix<double>;

// Unfolds a (C, H, W) image into (C*9, Hout*Wout) columns for a 3x3 kernel, padding 1.
void im2col(const double* x, Index c, Index h, Index w, Index stride, Index ho, Index wo,
            Mat& cols) {
  cols.resize(c * 9, ho * wo);
  for (Index ch = 0; ch < c; ++ch) {
    const double* plane = x + ch * h * w;
    for (Index ky = 0; ky < 3; ++ky) {
      for (Index kx = 0; kx < 3; ++kx) {
        double* row = cols.data() + (ch * 9 + ky * 3 + kx) * ho * wo;
        for (Index oy = 0; oy < ho; ++oy) {
          const Index iy = oy * stride + ky - 1;
          for (Index ox = 0; ox < wo; ++ox) {
            const Index ix = ox * stride + kx - 1;
            row[oy * wo + ox] = (iy >= 0 && iy < h && ix >= 0 && ix < w) ? plane[iy * w + ix] : 0.0;
          }
        }
      }
    }
  }
}

void col2im(const Mat& cols, Index c, Index h, Index w, Index stride, Index ho, Index wo,
            double* dx) {
  for (Index ch = 0; ch < c; ++ch) {
    double* plane = dx + ch * h * w;
    for (Index ky = 0; ky < 3; ++ky) {
      for (Index kx = 0; kx < 3; ++kx) {
        const double* row = cols.data() + (ch * 9 + ky * 3 + kx) * ho * wo;
        for (Index oy = 0; oy < ho; ++oy) {
          const Index iy = oy * stride + ky - 1;
          if (iy < 0 || iy >= h) continue;
          for (Index ox = 0; ox < wo; ++ox) {
            const Index ix = ox * stride + kx - 1;
            if (ix >= 0 && ix < w) plane[iy * w + ix] += row[oy * wo + ox];
          }
        }
      }
    }
  }
}

void upsample_nearest(const double* x, Index c, Index h, Index w, double* y) {
  const Index w2 = 2 * w;
  for (Index ch = 0; ch < c; ++ch) {
    for (Index yy = 0; yy < 2 * h; ++yy) {
      for (Index xx = 0; xx < w2; ++xx) {
        y[(ch * 2 * h + yy) * w2 + xx] = x[(ch * h + yy / 2) * w + xx / 2];
      }
    }
  }
}

void upsample_nearest_backward(const double* dy, Index c, Index h, Index w, double* dx) {
  const Index w2 = 2 * w;
  for (Index ch = 0; ch < c; ++ch) {
    for (Index yy = 0; yy < 2 * h; ++yy) {
      for (Index xx = 0; xx < w2; ++xx) {
        dx[(ch * h + yy / 2) * w + xx / 2] += dy[(ch * 2 * h + yy) * w2 + xx];
      }
    }
  }
}

struct ConvGeom {
  Index cin, h, w;  // conv input (after upsampling, if any)
  Index cout, ho, wo;
  Index stride;
};

ConvGeom conv_geom(const LayerSpec& L, const LayerGeometry& g) {
  switch (L.kind) {
    case LayerKind::conv_stride2: return {g.in_c, g.in_h, g.in_w, g.out_c, g.out_h, g.out_w, 2};
    case LayerKind::upsample2x_conv:
      return {g.in_c, 2 * g.in_h, 2 * g.in_w, g.out_c, g.out_h, g.out_w, 1};
    default: return {g.in_c, g.in_h, g.in_w, g.out_c, g.out_h, g.out_w, 1};
  }
}

// Conv input for sample b, upsampled when the layer requires it.
const double* conv_input(const LayerSpec& L, const LayerGeometry& g, const Tensor& in, Index b,
                         std::vector<double>& scratch) {
  const double* x = in.raw() + b * g.in_c * g.in_h * g.in_w;
  if (L.kind != LayerKind::upsample2x_conv) return x;
  scratch.assign(static_cast<std::size_t>(g.in_c * 4 * g.in_h * g.in_w), 0.0);
  upsample_nearest(x, g.in_c, g.in_h, g.in_w, scratch.data());
  return scratch.data();
}

void conv_forward(const LayerSpec& L, const LayerGeometry& g, const LayerParams& p,
                  const Tensor& in, Tensor& out) {
  const ConvGeom cg = conv_geom(L, g);
  const Index batch = in.dim(0);
  const auto W = p.weight.as_matrix(cg.cout, cg.cin * 9);
  const auto bias = p.bias.data();
  Mat cols;
  std::vector<double> scratch;
  for (Index b = 0; b < batch; ++b) {
    im2col(conv_input(L, g, in, b, scratch), cg.cin, cg.h, cg.w, cg.stride, cg.ho, cg.wo, cols);
    auto y = out.as_matrix(cg.cout, cg.ho * cg.wo, b * cg.cout * cg.ho * cg.wo);
    y.noalias() = W * cols;
    y.colwise() += bias;
  }
}

void conv_backward(const LayerSpec& L, const LayerGeometry& g, const LayerParams& p,
                   const Tensor& in, const Tensor& dout, bool want_params, bool want_input,
                   LayerGrad* grad, Tensor* din) {
  const ConvGeom cg = conv_geom(L, g);
  const Index batch = in.dim(0);
  const auto W = p.weight.as_matrix(cg.cout, cg.cin * 9);
  Mat cols, dcols;
  std::vector<double> scratch, dup;
  for (Index b = 0; b < batch; ++b) {
    const auto dy = dout.as_matrix(cg.cout, cg.ho * cg.wo, b * cg.cout * cg.ho * cg.wo);
    if (want_params) {
      im2col(conv_input(L, g, in, b, scratch), cg.cin, cg.h, cg.w, cg.stride, cg.ho, cg.wo, cols);
      grad->weight.as_matrix(cg.cout, cg.cin * 9).noalias() += dy * cols.transpose();
      grad->bias.data() += dy.rowwise().sum();
    }
    if (want_input) {
      dcols.noalias() = W.transpose() * dy;
      double* dx = din->raw() + b * g.in_c * g.in_h * g.in_w;
      if (L.kind == LayerKind::upsample2x_conv) {
        dup.assign(static_cast<std::size_t>(cg.cin * cg.h * cg.w), 0.0);
        col2im(dcols, cg.cin, cg.h, cg.w, cg.stride, cg.ho, cg.wo, dup.data());
        upsample_nearest_backward(dup.data(), g.in_c, g.in_h, g.in_w, dx);
      } else {
        col2im(dcols, cg.cin, cg.h, cg.w, cg.stride, cg.ho, cg.wo, dx);
      }
    }
  }
}

void add_into(std::optional<Tensor>& slot, const Tensor& t) {
  if (slot) {
    slot->data() += t.data();
  } else {
    slot = t;
  }
}

}  // namespace

void accumulate(Gradients& into, const Gradients& other) {
  for (const auto& [id, g] : other) {
    auto it = into.find(id);
    if (it == into.end()) {
      into.emplace(id, g);
    } else {
      it->second.weight.data() += g.weight.data();
      it->second.bias.data() += g.bias.data();
    }
  }
}

Network::Network(ModelConfig config)
    : config_(std::move(config)), geometry_(resolve_geometry(config_)) {}

Shape Network::output_shape(Index batch) const {
  const auto& g = geometry_.back();
  return {batch, g.out_c, g.out_h, g.out_w};
}

ForwardResult forward(const Network& net, const ParamSet& params, const Tensor& batch) {
  if (batch.rank() != 4 || batch.dim(1) != net.config().channels ||
      batch.dim(2) != net.config().height || batch.dim(3) != net.config().width) {
    throw ShapeError("forward: expected input " + to_string(net.input_shape(batch.rank() ? batch.dim(0) : 1)) +
                     ", got " + to_string(batch.shape()));
  }
  const Index B = batch.dim(0);
  const auto& layers = net.config().layers;
  const auto& geo = net.geometry();

  ForwardResult result;
  Tape& tape = result.tape;
  tape.network_ = &net;
  tape.params_ = params;
  tape.input_ = batch;
  tape.outputs_.reserve(layers.size());

  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& L = layers[i];
    const LayerGeometry& g = geo[i];
    const Tensor& in = i == 0 ? tape.input_ : tape.outputs_[i - 1];
    Tensor out({B, g.out_c, g.out_h, g.out_w});
    switch (L.kind) {
      case LayerKind::conv3x3:
      case LayerKind::conv_stride2:
      case LayerKind::upsample2x_conv: {
        const LayerParams& p = tape.params_.at(L.id);
        if (p.weight.shape() != Shape{g.out_c, g.in_c, 3, 3} || p.bias.shape() != Shape{g.out_c}) {
          throw ShapeError("forward: layer '" + L.id + "' expected weight " +
                           to_string({g.out_c, g.in_c, 3, 3}) + ", got " + to_string(p.weight.shape()));
        }
        conv_forward(L, g, p, in, out);
        break;
      }
      case LayerKind::relu:
        out.data() = in.data().cwiseMax(0.0);
        break;
      case LayerKind::leaky_relu:
        out.data() = in.data().unaryExpr([s = L.slope](double v) { return v > 0.0 ? v : s * v; });
        break;
      case LayerKind::concat_skip:
      case LayerKind::residual_add: {
        const int si = *g.source_index;
        const Tensor& src = si < 0 ? tape.input_ : tape.outputs_[static_cast<std::size_t>(si)];
        const Index plane = g.in_h * g.in_w;
        if (L.kind == LayerKind::residual_add) {
          out.data() = in.data() + src.data();
        } else {
          for (Index b = 0; b < B; ++b) {
            out.data().segment(b * g.out_c * plane, g.in_c * plane) =
                in.data().segment(b * g.in_c * plane, g.in_c * plane);
            out.data().segment(b * g.out_c * plane + g.in_c * plane, g.src_c * plane) =
                src.data().segment(b * g.src_c * plane, g.src_c * plane);
          }
        }
        break;
      }
    }
    tape.outputs_.push_back(std::move(out));
  }
  result.prediction = tape.outputs_.back();
  return result;
}

Gradients backward(Tape& tape, const Tensor& loss_grad, const FreezeMask& mask) {
  if (!tape.network_) throw ContractError("backward: tape was not produced by forward()");
  if (tape.consumed_) throw ContractError("backward: stale tape (already consumed)");
  tape.consumed_ = true;

  const Network& net = *tape.network_;
  const auto& layers = net.config().layers;
  const auto& geo = net.geometry();
  if (!same_shape(loss_grad, tape.outputs_.back())) {
    throw ShapeError("backward: loss gradient shape " + to_string(loss_grad.shape()) +
                     " differs from prediction " + to_string(tape.outputs_.back().shape()));
  }
  const GradFlow flow = grad_flow(net.config(), geo, mask);
  const Index B = tape.input_.dim(0);

  std::vector<std::optional<Tensor>> dout(layers.size());
  dout.back() = loss_grad;
  Gradients grads;

  for (std::size_t k = layers.size(); k-- > 0;) {
    if (!dout[k]) continue;
    const LayerSpec& L = layers[k];
    const LayerGeometry& g = geo[k];
    const Tensor& in = k == 0 ? tape.input_ : tape.outputs_[k - 1];
    const Tensor& dy = *dout[k];
    const bool pass_input = flow.input_requires[k];

    switch (L.kind) {
      case LayerKind::conv3x3:
      case LayerKind::conv_stride2:
      case LayerKind::upsample2x_conv: {
        const LayerParams& p = tape.params_.at(L.id);
        LayerGrad* lg = nullptr;
        if (flow.trainable[k]) {
          lg = &grads.emplace(L.id, LayerGrad{Tensor(p.weight.shape()), Tensor(p.bias.shape())})
                    .first->second;
        }
        std::optional<Tensor> din;
        if (pass_input) din.emplace(in.shape());
        conv_backward(L, g, p, in, dy, flow.trainable[k], pass_input, lg, din ? &*din : nullptr);
        if (din) add_into(dout[k - 1], *din);
        break;
      }
      case LayerKind::relu:
      case LayerKind::leaky_relu:
        if (pass_input) {
          const double s = L.kind == LayerKind::relu ? 0.0 : L.slope;
          Tensor din(in.shape());
          din.data() = dy.data().cwiseProduct(
              in.data().unaryExpr([s](double v) { return v > 0.0 ? 1.0 : s; }));
          add_into(dout[k - 1], din);
        }
        break;
      case LayerKind::concat_skip:
      case LayerKind::residual_add: {
        const int si = *g.source_index;
        const bool pass_source = flow.source_requires[k];
        if (L.kind == LayerKind::residual_add) {
          if (pass_input) add_into(dout[k - 1], dy);
          if (pass_source) add_into(dout[static_cast<std::size_t>(si)], dy);
          break;
        }
        const Index plane = g.in_h * g.in_w;
        if (pass_input) {
          Tensor din(in.shape());
          for (Index b = 0; b < B; ++b) {
            din.data().segment(b * g.in_c * plane, g.in_c * plane) =
                dy.data().segment(b * g.out_c * plane, g.in_c * plane);
          }
          add_into(dout[k - 1], din);
        }
        if (pass_source) {
          Tensor dsrc({B, g.src_c, g.in_h, g.in_w});
          for (Index b = 0; b < B; ++b) {
            dsrc.data().segment(b * g.src_c * plane, g.src_c * plane) =
                dy.data().segment(b * g.out_c * plane + g.in_c * plane, g.src_c * plane);
          }
          add_into(dout[static_cast<std::size_t>(si)], dsrc);
        }
        break;
      }
    }
    dout[k].reset();
  }
  return grads;
}

LossResult loss_and_grad(const Tensor& prediction, const Tensor& target, const ParamSet& params,
                         const FreezeMask& mask, std::optional<ProxTerm> prox) {
  if (!same_shape(prediction, target)) {
    throw ShapeError("loss: prediction " + to_string(prediction.shape()) + " vs target " +
                     to_string(target.shape()));
  }
  LossResult r;
  const double n = static_cast<double>(prediction.size());
  const Eigen::VectorXd diff = prediction.data() - target.data();
  r.data_loss = diff.squaredNorm() / n;
  r.output_grad = Tensor(prediction.shape(), (2.0 / n) * diff);

  if (prox && prox->mu != 0.0) {
    if (prox->mu < 0.0) throw ContractError("loss: proximal mu must be non-negative");
    if (!prox->anchor) throw ContractError("loss: proximal term needs an anchor");
    double sq = 0.0;
    for (const auto& l : params.layers()) {
      if (mask.frozen(l.group)) continue;
      const LayerParams* a = prox->anchor->find(l.id);
      if (!a || a->group != l.group || !same_shape(a->weight, l.weight) ||
          !same_shape(a->bias, l.bias)) {
        throw ContractError("loss: anchor partition mismatch at layer '" + l.id + "'");
      }
      const Eigen::VectorXd dw = l.weight.data() - a->weight.data();
      const Eigen::VectorXd db = l.bias.data() - a->bias.data();
      sq += dw.squaredNorm() + db.squaredNorm();
      r.prox_grads.emplace(l.id, LayerGrad{Tensor(l.weight.shape(), prox->mu * dw),
                                           Tensor(l.bias.shape(), prox->mu * db)});
    }
    r.prox_loss = 0.5 * prox->mu * sq;
  }
  r.loss = r.data_loss + r.prox_loss;
  return r;
}

}  // namespace fedfreeze
