#include "fedfreeze/model.hpp"

#include "fedfreeze/random.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace fedfreeze {

const char* to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv3x3: return "conv3x3";
    case LayerKind::conv_stride2: return "conv_stride2";
    case LayerKind::upsample2x_conv: return "upsample2x_conv";
    case LayerKind::relu: return "activation_relu";
    case LayerKind::leaky_relu: return "activation_leaky_relu";
    case LayerKind::concat_skip: return "concat_skip";
    case LayerKind::residual_add: return "residual_add";
  }
  return "?";
}

const char* to_string(Group group) { return group == Group::encoder ? "encoder" : "decoder"; }

LayerKind layer_kind_from_string(const std::string& s) {
  for (auto k : {LayerKind::conv3x3, LayerKind::conv_stride2, LayerKind::upsample2x_conv,
                 LayerKind::relu, LayerKind::leaky_relu, LayerKind::concat_skip,
                 LayerKind::residual_add}) {
    if (s == to_string(k)) return k;
  }
  throw ConfigError("unknown layer kind '" + s + "'");
}

LayerSpec LayerSpec::conv(std::string id, Index in, Index out, Group g) {
  return {std::move(id), LayerKind::conv3x3, in, out, g, 0.01, {}};
}
LayerSpec LayerSpec::down(std::string id, Index in, Index out, Group g) {
  return {std::move(id), LayerKind::conv_stride2, in, out, g, 0.01, {}};
}
LayerSpec LayerSpec::up(std::string id, Index in, Index out, Group g) {
  return {std::move(id), LayerKind::upsample2x_conv, in, out, g, 0.01, {}};
}
LayerSpec LayerSpec::relu(std::string id, Index channels, Group g) {
  return {std::move(id), LayerKind::relu, channels, channels, g, 0.0, {}};
}
LayerSpec LayerSpec::leaky(std::string id, Index channels, double slope, Group g) {
  return {std::move(id), LayerKind::leaky_relu, channels, channels, g, slope, {}};
}
LayerSpec LayerSpec::concat(std::string id, std::string source, Index in, Index out, Group g) {
  return {std::move(id), LayerKind::concat_skip, in, out, g, 0.01, std::move(source)};
}
LayerSpec LayerSpec::residual(std::string id, std::string source, Index channels, Group g) {
  return {std::move(id), LayerKind::residual_add, channels, channels, g, 0.01, std::move(source)};
}

std::vector<LayerGeometry> resolve_geometry(const ModelConfig& config) {
  if (config.channels <= 0 || config.height <= 0 || config.width <= 0) {
    throw ConfigError("model input shape must be positive");
  }
  if (config.layers.empty()) throw ConfigError("model has no layers");

  std::vector<LayerGeometry> geo;
  std::map<std::string, int> index_of;
  Index c = config.channels, h = config.height, w = config.width;
  bool has_encoder = false, has_decoder = false;

  for (std::size_t i = 0; i < config.layers.size(); ++i) {
    const LayerSpec& L = config.layers[i];
    auto fail = [&](const std::string& why) {
      throw ConfigError("layer '" + L.id + "': " + why);
    };
    if (L.id.empty() || L.id == kInputId) fail("invalid layer id");
    if (index_of.count(L.id)) fail("duplicate layer id");
    if (L.in_channels != c) {
      fail("in_channels " + std::to_string(L.in_channels) + " but incoming tensor has " +
           std::to_string(c));
    }
    if (L.out_channels <= 0) fail("out_channels must be positive");

    LayerGeometry g{c, h, w, c, h, w, std::nullopt, 0};
    switch (L.kind) {
      case LayerKind::conv3x3:
        g.out_c = L.out_channels;
        break;
      case LayerKind::conv_stride2:
        if (h % 2 || w % 2) fail("stride-2 convolution needs even spatial dims");
        g.out_c = L.out_channels;
        g.out_h = h / 2;
        g.out_w = w / 2;
        break;
      case LayerKind::upsample2x_conv:
        g.out_c = L.out_channels;
        g.out_h = 2 * h;
        g.out_w = 2 * w;
        break;
      case LayerKind::relu:
      case LayerKind::leaky_relu:
        if (L.out_channels != c) fail("activation must preserve channels");
        if (L.kind == LayerKind::leaky_relu && !(L.slope >= 0.0 && L.slope < 1.0)) {
          fail("leaky slope must be in [0,1)");
        }
        break;
      case LayerKind::concat_skip:
      case LayerKind::residual_add: {
        Index sc, sh, sw;
        if (L.source_id == kInputId) {
          g.source_index = -1;
          sc = config.channels, sh = config.height, sw = config.width;
        } else {
          auto it = index_of.find(L.source_id);
          if (it == index_of.end()) fail("skip source '" + L.source_id + "' is not an earlier layer");
          g.source_index = it->second;
          const auto& s = geo[static_cast<std::size_t>(it->second)];
          sc = s.out_c, sh = s.out_h, sw = s.out_w;
        }
        if (sh != h || sw != w) fail("skip source spatial size differs from current");
        g.src_c = sc;
        if (L.kind == LayerKind::concat_skip) {
          if (L.out_channels != c + sc) {
            fail("concat out_channels should be " + std::to_string(c + sc));
          }
          g.out_c = c + sc;
        } else {
          if (sc != c || L.out_channels != c) fail("residual add needs matching channels");
        }
        break;
      }
    }
    if (is_parameterized(L.kind)) {
      (L.group == Group::encoder ? has_encoder : has_decoder) = true;
    }
    index_of[L.id] = static_cast<int>(i);
    geo.push_back(g);
    c = g.out_c, h = g.out_h, w = g.out_w;
  }
  if (!has_encoder || !has_decoder) {
    throw ConfigError("model needs at least one encoder and one decoder convolution");
  }
  if (h != config.height || w != config.width) {
    throw ConfigError("layer '" + config.layers.back().id +
                      "': output spatial size differs from the input");
  }
  return geo;
}

void ParamSet::add(LayerParams layer) {
  if (find(layer.id)) throw ContractError("duplicate parameter layer '" + layer.id + "'");
  layers_.push_back(std::move(layer));
}

const LayerParams* ParamSet::find(const std::string& id) const {
  for (const auto& l : layers_) {
    if (l.id == id) return &l;
  }
  return nullptr;
}

LayerParams* ParamSet::find(const std::string& id) {
  return const_cast<LayerParams*>(std::as_const(*this).find(id));
}

const LayerParams& ParamSet::at(const std::string& id) const {
  const auto* l = find(id);
  if (!l) throw ContractError("no parameters for layer '" + id + "'");
  return *l;
}

LayerParams& ParamSet::at(const std::string& id) {
  return const_cast<LayerParams&>(std::as_const(*this).at(id));
}

std::vector<std::string> ParamSet::ids(Partition p) const {
  std::vector<std::string> out;
  for (const auto& l : layers_) {
    if (in_partition(l.group, p)) out.push_back(l.id);
  }
  return out;
}

ParamSet ParamSet::subset(Partition p) const {
  ParamSet out;
  for (const auto& l : layers_) {
    if (in_partition(l.group, p)) out.layers_.push_back(l);
  }
  return out;
}

void ParamSet::assign_from(const ParamSet& other) {
  for (const auto& src : other.layers_) {
    auto& dst = at(src.id);
    if (dst.group != src.group || !same_shape(dst.weight, src.weight) ||
        !same_shape(dst.bias, src.bias)) {
      throw ContractError("parameter partition mismatch at layer '" + src.id + "'");
    }
    dst.weight = src.weight;
    dst.bias = src.bias;
  }
}

bool bit_identical(const ParamSet& a, const ParamSet& b) {
  if (a.layers_.size() != b.layers_.size()) return false;
  for (std::size_t i = 0; i < a.layers_.size(); ++i) {
    const auto& x = a.layers_[i];
    const auto& y = b.layers_[i];
    if (x.id != y.id || x.group != y.group || !bit_identical(x.weight, y.weight) ||
        !bit_identical(x.bias, y.bias)) {
      return false;
    }
  }
  return true;
}

bool same_structure(const ParamSet& a, const ParamSet& b) {
  if (a.layers_.size() != b.layers_.size()) return false;
  for (std::size_t i = 0; i < a.layers_.size(); ++i) {
    const auto& x = a.layers_[i];
    const auto& y = b.layers_[i];
    if (x.id != y.id || x.group != y.group || !same_shape(x.weight, y.weight) ||
        !same_shape(x.bias, y.bias)) {
      return false;
    }
  }
  return true;
}

ParamSet build_model(const ModelConfig& config) {
  resolve_geometry(config);
  ParamSet params;
  for (const auto& L : config.layers) {
    if (!is_parameterized(L.kind)) continue;
    Tensor weight({L.out_channels, L.in_channels, 3, 3});
    const double fan_in = static_cast<double>(L.in_channels * 9);
    const double limit = std::sqrt(6.0 / fan_in);
    Rng rng(mix_seed({config.seed, hash_string(L.id)}));
    for (Index i = 0; i < weight.size(); ++i) weight[i] = rng.uniform(-limit, limit);
    params.add({L.id, L.group, std::move(weight), Tensor({L.out_channels})});
  }
  return params;
}

std::int64_t param_count(const ParamSet& params, Partition p) {
  std::int64_t n = 0;
  for (const auto& l : params.layers()) {
    if (in_partition(l.group, p)) n += l.weight.size() + l.bias.size();
  }
  return n;
}

GradFlow grad_flow(const ModelConfig& config, const std::vector<LayerGeometry>& geometry,
                   const FreezeMask& mask) {
  const std::size_t n = config.layers.size();
  GradFlow f{std::vector<bool>(n), std::vector<bool>(n), std::vector<bool>(n),
             std::vector<bool>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    const auto& L = config.layers[i];
    f.trainable[i] = is_parameterized(L.kind) && !mask.frozen(L.group);
    f.input_requires[i] = i > 0 && f.output_requires[i - 1];
    if (geometry[i].source_index && *geometry[i].source_index >= 0) {
      f.source_requires[i] = f.output_requires[static_cast<std::size_t>(*geometry[i].source_index)];
    }
    f.output_requires[i] = f.trainable[i] || f.input_requires[i] || f.source_requires[i];
  }
  return f;
}

}  // namespace fedfreeze
