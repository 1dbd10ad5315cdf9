#pragma once

#include "fedfreeze/tensor.hpp"

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace fedfreeze {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

enum class LayerKind {
  conv3x3,
  conv_stride2,
  upsample2x_conv,
  relu,
  leaky_relu,
  concat_skip,
  residual_add,
};

enum class Group { encoder, decoder };

/// Partition selector for counting and serialization.
enum class Partition { encoder, decoder, all };

const char* to_string(LayerKind kind);
const char* to_string(Group group);
LayerKind layer_kind_from_string(const std::string& s);

inline bool is_parameterized(LayerKind kind) {
  return kind == LayerKind::conv3x3 || kind == LayerKind::conv_stride2 ||
         kind == LayerKind::upsample2x_conv;
}

/// The network input can be named as a skip source.
inline constexpr const char* kInputId = "input";

struct LayerSpec {
  std::string id;
  LayerKind kind = LayerKind::conv3x3;
  Index in_channels = 1;
  Index out_channels = 1;
  Group group = Group::encoder;
  double slope = 0.01;    // leaky_relu only
  std::string source_id;  // concat_skip / residual_add only

  static LayerSpec conv(std::string id, Index in, Index out, Group g);
  static LayerSpec down(std::string id, Index in, Index out, Group g);
  static LayerSpec up(std::string id, Index in, Index out, Group g);
  static LayerSpec relu(std::string id, Index channels, Group g);
  static LayerSpec leaky(std::string id, Index channels, double slope, Group g);
  static LayerSpec concat(std::string id, std::string source, Index in, Index out, Group g);
  static LayerSpec residual(std::string id, std::string source, Index channels, Group g);

  bool operator==(const LayerSpec&) const = default;
};

struct ModelConfig {
  std::vector<LayerSpec> layers;
  Index channels = 1;
  Index height = 32;
  Index width = 32;
  std::uint64_t seed = 0;

  bool operator==(const ModelConfig&) const = default;
};

/// Resolved shapes of one layer; source_index is -1 for the network input.
struct LayerGeometry {
  Index in_c, in_h, in_w;
  Index out_c, out_h, out_w;
  std::optional<int> source_index;
  Index src_c = 0;
};

/// Validates channel/spatial arithmetic and returns per-layer geometry.
/// Throws ConfigError naming the offending layer id.
std::vector<LayerGeometry> resolve_geometry(const ModelConfig& config);

struct LayerParams {
  std::string id;
  Group group;
  Tensor weight;
  Tensor bias;
};

/// Parameter storage in topological order, partitioned into encoder/decoder.
class ParamSet {
 public:
  void add(LayerParams layer);

  const std::vector<LayerParams>& layers() const { return layers_; }
  std::vector<LayerParams>& layers() { return layers_; }

  const LayerParams* find(const std::string& id) const;
  LayerParams* find(const std::string& id);
  const LayerParams& at(const std::string& id) const;
  LayerParams& at(const std::string& id);

  std::vector<std::string> ids(Partition p) const;
  std::vector<std::string> encoder_ids() const { return ids(Partition::encoder); }
  std::vector<std::string> decoder_ids() const { return ids(Partition::decoder); }

  /// Copy restricted to one partition.
  ParamSet subset(Partition p) const;

  /// Overwrite matching layers from `other`; ids and shapes must agree.
  void assign_from(const ParamSet& other);

  bool empty() const { return layers_.empty(); }

  friend bool bit_identical(const ParamSet& a, const ParamSet& b);
  friend bool same_structure(const ParamSet& a, const ParamSet& b);

 private:
  std::vector<LayerParams> layers_;
};

inline bool in_partition(Group g, Partition p) {
  return p == Partition::all || (p == Partition::encoder) == (g == Group::encoder);
}

struct FreezeMask {
  bool encoder = false;
  bool decoder = false;

  bool frozen(Group g) const { return g == Group::encoder ? encoder : decoder; }
  static FreezeMask none() { return {}; }
  static FreezeMask encoder_only() { return {true, false}; }

  bool operator==(const FreezeMask&) const = default;
};

/// Deterministic He-uniform weights (seeded per layer id) and zero biases.
ParamSet build_model(const ModelConfig& config);

std::int64_t param_count(const ParamSet& params, Partition p);

/// For each layer, whether its input (and any skip source) carries a gradient that some
/// trainable parameter needs under `mask`. Shared by the backward pass and FLOP accounting.
struct GradFlow {
  std::vector<bool> trainable;       // parameterized and not frozen
  std::vector<bool> output_requires; // output depends on a trainable parameter
  std::vector<bool> input_requires;  // main input depends on a trainable parameter
  std::vector<bool> source_requires; // skip source depends on a trainable parameter
};
GradFlow grad_flow(const ModelConfig& config, const std::vector<LayerGeometry>& geometry,
                   const FreezeMask& mask);

}  // namespace fedfreeze
