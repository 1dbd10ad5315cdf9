#include "fedfreeze/presets.hpp"

#include <algorithm>

namespace fedfreeze {

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"unet_concat", "unet_residual", "deep_dropoutless",
                                              "bottleneck_residual", "light_leaky"};
  return names;
}

namespace {

constexpr Group E = Group::encoder;
constexpr Group D = Group::decoder;

// Two-level U-Net with a concatenated long skip.
std::vector<LayerSpec> unet_concat() {
  return {
      LayerSpec::conv("enc1", 1, 8, E),       LayerSpec::relu("enc1_act", 8, E),
      LayerSpec::down("enc2", 8, 16, E),      LayerSpec::relu("enc2_act", 16, E),
      LayerSpec::conv("enc3", 16, 16, E),     LayerSpec::relu("enc3_act", 16, E),
      LayerSpec::up("dec1", 16, 8, D),        LayerSpec::relu("dec1_act", 8, D),
      LayerSpec::concat("skip1", "enc1_act", 8, 16, D),
      LayerSpec::conv("dec2", 16, 8, D),      LayerSpec::relu("dec2_act", 8, D),
      LayerSpec::conv("out", 8, 1, D),
  };
}

// Same depth, additive long skip.
std::vector<LayerSpec> unet_residual() {
  return {
      LayerSpec::conv("enc1", 1, 8, E),       LayerSpec::relu("enc1_act", 8, E),
      LayerSpec::down("enc2", 8, 16, E),      LayerSpec::relu("enc2_act", 16, E),
      LayerSpec::conv("enc3", 16, 16, E),     LayerSpec::relu("enc3_act", 16, E),
      LayerSpec::up("dec1", 16, 8, D),        LayerSpec::relu("dec1_act", 8, D),
      LayerSpec::residual("skip1", "enc1_act", 8, D),
      LayerSpec::conv("dec2", 8, 8, D),       LayerSpec::relu("dec2_act", 8, D),
      LayerSpec::conv("out", 8, 1, D),
  };
}

// Three resolution levels, concatenated skips at both.
std::vector<LayerSpec> deep_dropoutless() {
  return {
      LayerSpec::conv("enc1", 1, 8, E),       LayerSpec::relu("enc1_act", 8, E),
      LayerSpec::down("enc2", 8, 12, E),      LayerSpec::relu("enc2_act", 12, E),
      LayerSpec::down("enc3", 12, 16, E),     LayerSpec::relu("enc3_act", 16, E),
      LayerSpec::conv("enc4", 16, 16, E),     LayerSpec::relu("enc4_act", 16, E),
      LayerSpec::up("dec1", 16, 12, D),       LayerSpec::relu("dec1_act", 12, D),
      LayerSpec::concat("skip2", "enc2_act", 12, 24, D),
      LayerSpec::conv("dec2", 24, 12, D),     LayerSpec::relu("dec2_act", 12, D),
      LayerSpec::up("dec3", 12, 8, D),        LayerSpec::relu("dec3_act", 8, D),
      LayerSpec::concat("skip1", "enc1_act", 8, 16, D),
      LayerSpec::conv("dec4", 16, 8, D),      LayerSpec::relu("dec4_act", 8, D),
      LayerSpec::conv("out", 8, 1, D),
  };
}

// Residual block in the bottleneck, no long skips.
std::vector<LayerSpec> bottleneck_residual() {
  return {
      LayerSpec::conv("enc1", 1, 8, E),       LayerSpec::relu("enc1_act", 8, E),
      LayerSpec::down("enc2", 8, 16, E),      LayerSpec::relu("enc2_act", 16, E),
      LayerSpec::conv("res_a", 16, 16, E),    LayerSpec::relu("res_a_act", 16, E),
      LayerSpec::conv("res_b", 16, 16, E),
      LayerSpec::residual("res_add", "enc2_act", 16, E),
      LayerSpec::relu("res_act", 16, E),
      LayerSpec::up("dec1", 16, 8, D),        LayerSpec::relu("dec1_act", 8, D),
      LayerSpec::conv("out", 8, 1, D),
  };
}

// Narrow network with leaky activations.
std::vector<LayerSpec> light_leaky() {
  return {
      LayerSpec::conv("enc1", 1, 4, E),       LayerSpec::leaky("enc1_act", 4, 0.1, E),
      LayerSpec::down("enc2", 4, 8, E),       LayerSpec::leaky("enc2_act", 8, 0.1, E),
      LayerSpec::up("dec1", 8, 4, D),         LayerSpec::leaky("dec1_act", 4, 0.1, D),
      LayerSpec::concat("skip1", "enc1_act", 4, 8, D),
      LayerSpec::conv("out", 8, 1, D),
  };
}

}  // namespace

ModelConfig make_preset(const std::string& name, Index size, std::uint64_t seed) {
  ModelConfig c;
  c.channels = 1;
  c.height = size;
  c.width = size;
  c.seed = seed;
  if (name == "unet_concat") c.layers = unet_concat();
  else if (name == "unet_residual") c.layers = unet_residual();
  else if (name == "deep_dropoutless") c.layers = deep_dropoutless();
  else if (name == "bottleneck_residual") c.layers = bottleneck_residual();
  else if (name == "light_leaky") c.layers = light_leaky();
  else throw ConfigError("unknown preset '" + name + "'");
  resolve_geometry(c);
  return c;
}

}  // namespace fedfreeze
