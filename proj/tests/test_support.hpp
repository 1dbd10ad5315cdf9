#pragma once

#include "fedfreeze/model.hpp"
#include "fedfreeze/network.hpp"
#include "fedfreeze/random.hpp"

#include <filesystem>
#include <string>

namespace fedfreeze::testing {

inline Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(shape);
  for (Index i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

/// Replaces every weight and bias with uniform noise (biases are zero after build_model).
inline void randomize(ParamSet& params, Rng& rng, double scale = 0.5) {
  for (auto& l : params.layers()) {
    l.weight = random_tensor(l.weight.shape(), rng, -scale, scale);
    l.bias = random_tensor(l.bias.shape(), rng, -scale, scale);
  }
}

inline ModelConfig single_conv(Index in, Index out, Index size, std::uint64_t seed = 1) {
  ModelConfig c;
  c.channels = in;
  c.height = size;
  c.width = size;
  c.seed = seed;
  c.layers = {LayerSpec::conv("enc", in, in, Group::encoder), LayerSpec::conv("out", in, out, Group::decoder)};
  return c;
}

/// Two encoder convs and two decoder convs, no skips.
inline ModelConfig four_layer_unet(Index size = 8, std::uint64_t seed = 3) {
  ModelConfig c;
  c.height = size;
  c.width = size;
  c.seed = seed;
  c.layers = {
      LayerSpec::conv("enc1", 1, 4, Group::encoder), LayerSpec::relu("enc1_act", 4, Group::encoder),
      LayerSpec::down("enc2", 4, 6, Group::encoder), LayerSpec::relu("enc2_act", 6, Group::encoder),
      LayerSpec::up("dec1", 6, 4, Group::decoder),   LayerSpec::relu("dec1_act", 4, Group::decoder),
      LayerSpec::conv("out", 4, 1, Group::decoder),
  };
  return c;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("fedfreeze_" + tag + "_" + std::to_string(hash_string(tag) ^ reinterpret_cast<std::uintptr_t>(this)));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace fedfreeze::testing
