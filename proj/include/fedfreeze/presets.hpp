#pragma once

#include "fedfreeze/model.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace fedfreeze {

/// Names of the built-in toy encoder-decoder family.
const std::vector<std::string>& preset_names();

/// Builds a named preset for single-channel size x size images. Throws ConfigError for an
/// unknown name or a size the preset cannot downsample.
ModelConfig make_preset(const std::string& name, Index size, std::uint64_t seed);

}  // namespace fedfreeze
