#pragma once

#include "fedfreeze/random.hpp"
#include "fedfreeze/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace fedfreeze {

/// Recipe for one simulated centre. Sources differ between silos through gain, a smooth
/// multiplicative bias field, noise and native resolution; targets share one mapping.
struct SiloConfig {
  std::string silo_id;
  int n_subjects = 12;
  Index height = 32;
  Index width = 32;
  double intensity_gain = 1.0;
  double bias_field_strength = 0.0;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const SiloConfig&) const = default;
};

struct PairedSample {
  Image source;
  Image target;
  int subject_id = 0;
};

struct AugmentSpec {
  double max_rotation_deg = 0.0;
  int max_translation_px = 0;
  bool allow_flip = false;

  void validate(Index width) const;
  bool operator==(const AugmentSpec&) const = default;
};

/// Tissue map in [0,1] made of random ellipses; depends only on (seed, subject, size).
Image make_phantom(std::uint64_t seed, int subject_id, Index height, Index width);

/// Fixed nonlinear contrast shared by every silo.
double target_intensity(double tissue);

/// Native-resolution, un-normalized pairs.
std::vector<PairedSample> generate_silo(const SiloConfig& cfg);

/// Min-max normalize to [0,1] (constant images become zero), zero-pad to square, then
/// bilinear resize to out_h x out_w.
PairedSample preprocess(const PairedSample& sample, Index out_h, Index out_w);
Image normalize_min_max(const Image& img);
Image pad_to_square(const Image& img);
Image resize_bilinear(const Image& img, Index out_h, Index out_w);

/// Concrete spatial transform: horizontal flip, then rotation about the centre (nearest
/// neighbour), then integer translation. Outside samples are zero.
struct SpatialTransform {
  bool flip = false;
  double rotation_deg = 0.0;
  int shift_x = 0;
  int shift_y = 0;
};

SpatialTransform draw_transform(const AugmentSpec& spec, Rng& rng);
Image apply_transform(const Image& img, const SpatialTransform& t);

/// Same random transform on source and target; values clamped to [0,1].
PairedSample augment(const PairedSample& sample, const AugmentSpec& spec, Rng& rng);

/// Flat binary silo file: u64 count, u64 h, u64 w, then per sample source and target
/// as little-endian f64 payloads. Subject ids are the sample indices on import.
void export_silo(std::span<const PairedSample> samples, const std::filesystem::path& path);
std::vector<PairedSample> import_silo(const std::filesystem::path& path);

/// Default desk-scale layout: four training centres and one held-out centre.
std::vector<SiloConfig> default_training_silos();
SiloConfig default_eval_silo();

}  // namespace fedfreeze
