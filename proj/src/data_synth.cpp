#include "fedfreeze/data_synth.hpp"

#include "fedfreeze/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <numbers>

namespace fedfreeze {

void SiloConfig::validate() const {
  if (silo_id.empty()) throw ConfigError("silo_id: must be non-empty");
  if (n_subjects < 2) throw ConfigError("n_subjects: must be >= 2");
  if (height < 16 || width < 16) throw ConfigError("native_size: must be at least 16x16");
  if (!(intensity_gain > 0.0)) throw ConfigError("intensity_gain: must be positive");
  if (!(bias_field_strength >= 0.0)) throw ConfigError("bias_field_strength: must be >= 0");
  if (!(noise_sigma >= 0.0)) throw ConfigError("noise_sigma: must be >= 0");
}

void AugmentSpec::validate(Index width) const {
  if (!(max_rotation_deg >= 0.0 && max_rotation_deg <= 45.0)) {
    throw ConfigError("augment.max_rotation_deg: must be in [0,45]");
  }
  if (max_translation_px < 0 || 4 * max_translation_px >= width) {
    throw ConfigError("augment.max_translation_px: must be in [0, image_size/4)");
  }
}

namespace {

struct Ellipse {
  double cx, cy, a, b, angle, value;
  bool contains(double u, double v) const {
    const double du = u - cx, dv = v - cy;
    const double c = std::cos(angle), s = std::sin(angle);
    const double x = c * du + s * dv, y = -s * du + c * dv;
    return (x * x) / (a * a) + (y * y) / (b * b) <= 1.0;
  }
};

double source_contrast(double tissue) { return tissue > 0.0 ? 0.2 + 0.8 * (1.0 - tissue) : 0.0; }

}  // namespace

double target_intensity(double tissue) { return tissue > 0.0 ? tissue * tissue : 0.0; }

Image make_phantom(std::uint64_t seed, int subject_id, Index height, Index width) {
  Rng rng(mix_seed({seed, static_cast<std::uint64_t>(subject_id), 0}));
  std::vector<Ellipse> shapes;
  shapes.push_back({rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05), rng.uniform(0.70, 0.85),
                    rng.uniform(0.75, 0.90), rng.uniform(-0.2, 0.2), 0.4});
  const int inner = 3 + static_cast<int>(rng.below(4));
  for (int k = 0; k < inner; ++k) {
    shapes.push_back({rng.uniform(-0.45, 0.45), rng.uniform(-0.45, 0.45), rng.uniform(0.08, 0.30),
                      rng.uniform(0.08, 0.30), rng.uniform(0.0, std::numbers::pi),
                      rng.uniform(0.1, 1.0)});
  }
  Image img = Image::Zero(height, width);
  for (Index y = 0; y < height; ++y) {
    const double v = (static_cast<double>(y) + 0.5) / static_cast<double>(height) * 2.0 - 1.0;
    for (Index x = 0; x < width; ++x) {
      const double u = (static_cast<double>(x) + 0.5) / static_cast<double>(width) * 2.0 - 1.0;
      for (const auto& e : shapes) {
        if (e.contains(u, v)) img(y, x) = e.value;
      }
    }
  }
  return img;
}

std::vector<PairedSample> generate_silo(const SiloConfig& cfg) {
  cfg.validate();
  std::vector<PairedSample> out;
  out.reserve(static_cast<std::size_t>(cfg.n_subjects));
  for (int s = 0; s < cfg.n_subjects; ++s) {
    const Image tissue = make_phantom(cfg.seed, s, cfg.height, cfg.width);
    Rng rng(mix_seed({cfg.seed, static_cast<std::uint64_t>(s), 1}));
    const double c1 = rng.uniform(-1.0, 1.0), c2 = rng.uniform(-1.0, 1.0), c3 = rng.uniform(-1.0, 1.0);
    PairedSample p{Image(cfg.height, cfg.width), Image(cfg.height, cfg.width), s};
    for (Index y = 0; y < cfg.height; ++y) {
      const double v = (static_cast<double>(y) + 0.5) / static_cast<double>(cfg.height) * 2.0 - 1.0;
      for (Index x = 0; x < cfg.width; ++x) {
        const double u = (static_cast<double>(x) + 0.5) / static_cast<double>(cfg.width) * 2.0 - 1.0;
        const double bias = 1.0 + cfg.bias_field_strength * (c1 * u + c2 * v + c3 * u * v);
        double src = cfg.intensity_gain * source_contrast(tissue(y, x)) * bias;
        if (cfg.noise_sigma > 0.0) src += cfg.noise_sigma * rng.normal();
        p.source(y, x) = src;
        p.target(y, x) = target_intensity(tissue(y, x));
      }
    }
    out.push_back(std::move(p));
  }
  return out;
}

Image normalize_min_max(const Image& img) {
  const double lo = img.minCoeff(), hi = img.maxCoeff();
  if (!(hi > lo)) {
    std::cerr << "warning: constant image normalized to zeros\n";
    return Image::Zero(img.rows(), img.cols());
  }
  return ((img.array() - lo) / (hi - lo)).matrix();
}

Image pad_to_square(const Image& img) {
  const Index n = std::max(img.rows(), img.cols());
  if (img.rows() == img.cols()) return img;
  Image out = Image::Zero(n, n);
  out.block((n - img.rows()) / 2, (n - img.cols()) / 2, img.rows(), img.cols()) = img;
  return out;
}

Image resize_bilinear(const Image& img, Index out_h, Index out_w) {
  if (img.rows() == out_h && img.cols() == out_w) return img;
  Image out(out_h, out_w);
  const double sy = static_cast<double>(img.rows()) / static_cast<double>(out_h);
  const double sx = static_cast<double>(img.cols()) / static_cast<double>(out_w);
  auto coord = [](double c, Index n, Index& i0, Index& i1, double& f) {
    c = std::clamp(c, 0.0, static_cast<double>(n - 1));
    i0 = static_cast<Index>(std::floor(c));
    i1 = std::min(i0 + 1, n - 1);
    f = c - static_cast<double>(i0);
  };
  for (Index y = 0; y < out_h; ++y) {
    Index y0, y1;
    double fy;
    coord((static_cast<double>(y) + 0.5) * sy - 0.5, img.rows(), y0, y1, fy);
    for (Index x = 0; x < out_w; ++x) {
      Index x0, x1;
      double fx;
      coord((static_cast<double>(x) + 0.5) * sx - 0.5, img.cols(), x0, x1, fx);
      const double top = (1.0 - fx) * img(y0, x0) + fx * img(y0, x1);
      const double bot = (1.0 - fx) * img(y1, x0) + fx * img(y1, x1);
      out(y, x) = (1.0 - fy) * top + fy * bot;
    }
  }
  return out;
}

PairedSample preprocess(const PairedSample& sample, Index out_h, Index out_w) {
  auto run = [&](const Image& img) {
    Image r = resize_bilinear(pad_to_square(normalize_min_max(img)), out_h, out_w);
    return Image(r.cwiseMax(0.0).cwiseMin(1.0));
  };
  return {run(sample.source), run(sample.target), sample.subject_id};
}

SpatialTransform draw_transform(const AugmentSpec& spec, Rng& rng) {
  SpatialTransform t;
  if (spec.allow_flip) t.flip = rng.coin();
  if (spec.max_rotation_deg > 0.0) t.rotation_deg = rng.uniform(-spec.max_rotation_deg, spec.max_rotation_deg);
  if (spec.max_translation_px > 0) {
    t.shift_x = static_cast<int>(rng.integer(-spec.max_translation_px, spec.max_translation_px));
    t.shift_y = static_cast<int>(rng.integer(-spec.max_translation_px, spec.max_translation_px));
  }
  return t;
}

Image apply_transform(const Image& img, const SpatialTransform& t) {
  const Index h = img.rows(), w = img.cols();
  const double cy = static_cast<double>(h - 1) / 2.0, cx = static_cast<double>(w - 1) / 2.0;
  const double theta = t.rotation_deg * std::numbers::pi / 180.0;
  const double c = std::cos(theta), s = std::sin(theta);
  Image out = Image::Zero(h, w);
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      Index ry = y - t.shift_y, rx = x - t.shift_x;
      if (t.rotation_deg != 0.0) {
        const double dy = static_cast<double>(ry) - cy, dx = static_cast<double>(rx) - cx;
        rx = static_cast<Index>(std::lround(c * dx + s * dy + cx));
        ry = static_cast<Index>(std::lround(-s * dx + c * dy + cy));
      }
      if (ry < 0 || ry >= h || rx < 0 || rx >= w) continue;
      if (t.flip) rx = w - 1 - rx;
      out(y, x) = img(ry, rx);
    }
  }
  return out;
}

PairedSample augment(const PairedSample& sample, const AugmentSpec& spec, Rng& rng) {
  const SpatialTransform t = draw_transform(spec, rng);
  return {Image(apply_transform(sample.source, t).cwiseMax(0.0).cwiseMin(1.0)),
          Image(apply_transform(sample.target, t).cwiseMax(0.0).cwiseMin(1.0)), sample.subject_id};
}

void export_silo(std::span<const PairedSample> samples, const std::filesystem::path& path) {
  static_assert(std::endian::native == std::endian::little);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  const std::uint64_t count = samples.size();
  const std::uint64_t h = samples.empty() ? 0 : static_cast<std::uint64_t>(samples[0].source.rows());
  const std::uint64_t w = samples.empty() ? 0 : static_cast<std::uint64_t>(samples[0].source.cols());
  for (std::uint64_t v : {count, h, w}) os.write(reinterpret_cast<const char*>(&v), sizeof v);
  for (const auto& s : samples) {
    if (static_cast<std::uint64_t>(s.source.rows()) != h || static_cast<std::uint64_t>(s.source.cols()) != w ||
        s.target.rows() != s.source.rows() || s.target.cols() != s.source.cols()) {
      throw ShapeError("export_silo: all images must share one size");
    }
    os.write(reinterpret_cast<const char*>(s.source.data()), static_cast<std::streamsize>(h * w * 8));
    os.write(reinterpret_cast<const char*>(s.target.data()), static_cast<std::streamsize>(h * w * 8));
  }
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

std::vector<PairedSample> import_silo(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  std::uint64_t hdr[3];
  is.read(reinterpret_cast<char*>(hdr), sizeof hdr);
  if (!is) throw std::runtime_error(path.string() + ": truncated header");
  const auto h = static_cast<Index>(hdr[1]), w = static_cast<Index>(hdr[2]);
  std::vector<PairedSample> out;
  for (std::uint64_t i = 0; i < hdr[0]; ++i) {
    PairedSample s{Image(h, w), Image(h, w), static_cast<int>(i)};
    is.read(reinterpret_cast<char*>(s.source.data()), static_cast<std::streamsize>(h * w * 8));
    is.read(reinterpret_cast<char*>(s.target.data()), static_cast<std::streamsize>(h * w * 8));
    if (!is) throw std::runtime_error(path.string() + ": truncated payload");
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<SiloConfig> default_training_silos() {
  return {
      {"A", 12, 40, 40, 1.0, 0.10, 0.010, 101},
      {"B", 12, 36, 44, 0.8, 0.20, 0.020, 202},
      {"C", 12, 48, 48, 1.3, 0.05, 0.015, 303},
      {"D", 12, 32, 40, 0.6, 0.25, 0.005, 404},
  };
}

SiloConfig default_eval_silo() { return {"E", 8, 44, 36, 1.1, 0.15, 0.020, 505}; }

}  // namespace fedfreeze
