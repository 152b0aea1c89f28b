#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "iprior/errors.hpp"
#include "iprior/image.hpp"
#include "iprior/pgm.hpp"
#include "iprior/rng.hpp"

namespace iprior {

/// Per-pixel acquisition mask. keep[i] marks pixels that were observed;
/// ratio records the nominal Bernoulli parameter the mask was drawn with.
struct SamplingMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> keep;
  double ratio = 0.0;

  std::size_t size() const { return keep.size(); }
  bool same_shape(const Image& img) const { return width == img.width && height == img.height; }

  std::size_t kept_count() const {
    std::size_t c = 0;
    for (auto k : keep) c += (k != 0);
    return c;
  }
};

struct NoiseSpec {
  double sigma = 0.0;  // standard deviation, intensity units
  std::uint64_t seed = 0;
};

/// Draws keep[i] ~ Bernoulli(ratio), independently per pixel, from the seeded
/// generator. Deterministic for a fixed seed.
inline SamplingMask bernoulli_mask(int width, int height, double ratio, std::uint64_t seed) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw ContractError("bernoulli_mask: ratio must be in [0,1]");
  if (width < 0 || height < 0) throw ContractError("bernoulli_mask: negative dimensions");
  SamplingMask m;
  m.width = width;
  m.height = height;
  m.ratio = ratio;
  m.keep.resize(std::size_t(width) * height);
  Rng rng(seed);
  for (auto& k : m.keep) k = rng.bernoulli(ratio) ? 1 : 0;
  return m;
}

/// Observation model y_i = keep[i]*x_i + eta_i with eta ~ N(0, sigma^2).
/// Noise is drawn for every pixel, kept or not, so the realization does not
/// depend on the mask; unkept entries of y carry pure noise and must not be
/// read as signal. No clamping.
inline Image degrade(const Image& img, const SamplingMask& mask, const NoiseSpec& noise) {
  if (!mask.same_shape(img)) throw ContractError("degrade: mask/image dimension mismatch");
  if (!(noise.sigma >= 0.0)) throw ContractError("degrade: sigma must be >= 0");
  Image out = img;
  for (std::size_t i = 0; i < out.size(); ++i)
    if (!mask.keep[i]) out.data[i] = 0.0;
  if (noise.sigma > 0.0) {
    Rng rng(noise.seed);
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += noise.sigma * rng.gaussian();
  }
  return out;
}

/// Masks serialize as P5 PGM with the two values {0,255}.
inline void save_mask_pgm(const SamplingMask& mask, const std::string& path) {
  Image img = Image::zeros(mask.width, mask.height);
  for (std::size_t i = 0; i < mask.size(); ++i) img.data[i] = mask.keep[i] ? 1.0 : 0.0;
  save_pgm(img, path);
}

inline SamplingMask load_mask_pgm(const std::string& path) {
  const Image img = load_pgm(path);
  SamplingMask m;
  m.width = img.width;
  m.height = img.height;
  m.keep.resize(img.size());
  std::size_t kept = 0;
  for (std::size_t i = 0; i < img.size(); ++i) {
    if (img.data[i] == 0.0) {
      m.keep[i] = 0;
    } else if (img.data[i] == 1.0) {
      m.keep[i] = 1;
      ++kept;
    } else {
      throw ParseError("mask: '" + path + "' has pixel values other than {0,255}");
    }
  }
  m.ratio = img.size() ? double(kept) / double(img.size()) : 0.0;
  return m;
}

}  // namespace iprior
