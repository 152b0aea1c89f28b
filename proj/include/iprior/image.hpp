#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "iprior/errors.hpp"

namespace iprior {

using Eigen::Index;

/// Grayscale raster, intensities stored row-major as doubles. The nominal
/// range is [0,1] but intermediate results (noisy observations, solver
/// iterates) may leave it; clamp01 restores it where the range matters.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<double> data;

  Image() = default;
  Image(int w, int h, std::vector<double> d) : width(w), height(h), data(std::move(d)) {
    if (w < 0 || h < 0 || data.size() != static_cast<std::size_t>(w) * static_cast<std::size_t>(h))
      throw ContractError("Image: data length must equal width*height");
  }

  static Image zeros(int w, int h) { return Image(w, h, std::vector<double>(std::size_t(w) * h, 0.0)); }
  static Image constant(int w, int h, double v) {
    return Image(w, h, std::vector<double>(std::size_t(w) * h, v));
  }

  std::size_t size() const { return data.size(); }
  double& at(int x, int y) { return data[std::size_t(y) * width + x]; }
  double at(int x, int y) const { return data[std::size_t(y) * width + x]; }

  Eigen::Map<const Eigen::VectorXd> vec() const {
    return Eigen::Map<const Eigen::VectorXd>(data.data(), static_cast<Eigen::Index>(data.size()));
  }
  Eigen::Map<Eigen::VectorXd> vec() {
    return Eigen::Map<Eigen::VectorXd>(data.data(), static_cast<Eigen::Index>(data.size()));
  }

  bool same_shape(const Image& o) const { return width == o.width && height == o.height; }

  bool all_finite() const {
    return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
  }
};

inline Image from_vector(int width, int height, const Eigen::VectorXd& v) {
  if (v.size() != Eigen::Index(width) * height)
    throw ContractError("from_vector: length must equal width*height");
  return Image(width, height, std::vector<double>(v.data(), v.data() + v.size()));
}

inline Image clamp01(Image img) {
  for (double& v : img.data) v = std::clamp(v, 0.0, 1.0);
  return img;
}

/// Center crop. Passing 0 for either extent keeps the full image.
inline Image center_crop(const Image& img, int cw, int ch) {
  if (cw <= 0 || ch <= 0) return img;
  if (cw > img.width || ch > img.height)
    throw ContractError("center_crop: crop larger than image");
  const int x0 = (img.width - cw) / 2;
  const int y0 = (img.height - ch) / 2;
  Image out = Image::zeros(cw, ch);
  for (int y = 0; y < ch; ++y)
    for (int x = 0; x < cw; ++x) out.at(x, y) = img.at(x0 + x, y0 + y);
  return out;
}

/// Peak signal-to-noise ratio in dB against a [0,1] reference,
/// 10*log10(1/MSE). Identical images give +infinity.
inline double psnr(const Image& reference, const Image& test) {
  if (!reference.same_shape(test))
    throw ContractError("psnr: dimension mismatch " + std::to_string(reference.width) + "x" +
                        std::to_string(reference.height) + " vs " + std::to_string(test.width) +
                        "x" + std::to_string(test.height));
  if (reference.size() == 0) throw ContractError("psnr: empty image");
  double acc = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double d = reference.data[i] - test.data[i];
    acc += d * d;
  }
  const double mse = acc / static_cast<double>(reference.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

}  // namespace iprior
