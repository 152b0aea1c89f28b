#pragma once

#include <algorithm>
#include <cmath>

#include "iprior/errors.hpp"
#include "iprior/image.hpp"
#include "iprior/sampling.hpp"

namespace iprior {

/// Inverse-distance-weighted scattered-data interpolation. Kept pixels are
/// copied verbatim; each missing pixel becomes the d^(-power)-weighted mean
/// of kept pixels inside a square window of the given radius. If the window
/// holds no kept pixel, its radius doubles until one is found, so the result
/// is total whenever the mask keeps at least one pixel.
inline Image shepard_interpolate(const Image& observed, const SamplingMask& mask,
                                 double power = 2.0, int radius = 3) {
  if (!mask.same_shape(observed)) throw ContractError("shepard: mask/image dimension mismatch");
  if (radius < 1) throw ContractError("shepard: radius must be >= 1");
  if (mask.kept_count() == 0) throw ContractError("shepard: mask keeps no pixel");

  const int w = observed.width, h = observed.height;
  Image out = observed;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (mask.keep[std::size_t(y) * w + x]) continue;
      int r = radius;
      double wsum = 0.0, vsum = 0.0;
      for (;;) {
        const int x0 = std::max(0, x - r), x1 = std::min(w - 1, x + r);
        const int y0 = std::max(0, y - r), y1 = std::min(h - 1, y + r);
        for (int yy = y0; yy <= y1; ++yy) {
          for (int xx = x0; xx <= x1; ++xx) {
            if (!mask.keep[std::size_t(yy) * w + xx]) continue;
            const double dx = xx - x, dy = yy - y;
            const double d = std::sqrt(dx * dx + dy * dy);  // never 0: (x,y) is missing
            const double wgt = std::pow(d, -power);
            wsum += wgt;
            vsum += wgt * observed.at(xx, yy);
          }
        }
        if (wsum > 0.0) break;
        r *= 2;  // terminates: some pixel is kept
      }
      out.at(x, y) = vsum / wsum;
    }
  }
  return out;
}

}  // namespace iprior
