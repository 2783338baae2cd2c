#pragma once

#include <cmath>
#include <vector>

#include "cmfd/image.hpp"
#include "cmfd/random.hpp"
#include "cmfd/resample.hpp"

namespace cmfd::test {

inline Field random_field(int w, int h, Rng& rng, double lo = 0.0, double hi = 1.0) {
  Field f(w, h);
  for (double& v : f.values()) v = rng.uniform(lo, hi);
  return f;
}

/// Smooth random texture: a coarse random lattice resampled bicubically.
inline GrayImage texture(int w, int h, int cell, std::uint64_t seed) {
  Rng rng(seed);
  const Field coarse = random_field(w / cell + 2, h / cell + 2, rng);
  Field big = resize_bicubic(coarse, (w / cell + 2) * cell, (h / cell + 2) * cell);
  Field out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) out(x, y) = big(x + cell / 2, y + cell / 2);
  return GrayImage::clamped(std::move(out));
}

/// Direct linear convolution with the kernel centre (kw/2, kh/2) at the origin, zero outside.
inline Field direct_convolution(const Field& img, const Field& k) {
  Field out(img.width(), img.height());
  const int cx = k.width() / 2, cy = k.height() / 2;
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      double s = 0.0;
      for (int v = 0; v < k.height(); ++v)
        for (int u = 0; u < k.width(); ++u) {
          const int sx = x + cx - u, sy = y + cy - v;
          if (img.contains(sx, sy)) s += img(sx, sy) * k(u, v);
        }
      out(x, y) = s;
    }
  return out;
}

inline double max_abs_diff(const Field& a, const Field& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  return m;
}

}  // namespace cmfd::test
