#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "cmfd/errors.hpp"
#include "cmfd/image.hpp"

namespace cmfd {

namespace detail {

// Large finite stand-in for "no set pixel"; keeps the envelope arithmetic finite.
inline constexpr double kFarAway = 1e20;

// 1-D squared Euclidean distance transform (lower envelope of parabolas).
inline void edt_1d(const double* f, int n, double* d, std::vector<int>& v, std::vector<double>& z) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  v.assign(static_cast<std::size_t>(n), 0);
  z.assign(static_cast<std::size_t>(n) + 1, 0.0);
  int k = 0;
  z[0] = -inf;
  z[1] = inf;
  auto intersect = [&](int q, int p) {
    return ((f[q] + double(q) * q) - (f[p] + double(p) * p)) / (2.0 * q - 2.0 * p);
  };
  for (int q = 1; q < n; ++q) {
    double s = intersect(q, v[k]);
    while (s <= z[k]) {
      --k;
      s = intersect(q, v[k]);
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = inf;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    const double dq = q - v[k];
    d[q] = dq * dq + f[v[k]];
  }
}

}  // namespace detail

/// Squared Euclidean distance from every pixel to the nearest set pixel (>= 1e20 if none).
inline Field squared_distance_transform(const BinaryMask& mask) {
  constexpr double inf = detail::kFarAway;
  const int w = mask.width();
  const int h = mask.height();
  Field dist(w, h);
  std::vector<int> v;
  std::vector<double> z;
  std::vector<double> col(static_cast<std::size_t>(h)), out(static_cast<std::size_t>(std::max(w, h)));
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) col[y] = mask(x, y) ? 0.0 : inf;
    detail::edt_1d(col.data(), h, out.data(), v, z);
    for (int y = 0; y < h; ++y) dist(x, y) = out[y];
  }
  std::vector<double> line(static_cast<std::size_t>(w));
  for (int y = 0; y < h; ++y) {
    auto row = dist.row(y);
    std::copy(row.begin(), row.end(), line.begin());
    detail::edt_1d(line.data(), w, row.data(), v, z);
  }
  return dist;
}

/// Binary dilation by a Euclidean disk: a pixel is set iff some set pixel lies within `radius`.
inline BinaryMask dilate(const BinaryMask& mask, double radius) {
  if (radius < 0.0) throw ArgumentError("dilation radius must be >= 0");
  if (radius == 0.0) return mask;
  const Field d2 = squared_distance_transform(mask);
  const double r2 = radius * radius;
  BinaryMask out(mask.width(), mask.height());
  auto src = d2.values();
  auto dst = out.values();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] <= r2 ? 1 : 0;
  return out;
}

inline BinaryMask complement(const BinaryMask& mask) {
  BinaryMask out(mask.width(), mask.height());
  auto src = mask.values();
  auto dst = out.values();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] ? 0 : 1;
  return out;
}

/// Binary erosion by a Euclidean disk; the region outside the frame counts as set.
inline BinaryMask erode(const BinaryMask& mask, double radius) {
  return complement(dilate(complement(mask), radius));
}

inline BinaryMask close(const BinaryMask& mask, double radius) {
  return erode(dilate(mask, radius), radius);
}

/// Grey-level dilation (maximum filter) over a flat Euclidean disk. Pixels outside the
/// frame do not contribute.
inline Field dilate_max(const Field& in, double radius) {
  if (radius < 0.0) throw ArgumentError("dilation radius must be >= 0");
  const int w = in.width();
  const int h = in.height();
  const int r = static_cast<int>(std::floor(radius));
  if (r == 0 || in.empty()) return in;

  // Per-row sparse tables give O(1) range maxima.
  int levels = 1;
  while ((1 << levels) <= w) ++levels;
  std::vector<double> table(static_cast<std::size_t>(levels) * w * h);
  std::vector<char> row_nonempty(static_cast<std::size_t>(h), 0);
  auto at = [&](int lvl, int y, int x) -> double& {
    return table[(static_cast<std::size_t>(lvl) * h + y) * w + x];
  };
  double global_min = std::numeric_limits<double>::infinity();
  for (int y = 0; y < h; ++y) {
    auto row = in.row(y);
    for (int x = 0; x < w; ++x) {
      at(0, y, x) = row[x];
      global_min = std::min(global_min, row[x]);
    }
  }
  for (int y = 0; y < h; ++y) {
    auto row = in.row(y);
    row_nonempty[y] = std::any_of(row.begin(), row.end(), [&](double v) { return v != global_min; });
    if (!row_nonempty[y]) continue;
    for (int l = 1; l < levels; ++l)
      for (int x = 0; x + (1 << l) <= w; ++x)
        at(l, y, x) = std::max(at(l - 1, y, x), at(l - 1, y, x + (1 << (l - 1))));
  }
  std::vector<int> log2(static_cast<std::size_t>(w) + 1, 0);
  for (int i = 2; i <= w; ++i) log2[i] = log2[i / 2] + 1;
  auto range_max = [&](int y, int lo, int hi) {
    const int l = log2[hi - lo + 1];
    return std::max(at(l, y, lo), at(l, y, hi - (1 << l) + 1));
  };

  std::vector<int> half(static_cast<std::size_t>(2 * r + 1));
  for (int dy = -r; dy <= r; ++dy)
    half[dy + r] = static_cast<int>(std::floor(std::sqrt(radius * radius - double(dy) * dy)));

  Field out(w, h, global_min);
  for (int y = 0; y < h; ++y) {
    auto dst = out.row(y);
    for (int dy = -r; dy <= r; ++dy) {
      const int yy = y + dy;
      if (yy < 0 || yy >= h || !row_nonempty[yy]) continue;
      const int hw = half[dy + r];
      for (int x = 0; x < w; ++x) {
        const int lo = std::max(0, x - hw);
        const int hi = std::min(w - 1, x + hw);
        dst[x] = std::max(dst[x], range_max(yy, lo, hi));
      }
    }
  }
  return out;
}

/// Removes 8-connected components with fewer than `min_area` pixels.
inline BinaryMask remove_small_components(const BinaryMask& mask, std::size_t min_area) {
  const int w = mask.width();
  const int h = mask.height();
  BinaryMask out = mask;
  Grid<int> label(w, h, 0);
  std::vector<std::pair<int, int>> stack, members;
  int next = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!mask(x, y) || label(x, y)) continue;
      ++next;
      members.clear();
      stack.assign(1, {x, y});
      label(x, y) = next;
      while (!stack.empty()) {
        auto [cx, cy] = stack.back();
        stack.pop_back();
        members.emplace_back(cx, cy);
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = cx + dx, ny = cy + dy;
            if (!mask.contains(nx, ny) || !mask(nx, ny) || label(nx, ny)) continue;
            label(nx, ny) = next;
            stack.emplace_back(nx, ny);
          }
      }
      if (members.size() < min_area)
        for (auto [mx, my] : members) out(mx, my) = 0;
    }
  return out;
}

}  // namespace cmfd
