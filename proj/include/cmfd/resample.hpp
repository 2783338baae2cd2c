#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "cmfd/errors.hpp"
#include "cmfd/image.hpp"

namespace cmfd {

/// Keys cubic convolution kernel; a = -0.5 gives Catmull-Rom.
inline double cubic_weight(double t, double a = -0.5) {
  t = std::abs(t);
  if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
  if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
  return 0.0;
}

namespace detail {

struct CubicTaps {
  std::vector<std::array<int, 4>> index;
  std::vector<std::array<double, 4>> weight;
};

// Source taps for each output sample, pixel centres aligned, edges clamped.
inline CubicTaps cubic_taps(int in_size, int out_size) {
  CubicTaps taps;
  taps.index.resize(out_size);
  taps.weight.resize(out_size);
  const double scale = static_cast<double>(out_size) / in_size;
  for (int o = 0; o < out_size; ++o) {
    const double src = (o + 0.5) / scale - 0.5;
    const double base = std::floor(src);
    const double frac = src - base;
    for (int k = 0; k < 4; ++k) {
      const int i = static_cast<int>(base) - 1 + k;
      taps.index[o][k] = std::clamp(i, 0, in_size - 1);
      taps.weight[o][k] = cubic_weight(frac - (k - 1));
    }
  }
  return taps;
}

}  // namespace detail

/// Separable bicubic resampling to an explicit output size (no clamping of values).
template <typename T>
Grid<T> resize_bicubic(const Grid<T>& in, int out_width, int out_height) {
  if (out_width < 1 || out_height < 1) throw ArgumentError("resize output dimension is zero");
  if (in.empty()) throw ArgumentError("cannot resize an empty grid");
  const auto tx = detail::cubic_taps(in.width(), out_width);
  const auto ty = detail::cubic_taps(in.height(), out_height);

  Grid<T> horiz(out_width, in.height());
  for (int y = 0; y < in.height(); ++y) {
    auto src = in.row(y);
    auto dst = horiz.row(y);
    for (int x = 0; x < out_width; ++x) {
      double acc = 0.0;
      for (int k = 0; k < 4; ++k) acc += tx.weight[x][k] * src[tx.index[x][k]];
      dst[x] = static_cast<T>(acc);
    }
  }
  Grid<T> out(out_width, out_height);
  for (int y = 0; y < out_height; ++y) {
    auto dst = out.row(y);
    std::array<std::span<const T>, 4> rows;
    for (int k = 0; k < 4; ++k) rows[k] = horiz.row(ty.index[y][k]);
    const auto& w = ty.weight[y];
    for (int x = 0; x < out_width; ++x)
      dst[x] = static_cast<T>(w[0] * rows[0][x] + w[1] * rows[1][x] + w[2] * rows[2][x] +
                              w[3] * rows[3][x]);
  }
  return out;
}

/// Output dims are round(input dims * factor); samples clamped to [0,1].
inline GrayImage resize_bicubic(const GrayImage& img, double factor) {
  if (!(factor > 0.0) || !std::isfinite(factor)) throw ArgumentError("resize factor must be > 0");
  const long w = std::lround(img.width() * factor);
  const long h = std::lround(img.height() * factor);
  if (w < 1 || h < 1) throw ArgumentError("resize output dimension is zero");
  if (w == img.width() && h == img.height()) return img;
  return GrayImage::clamped(resize_bicubic(img.field(), static_cast<int>(w), static_cast<int>(h)));
}

/// Bilinear sample at continuous (x, y) in pixel-centre coordinates; `outside` beyond the frame.
template <typename T>
double sample_bilinear(const Grid<T>& g, double x, double y, double outside = 0.0) {
  if (!(x > -1.0 && y > -1.0 && x < g.width() && y < g.height())) return outside;
  const double fx = std::floor(x);
  const double fy = std::floor(y);
  const int x0 = static_cast<int>(fx);
  const int y0 = static_cast<int>(fy);
  const double ax = x - fx;
  const double ay = y - fy;
  auto at = [&](int xi, int yi) -> double {
    return g.contains(xi, yi) ? static_cast<double>(g(xi, yi)) : outside;
  };
  const double top = (1.0 - ax) * at(x0, y0) + ax * at(x0 + 1, y0);
  const double bottom = (1.0 - ax) * at(x0, y0 + 1) + ax * at(x0 + 1, y0 + 1);
  return (1.0 - ay) * top + ay * bottom;
}

/// Bilinear sample with clamp-to-edge for points inside [-0.5, dim-0.5]; `outside` beyond.
template <typename T>
double sample_bilinear_clamped(const Grid<T>& g, double x, double y, double outside = 0.0) {
  if (x < -0.5 || y < -0.5 || x > g.width() - 0.5 || y > g.height() - 0.5) return outside;
  x = std::clamp(x, 0.0, g.width() - 1.0);
  y = std::clamp(y, 0.0, g.height() - 1.0);
  const int x0 = std::min(static_cast<int>(x), g.width() - 1);
  const int y0 = std::min(static_cast<int>(y), g.height() - 1);
  const int x1 = std::min(x0 + 1, g.width() - 1);
  const int y1 = std::min(y0 + 1, g.height() - 1);
  const double ax = x - x0;
  const double ay = y - y0;
  const double top = (1.0 - ax) * g(x0, y0) + ax * g(x1, y0);
  const double bottom = (1.0 - ax) * g(x0, y1) + ax * g(x1, y1);
  return (1.0 - ay) * top + ay * bottom;
}

}  // namespace cmfd
