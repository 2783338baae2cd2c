#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cmfd/errors.hpp"

namespace cmfd {

/// Dense row-major 2-D array. Index as (x, y) = (column, row).
template <typename T>
class Grid {
 public:
  using value_type = T;

  Grid() = default;
  Grid(int width, int height, T fill = T{})
      : width_(checked_dim(width)), height_(checked_dim(height)),
        data_(static_cast<std::size_t>(width_) * height_, fill) {}
  Grid(int width, int height, std::vector<T> data)
      : width_(checked_dim(width)), height_(checked_dim(height)), data_(std::move(data)) {
    if (data_.size() != static_cast<std::size_t>(width_) * height_)
      throw ArgumentError("grid data length does not match width*height");
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(int x, int y) noexcept { return data_[index(x, y)]; }
  const T& operator()(int x, int y) const noexcept { return data_[index(x, y)]; }

  bool contains(int x, int y) const noexcept {
    return x >= 0 && y >= 0 && x < width_ && y < height_;
  }

  std::span<T> row(int y) noexcept {
    return {data_.data() + static_cast<std::size_t>(y) * width_, static_cast<std::size_t>(width_)};
  }
  std::span<const T> row(int y) const noexcept {
    return {data_.data() + static_cast<std::size_t>(y) * width_, static_cast<std::size_t>(width_)};
  }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }

  template <typename U>
  bool same_shape(const Grid<U>& other) const noexcept {
    return width_ == other.width() && height_ == other.height();
  }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  static int checked_dim(int d) {
    if (d < 0) throw ArgumentError("grid dimension must be non-negative");
    return d;
  }
  std::size_t index(int x, int y) const noexcept {
    return static_cast<std::size_t>(y) * width_ + x;
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

/// Unconstrained real-valued field (heat maps, kernels, gradients).
using Field = Grid<double>;

/// Binary mask; every sample is 0 or 1.
using BinaryMask = Grid<std::uint8_t>;

/// Intensity image with every sample finite and in [0, 1].
class GrayImage {
 public:
  GrayImage() = default;

  /// Validates the field; throws ArgumentError on empty dims or out-of-range samples.
  explicit GrayImage(Field field) : field_(std::move(field)) {
    if (field_.width() < 1 || field_.height() < 1)
      throw ArgumentError("image must be at least 1x1");
    for (double v : field_.values())
      if (!std::isfinite(v) || v < 0.0 || v > 1.0)
        throw ArgumentError("image samples must be finite and in [0,1]");
  }

  GrayImage(int width, int height, double fill = 0.0)
      : GrayImage(Field(width, height, fill)) {}

  /// Clamps every sample into [0,1] (NaN becomes 0) before wrapping.
  static GrayImage clamped(Field field) {
    for (double& v : field.values()) v = std::isfinite(v) ? std::clamp(v, 0.0, 1.0) : 0.0;
    return GrayImage(std::move(field));
  }

  int width() const noexcept { return field_.width(); }
  int height() const noexcept { return field_.height(); }
  double operator()(int x, int y) const noexcept { return field_(x, y); }
  const Field& field() const noexcept { return field_; }
  std::span<const double> values() const noexcept { return field_.values(); }

  friend bool operator==(const GrayImage&, const GrayImage&) = default;

 private:
  Field field_;
};

inline std::size_t count_nonzero(const BinaryMask& mask) {
  return static_cast<std::size_t>(
      std::count_if(mask.values().begin(), mask.values().end(), [](auto v) { return v != 0; }));
}

/// Mask of samples >= threshold.
inline BinaryMask threshold(const Field& field, double t) {
  BinaryMask out(field.width(), field.height());
  auto src = field.values();
  auto dst = out.values();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] >= t ? 1 : 0;
  return out;
}

inline BinaryMask mask_union(const BinaryMask& a, const BinaryMask& b) {
  if (!a.same_shape(b)) throw ArgumentError("mask shapes differ");
  BinaryMask out = a;
  auto dst = out.values();
  auto src = b.values();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = (dst[i] | src[i]) ? 1 : 0;
  return out;
}

/// True when every set pixel of `inner` is also set in `outer`.
inline bool is_subset(const BinaryMask& inner, const BinaryMask& outer) {
  if (!inner.same_shape(outer)) throw ArgumentError("mask shapes differ");
  auto a = inner.values();
  auto b = outer.values();
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] && !b[i]) return false;
  return true;
}

/// Exact rotation by a multiple of 90 degrees (clockwise as displayed, y pointing down).
template <typename T>
Grid<T> rotate90(const Grid<T>& in, int quarter_turns) {
  int q = ((quarter_turns % 4) + 4) % 4;
  const int w = in.width();
  const int h = in.height();
  if (q == 0) return in;
  if (q == 2) {
    Grid<T> out(w, h);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out(w - 1 - x, h - 1 - y) = in(x, y);
    return out;
  }
  Grid<T> out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (q == 1)
        out(h - 1 - y, x) = in(x, y);
      else
        out(y, w - 1 - x) = in(x, y);
    }
  return out;
}

inline GrayImage rotate90(const GrayImage& in, int quarter_turns) {
  return GrayImage(rotate90(in.field(), quarter_turns));
}

}  // namespace cmfd
