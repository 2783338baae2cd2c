#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <compare>
#include <optional>
#include <vector>

#include "cmfd/convolution.hpp"
#include "cmfd/errors.hpp"
#include "cmfd/image.hpp"
#include "cmfd/resample.hpp"

namespace cmfd {

/// Scale-space keypoint in original-image coordinates.
struct Keypoint {
  double x = 0.0;      // column, sub-pixel
  double y = 0.0;      // row, sub-pixel
  double sigma = 1.0;  // scale in pixels

  friend bool operator==(const Keypoint&, const Keypoint&) = default;
};

struct DetectorConfig {
  /// Minimum |DoG| response of a refined extremum. 0 keeps every non-zero response.
  double contrast_threshold = 0.0;
  /// Octave count; unset means floor(log2(min dim)) - 2 of the normalized image.
  std::optional<int> octaves;
  int scales_per_octave = 3;
  /// Principal curvature ratio bound r; extrema with tr^2/det >= (r+1)^2/r are dropped.
  double edge_response_threshold = 10.0;
  /// Images whose long edge is shorter than this are up-sampled to it.
  int normalization_target = 3000;
  double base_sigma = 1.6;

  void validate() const {
    if (octaves && *octaves < 1) throw ArgumentError("octaves must be >= 1");
    if (scales_per_octave < 2) throw ArgumentError("scales_per_octave must be >= 2");
    if (normalization_target < 1) throw ArgumentError("normalization_target must be >= 1");
    if (!(edge_response_threshold > 0.0)) throw ArgumentError("edge threshold must be > 0");
    if (!(base_sigma > 0.0)) throw ArgumentError("base_sigma must be > 0");
    if (contrast_threshold < 0.0) throw ArgumentError("contrast threshold must be >= 0");
  }
};

/// Resolution normalization factor: target / long edge for images below the target, else 1.
inline double scale_factor(int height, int width, int target) {
  if (height < 1 || width < 1 || target < 1) throw ArgumentError("dimensions must be >= 1");
  const int long_edge = std::max(height, width);
  return long_edge < target ? static_cast<double>(target) / long_edge : 1.0;
}

namespace detail {

using Plane = Grid<float>;

inline constexpr int kImageBorder = 5;
inline constexpr int kMaxRefineSteps = 5;

inline Plane downsample_half(const Plane& in) {
  Plane out((in.width() + 1) / 2, (in.height() + 1) / 2);
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x) out(x, y) = in(2 * x, 2 * y);
  return out;
}

inline Plane subtract(const Plane& a, const Plane& b) {
  Plane out(a.width(), a.height());
  auto pa = a.values();
  auto pb = b.values();
  auto po = out.values();
  for (std::size_t i = 0; i < po.size(); ++i) po[i] = pa[i] - pb[i];
  return out;
}

// Solves H x = b for a symmetric 3x3 system; false if (near) singular.
inline bool solve3(const std::array<double, 9>& h, const std::array<double, 3>& b,
                   std::array<double, 3>& x) {
  const double det = h[0] * (h[4] * h[8] - h[5] * h[7]) - h[1] * (h[3] * h[8] - h[5] * h[6]) +
                     h[2] * (h[3] * h[7] - h[4] * h[6]);
  if (std::abs(det) < 1e-18) return false;
  auto replaced = [&](int col) {
    std::array<double, 9> m = h;
    for (int r = 0; r < 3; ++r) m[r * 3 + col] = b[r];
    return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
           m[2] * (m[3] * m[7] - m[4] * m[6]);
  };
  for (int c = 0; c < 3; ++c) x[c] = replaced(c) / det;
  return true;
}

inline bool is_extremum(const std::vector<Plane>& dog, int layer, int x, int y) {
  const float v = dog[layer](x, y);
  if (v == 0.0f) return false;
  if (v > 0) {
    for (int l = layer - 1; l <= layer + 1; ++l)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          if (l == layer && dx == 0 && dy == 0) continue;
          if (dog[l](x + dx, y + dy) >= v) return false;
        }
  } else {
    for (int l = layer - 1; l <= layer + 1; ++l)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          if (l == layer && dx == 0 && dy == 0) continue;
          if (dog[l](x + dx, y + dy) <= v) return false;
        }
  }
  return true;
}

// Quadratic sub-pixel refinement plus contrast and edge tests. Returns the keypoint in the
// coordinates of the octave-0 (normalized) image.
inline std::optional<Keypoint> refine_extremum(const std::vector<Plane>& dog, int octave,
                                               int layer, int x, int y,
                                               const DetectorConfig& cfg) {
  const int s = cfg.scales_per_octave;
  const int w = dog[0].width();
  const int h = dog[0].height();
  std::array<double, 3> offset{};
  std::array<double, 3> grad{};
  int step = 0;
  for (; step < kMaxRefineSteps; ++step) {
    const Plane& prev = dog[layer - 1];
    const Plane& cur = dog[layer];
    const Plane& next = dog[layer + 1];
    const double c = cur(x, y);
    grad = {0.5 * (cur(x + 1, y) - cur(x - 1, y)), 0.5 * (cur(x, y + 1) - cur(x, y - 1)),
            0.5 * (next(x, y) - prev(x, y))};
    const double dxx = cur(x + 1, y) + cur(x - 1, y) - 2 * c;
    const double dyy = cur(x, y + 1) + cur(x, y - 1) - 2 * c;
    const double dss = next(x, y) + prev(x, y) - 2 * c;
    const double dxy = 0.25 * (cur(x + 1, y + 1) - cur(x - 1, y + 1) - cur(x + 1, y - 1) +
                               cur(x - 1, y - 1));
    const double dxs = 0.25 * (next(x + 1, y) - next(x - 1, y) - prev(x + 1, y) + prev(x - 1, y));
    const double dys = 0.25 * (next(x, y + 1) - next(x, y - 1) - prev(x, y + 1) + prev(x, y - 1));
    const std::array<double, 9> hess{dxx, dxy, dxs, dxy, dyy, dys, dxs, dys, dss};
    std::array<double, 3> sol{};
    if (!solve3(hess, {-grad[0], -grad[1], -grad[2]}, sol)) return std::nullopt;
    offset = sol;
    if (std::abs(offset[0]) < 0.5 && std::abs(offset[1]) < 0.5 && std::abs(offset[2]) < 0.5) break;
    if (std::abs(offset[0]) > 1e6 || std::abs(offset[1]) > 1e6 || std::abs(offset[2]) > 1e6)
      return std::nullopt;
    x += static_cast<int>(std::lround(offset[0]));
    y += static_cast<int>(std::lround(offset[1]));
    layer += static_cast<int>(std::lround(offset[2]));
    if (layer < 1 || layer > s || x < kImageBorder || x >= w - kImageBorder ||
        y < kImageBorder || y >= h - kImageBorder)
      return std::nullopt;
  }
  if (step >= kMaxRefineSteps) return std::nullopt;

  const Plane& cur = dog[layer];
  const double contrast =
      cur(x, y) + 0.5 * (grad[0] * offset[0] + grad[1] * offset[1] + grad[2] * offset[2]);
  if (contrast == 0.0 || std::abs(contrast) < cfg.contrast_threshold) return std::nullopt;

  const double c = cur(x, y);
  const double dxx = cur(x + 1, y) + cur(x - 1, y) - 2 * c;
  const double dyy = cur(x, y + 1) + cur(x, y - 1) - 2 * c;
  const double dxy =
      0.25 * (cur(x + 1, y + 1) - cur(x - 1, y + 1) - cur(x + 1, y - 1) + cur(x - 1, y - 1));
  const double tr = dxx + dyy;
  const double det = dxx * dyy - dxy * dxy;
  const double r = cfg.edge_response_threshold;
  if (det <= 0 || tr * tr * r >= (r + 1) * (r + 1) * det) return std::nullopt;

  const double octave_scale = std::ldexp(1.0, octave);
  Keypoint kp;
  kp.x = (x + offset[0]) * octave_scale;
  kp.y = (y + offset[1]) * octave_scale;
  kp.sigma = cfg.base_sigma * std::pow(2.0, (layer + offset[2]) / s) * octave_scale;
  return kp;
}

}  // namespace detail

/// Dense difference-of-Gaussians keypoints. The image is first up-sampled (bicubic) so its
/// long edge reaches `cfg.normalization_target`; results are mapped back to the input frame
/// and sorted by (y, x, sigma).
inline std::vector<Keypoint> detect_keypoints(const GrayImage& img, const DetectorConfig& cfg) {
  cfg.validate();
  using detail::Plane;
  const double s = scale_factor(img.height(), img.width(), cfg.normalization_target);
  const int up_w = static_cast<int>(std::lround(img.width() * s));
  const int up_h = static_cast<int>(std::lround(img.height() * s));
  const double sx = static_cast<double>(up_w) / img.width();
  const double sy = static_cast<double>(up_h) / img.height();

  Plane base(img.width(), img.height());
  std::transform(img.values().begin(), img.values().end(), base.values().begin(),
                 [](double v) { return static_cast<float>(v); });
  if (up_w != img.width() || up_h != img.height()) {
    base = resize_bicubic(base, up_w, up_h);
    for (float& v : base.values()) v = std::clamp(v, 0.0f, 1.0f);
  }

  const int min_dim = std::min(up_w, up_h);
  const int min_octave_dim = 2 * detail::kImageBorder + 3;
  if (min_dim < min_octave_dim) return {};
  int n_octaves = cfg.octaves.value_or(
      static_cast<int>(std::floor(std::log2(static_cast<double>(min_dim)))) - 2);
  if (n_octaves < 1) return {};

  const int spo = cfg.scales_per_octave;
  const double k = std::pow(2.0, 1.0 / spo);
  std::vector<std::vector<double>> increments;
  for (int i = 1; i < spo + 3; ++i) {
    const double prev = cfg.base_sigma * std::pow(k, i - 1);
    const double cur = prev * k;
    increments.push_back(gaussian_kernel_1d(std::sqrt(cur * cur - prev * prev), 4.0));
  }
  const double assumed_blur = 0.5;
  const double init = std::sqrt(std::max(cfg.base_sigma * cfg.base_sigma - assumed_blur * assumed_blur, 0.01));
  {
    const auto kern = gaussian_kernel_1d(init, 4.0);
    base = convolve_separable(base, std::span<const double>(kern), std::span<const double>(kern));
  }

  std::vector<Keypoint> up_frame;
  Plane octave_base = std::move(base);
  for (int o = 0; o < n_octaves; ++o) {
    if (std::min(octave_base.width(), octave_base.height()) < min_octave_dim) break;
    std::vector<Plane> dog;
    dog.reserve(spo + 2);
    Plane prev = octave_base;
    Plane next_base;
    for (int i = 0; i < spo + 2; ++i) {
      const auto& kern = increments[i];
      Plane cur = convolve_separable(prev, std::span<const double>(kern), std::span<const double>(kern));
      dog.push_back(detail::subtract(cur, prev));
      if (i + 1 == spo) next_base = cur;
      prev = std::move(cur);
    }
    const int w = octave_base.width();
    const int h = octave_base.height();
    const float pre = static_cast<float>(0.5 * cfg.contrast_threshold / spo);
    for (int layer = 1; layer <= spo; ++layer)
      for (int y = detail::kImageBorder; y < h - detail::kImageBorder; ++y)
        for (int x = detail::kImageBorder; x < w - detail::kImageBorder; ++x) {
          const float v = dog[layer](x, y);
          if (std::abs(v) < pre || !detail::is_extremum(dog, layer, x, y)) continue;
          if (auto kp = detail::refine_extremum(dog, o, layer, x, y, cfg)) up_frame.push_back(*kp);
        }
    octave_base = detail::downsample_half(next_base);
  }

  std::vector<Keypoint> out;
  out.reserve(up_frame.size());
  for (const auto& kp : up_frame) {
    Keypoint m{(kp.x + 0.5) / sx - 0.5, (kp.y + 0.5) / sy - 0.5, kp.sigma / s};
    if (m.x < 0.0 || m.y < 0.0 || m.x >= img.width() || m.y >= img.height()) continue;
    out.push_back(m);
  }
  std::sort(out.begin(), out.end(), [](const Keypoint& a, const Keypoint& b) {
    if (a.y != b.y) return a.y < b.y;
    if (a.x != b.x) return a.x < b.x;
    return a.sigma < b.sigma;
  });
  return out;
}

}  // namespace cmfd
