#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "cmfd/convolution.hpp"
#include "cmfd/errors.hpp"
#include "cmfd/image.hpp"
#include "cmfd/keypoints.hpp"
#include "cmfd/resample.hpp"

namespace cmfd {

struct DescriptorConfig {
  int n_max = 4;                         // radial order
  int m_max = 4;                         // angular repetition
  double patch_radius_multiplier = 6.0;  // region radius = sigma * multiplier
  int resample_size = 32;                // side of the square grid holding the unit disk
  /// Subtract the region mean before integrating. Without it the (n, 0) moments of the
  /// local brightness swamp the texture terms and all features crowd together.
  bool zero_mean = true;
  /// describe_all samples a Gaussian-smoothed image whose blur is smoothing * sigma, at least
  /// min_smoothing pixels. Zero for both samples the raw image.
  double smoothing = 1.0;
  double min_smoothing = 0.0;
  /// Keypoints finer than this (pixels) are described as if they had this scale.
  double min_scale = 0.0;

  double scale_of(const Keypoint& kp) const { return std::max(kp.sigma, min_scale); }

  int dimension() const { return (n_max + 1) * (m_max + 1); }
  int index(int n, int m) const { return n * (m_max + 1) + m; }

  void validate() const {
    if (n_max < 0 || m_max < 0) throw ArgumentError("moment orders must be >= 0");
    if (!(patch_radius_multiplier > 0.0)) throw ArgumentError("radius multiplier must be > 0");
    if (resample_size < 8) throw ArgumentError("resample_size must be >= 8");
    if (!(min_scale >= 0.0)) throw ArgumentError("min_scale must be >= 0");
    if (!(smoothing >= 0.0) || !(min_smoothing >= 0.0)) throw ArgumentError("smoothing must be >= 0");
  }
};

/// Complex radial-harmonic moments of a keypoint region. `magnitudes` (unit L2 norm) is the
/// rotation-invariant matching feature; the phases of `moments` rotate with the region.
struct Descriptor {
  std::vector<std::complex<double>> moments;
  std::vector<double> magnitudes;
  Keypoint keypoint;
  int m_max = 0;  // moments are indexed n * (m_max + 1) + m
};

/// Precomputes the sampling grid and moment basis once per configuration.
///
/// For the unit disk sampled on a resample_size^2 grid, moment (n, m) is
///   M(n, m) = sum f(r, theta) * exp(i 2 pi n r) * exp(-i m theta) * dA
/// with r normalized to [0, 1]. Grid points whose centre lies inside the disk weigh 1.
class MomentDescriber {
 public:
  explicit MomentDescriber(DescriptorConfig cfg = {}) : cfg_(cfg) {
    cfg_.validate();
    const int n = cfg_.resample_size;
    const double step = 2.0 / n;
    const double area = step * step;
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        const double u = -1.0 + (i + 0.5) * step;
        const double v = -1.0 + (j + 0.5) * step;
        const double r = std::hypot(u, v);
        if (r > 1.0) continue;
        const double theta = std::atan2(v, u);
        offsets_.push_back({u, v});
        for (int rn = 0; rn <= cfg_.n_max; ++rn)
          for (int am = 0; am <= cfg_.m_max; ++am)
            basis_.push_back(std::polar(area, 2.0 * std::numbers::pi * rn * r - am * theta));
      }
  }

  const DescriptorConfig& config() const noexcept { return cfg_; }

  /// Throws DescribeError when the region misses the image or has no signal.
  Descriptor describe(const GrayImage& img, const Keypoint& kp) const { return describe(img.field(), kp); }

  /// Describes every keypoint that can be described, in order, skipping DescribeError cases.
  /// Blur levels are spaced by a quarter octave and each keypoint uses the nearest one.
  std::vector<Descriptor> describe_all(const GrayImage& img, std::span<const Keypoint> kps) const {
    std::vector<Descriptor> out;
    out.reserve(kps.size());
    const bool smooth = cfg_.smoothing > 0.0 || cfg_.min_smoothing > 0.0;
    std::vector<int> level(kps.size(), -1);
    int top = -1;
    if (smooth)
      for (std::size_t i = 0; i < kps.size(); ++i) {
        const double t = std::max(cfg_.smoothing * cfg_.scale_of(kps[i]), cfg_.min_smoothing);
        if (t < kMinBlur) continue;
        level[i] = std::max(0, static_cast<int>(std::lround(4.0 * std::log2(t / kMinBlur))));
        top = std::max(top, level[i]);
      }
    std::vector<Field> stack(static_cast<std::size_t>(top + 1));
    for (std::size_t i = 0; i < kps.size(); ++i) {
      const int l = level[i];
      if (l >= 0 && stack[l].values().empty())
        stack[l] = gaussian_blur(img.field(), kMinBlur * std::exp2(l / 4.0));
      try {
        out.push_back(describe(l < 0 ? img.field() : stack[l], kps[i]));
      } catch (const DescribeError&) {
      }
    }
    return out;
  }

  Descriptor describe(const Field& img, const Keypoint& kp) const {
    const double radius = cfg_.scale_of(kp) * cfg_.patch_radius_multiplier;
    if (!(radius > 0.0)) throw DescribeError("keypoint scale must be > 0");
    const double nx = std::clamp(kp.x, -0.5, img.width() - 0.5);
    const double ny = std::clamp(kp.y, -0.5, img.height() - 0.5);
    if (std::hypot(nx - kp.x, ny - kp.y) > radius)
      throw DescribeError("keypoint region lies outside the image");

    const int dim = cfg_.dimension();
    Descriptor d;
    d.keypoint = kp;
    d.m_max = cfg_.m_max;
    d.moments.assign(static_cast<std::size_t>(dim), {0.0, 0.0});
    std::vector<double> samples;
    samples.reserve(offsets_.size());
    for (const auto& [u, v] : offsets_)
      samples.push_back(sample_bilinear_clamped(img, kp.x + u * radius, kp.y + v * radius, 0.0));
    if (cfg_.zero_mean) {
      const double mean = std::accumulate(samples.begin(), samples.end(), 0.0) / samples.size();
      for (double& f : samples) f -= mean;
    }
    const std::complex<double>* b = basis_.data();
    for (double f : samples) {
      if (f != 0.0)
        for (int k = 0; k < dim; ++k) d.moments[k] += f * b[k];
      b += dim;
    }
    d.magnitudes.resize(static_cast<std::size_t>(dim));
    double norm = 0.0;
    for (int k = 0; k < dim; ++k) {
      d.magnitudes[k] = std::abs(d.moments[k]);
      norm += d.magnitudes[k] * d.magnitudes[k];
    }
    norm = std::sqrt(norm);
    if (!(norm > 1e-12)) throw DescribeError("keypoint region carries no signal");
    for (double& m : d.magnitudes) m /= norm;
    return d;
  }

 private:
  static constexpr double kMinBlur = 0.25;

  DescriptorConfig cfg_;
  std::vector<std::pair<double, double>> offsets_;
  std::vector<std::complex<double>> basis_;  // [point][n*(m_max+1)+m]
};

inline Descriptor describe(const GrayImage& img, const Keypoint& kp, const DescriptorConfig& cfg = {}) {
  return MomentDescriber(cfg).describe(img, kp);
}

inline double feature_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ArgumentError("feature dimensions differ");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

inline double feature_distance(const Descriptor& a, const Descriptor& b) {
  return feature_distance(a.magnitudes, b.magnitudes);
}

struct PhaseSignature {
  double angle = 0.0;        // radians in [0, 2 pi): rotation taking region a onto region b
  double consistency = 0.0;  // 1 = every phase agrees with `angle`
};

/// Estimates the relative rotation between two descriptors from their moment phases.
///
/// A rotation by alpha multiplies moment (n, m) by exp(-i m alpha), so each pair of phases
/// proposes alpha = -(arg b - arg a) / m modulo 2 pi / m. The estimate maximizes the
/// agreement
///   C(alpha) = sum cos(arg b_nm - arg a_nm + m alpha) / #terms
/// over all terms with m >= 1 and non-vanishing moments, and the consistency is max(C, 0).
/// Every term counts equally: weighting by magnitude lets the one or two strongest terms,
/// which any rotation can align, dominate the score.
inline PhaseSignature relative_phase_signature(const Descriptor& a, const Descriptor& b) {
  if (a.moments.size() != b.moments.size() || a.m_max != b.m_max)
    throw ArgumentError("descriptor dimensions differ");
  const int m_max = a.m_max;
  const int stride = m_max + 1;
  if (stride <= 0 || a.moments.size() % stride != 0) throw ArgumentError("bad m_max for descriptor");
  const int n_count = static_cast<int>(a.moments.size()) / stride;

  std::vector<std::complex<double>> per_m(static_cast<std::size_t>(stride), {0.0, 0.0});
  double total = 0.0;
  for (int n = 0; n < n_count; ++n)
    for (int m = 1; m <= m_max; ++m) {
      const auto& ma = a.moments[n * stride + m];
      const auto& mb = b.moments[n * stride + m];
      const double wa = std::abs(ma);
      const double wb = std::abs(mb);
      if (wa < 1e-9 || wb < 1e-9) continue;
      per_m[m] += (mb / wb) * std::conj(ma / wa);  // exp(i (arg b - arg a))
      total += 1.0;
    }
  if (total <= 0.0) return {};

  // C(alpha) = Re sum_m Z_m exp(i m alpha) / total.
  auto score = [&](double alpha) {
    double s = 0.0;
    for (int m = 1; m <= m_max; ++m) s += (per_m[m] * std::polar(1.0, m * alpha)).real();
    return s / total;
  };
  constexpr int kSteps = 720;
  const double two_pi = 2.0 * std::numbers::pi;
  // Grid search with rotating phasors: rot[m] = exp(i m step), z[m] = per_m[m] exp(i m alpha).
  std::vector<std::complex<double>> rot(per_m.size()), z(per_m);
  for (int m = 1; m <= m_max; ++m) rot[m] = std::polar(1.0, m * two_pi / kSteps);
  int best_i = 0;
  double best_raw = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < kSteps; ++i) {
    double c = 0.0;
    for (int m = 1; m <= m_max; ++m) {
      c += z[m].real();
      z[m] *= rot[m];
    }
    if (c > best_raw) {
      best_raw = c;
      best_i = i;
    }
  }
  double best_alpha = two_pi * best_i / kSteps;
  double best = score(best_alpha);
  // Newton polish on the trigonometric polynomial.
  for (int it = 0; it < 8; ++it) {
    double d1 = 0.0, d2 = 0.0;
    for (int m = 1; m <= m_max; ++m) {
      const auto z = per_m[m] * std::polar(1.0, m * best_alpha);
      d1 += -m * z.imag();
      d2 += -double(m) * m * z.real();
    }
    if (d2 >= 0.0 || d1 == 0.0) break;
    const double next = best_alpha - d1 / d2;
    const double c = score(next);
    if (c < best) break;
    best = c;
    best_alpha = next;
  }
  best_alpha = std::fmod(best_alpha, two_pi);
  if (best_alpha < 0.0) best_alpha += two_pi;
  if (best_alpha >= two_pi) best_alpha = 0.0;
  return {best_alpha, std::clamp(best, 0.0, 1.0)};
}

}  // namespace cmfd
