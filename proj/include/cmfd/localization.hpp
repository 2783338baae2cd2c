#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cmfd/convolution.hpp"
#include "cmfd/descriptor.hpp"
#include "cmfd/errors.hpp"
#include "cmfd/image.hpp"
#include "cmfd/keypoints.hpp"
#include "cmfd/matching.hpp"
#include "cmfd/morphology.hpp"
#include "cmfd/nn_index.hpp"
#include "cmfd/phrase.hpp"
#include "cmfd/resample.hpp"

namespace cmfd {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

/// 2x3 forward transform [a b tx; c d ty].
struct Affine {
  std::array<double, 6> m{1.0, 0.0, 0.0, 0.0, 1.0, 0.0};

  static Affine translation(double dx, double dy) { return {{1.0, 0.0, dx, 0.0, 1.0, dy}}; }

  /// Rotation by `angle` (radians, y-down frame) and uniform `scale` about (cx, cy),
  /// followed by a shift (dx, dy).
  static Affine similarity(double scale, double angle, double cx, double cy, double dx = 0.0,
                           double dy = 0.0) {
    const double c = scale * std::cos(angle);
    const double s = scale * std::sin(angle);
    return {{c, -s, cx - c * cx + s * cy + dx, s, c, cy - s * cx - c * cy + dy}};
  }

  Point2 apply(double x, double y) const {
    return {m[0] * x + m[1] * y + m[2], m[3] * x + m[4] * y + m[5]};
  }
  Point2 apply(Point2 p) const { return apply(p.x, p.y); }
  Point2 apply_linear(double x, double y) const { return {m[0] * x + m[1] * y, m[3] * x + m[4] * y}; }

  double determinant() const { return m[0] * m[4] - m[1] * m[3]; }

  bool finite() const {
    return std::all_of(m.begin(), m.end(), [](double v) { return std::isfinite(v); });
  }

  Affine inverse() const {
    const double det = determinant();
    if (!std::isfinite(det) || std::abs(det) < 1e-12) throw EstimationError("affine is not invertible");
    const double a = m[4] / det, b = -m[1] / det, c = -m[3] / det, d = m[0] / det;
    return {{a, b, -(a * m[2] + b * m[5]), c, d, -(c * m[2] + d * m[5])}};
  }

  friend bool operator==(const Affine&, const Affine&) = default;
};

/// outer(inner(p)).
inline Affine compose(const Affine& outer, const Affine& inner) {
  const auto& a = outer.m;
  const auto& b = inner.m;
  return {{a[0] * b[0] + a[1] * b[3], a[0] * b[1] + a[1] * b[4], a[0] * b[2] + a[1] * b[5] + a[2],
           a[3] * b[0] + a[4] * b[3], a[3] * b[1] + a[4] * b[4], a[3] * b[2] + a[4] * b[5] + a[5]}};
}

/// Pairs oriented source -> destination (a -> b), the affine mapping sources onto
/// destinations, and how many pairs the final model explains.
struct Cluster {
  std::vector<MatchPair> pairs;
  Affine affine;
  std::size_t inlier_count = 0;
};

struct RoiHeatMap {
  Field raw;
  Field normalized;
};

enum class FusionMode { Fusion, SsimOnly, RoiOnly };

inline std::string_view to_string(FusionMode m) {
  switch (m) {
    case FusionMode::Fusion: return "fusion";
    case FusionMode::SsimOnly: return "ssim";
    case FusionMode::RoiOnly: return "roi";
  }
  return "?";
}

inline FusionMode parse_fusion_mode(std::string_view name) {
  for (auto m : {FusionMode::Fusion, FusionMode::SsimOnly, FusionMode::RoiOnly})
    if (name == to_string(m)) return m;
  throw ArgumentError("unknown fusion mode: " + std::string(name));
}

struct GeometricFilterConfig {
  int neighbors = 5;
  double tolerance = 3.0;            // absolute reprojection slack, pixels
  double relative_tolerance = 0.05;  // slack per pixel of lever arm
  double max_scale_ratio = 2.0;      // allowed disagreement with the keypoint scale ratio
};

struct RansacConfig {
  double threshold = 3.0;
  int max_iterations = 2000;
  double confidence = 0.999;
  std::uint64_t seed = 0;
};

struct ClusterConfig {
  double translation_fraction = 0.05;  // of the image diagonal
  double log_scale = 0.1;
  double angle = 0.15;  // radians
  std::size_t min_cluster_size = 4;
  RansacConfig ransac;
};

struct ContentFilterConfig {
  int patch_size = 16;
  double min_zncc = 0.3;
  std::size_t min_cluster_size = 4;
};

struct RoiConfig {
  double multiplier = 10.0;   // disk radius = sigma * multiplier
  double dilation = 50.0;     // pixels
  double t_sigma = 0.001;     // smoothing kernel exp(-t ||d||^2)
  double t_nor = 25000.0;
};

struct FusionConfig {
  double t_cor = 0.4;
  FusionMode mode = FusionMode::Fusion;
  double min_component_fraction = 1e-4;
  double closing_radius = 5.0;
};

namespace detail {

inline double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  a = std::fmod(a, two_pi);
  if (a <= -std::numbers::pi) a += two_pi;
  if (a > std::numbers::pi) a -= two_pi;
  return a;
}

struct OrientedPair {
  Point2 a;
  Point2 b;
  double sigma_ratio;  // sigma_b / sigma_a
};

inline OrientedPair orient(const MatchPair& p, std::span<const Keypoint> kps, bool flip) {
  const Keypoint& ka = kps[flip ? p.b : p.a];
  const Keypoint& kb = kps[flip ? p.a : p.b];
  return {{ka.x, ka.y}, {kb.x, kb.y}, kb.sigma / ka.sigma};
}

// Least-squares affine from point correspondences; nullopt when the sources are collinear.
inline std::optional<Affine> fit_affine(std::span<const Point2> src, std::span<const Point2> dst) {
  if (src.size() < 3) return std::nullopt;
  double mx = 0, my = 0;
  for (const auto& p : src) mx += p.x, my += p.y;
  mx /= src.size();
  my /= src.size();
  double sxx = 0, sxy = 0, syy = 0;
  std::array<double, 3> bu{}, bv{};
  for (std::size_t i = 0; i < src.size(); ++i) {
    const double x = src[i].x - mx, y = src[i].y - my;
    sxx += x * x, sxy += x * y, syy += y * y;
    bu[0] += x * dst[i].x, bu[1] += y * dst[i].x, bu[2] += dst[i].x;
    bv[0] += x * dst[i].y, bv[1] += y * dst[i].y, bv[2] += dst[i].y;
  }
  const double det = sxx * syy - sxy * sxy;
  if (!(det > 1e-9 * std::max(1.0, (sxx + syy) * (sxx + syy)))) return std::nullopt;
  const double n = static_cast<double>(src.size());
  auto solve = [&](const std::array<double, 3>& b, double& p, double& q, double& t) {
    p = (syy * b[0] - sxy * b[1]) / det;
    q = (sxx * b[1] - sxy * b[0]) / det;
    t = b[2] / n - p * mx - q * my;
  };
  Affine A;
  solve(bu, A.m[0], A.m[1], A.m[2]);
  solve(bv, A.m[3], A.m[4], A.m[5]);
  if (!A.finite()) return std::nullopt;
  return A;
}

inline double reprojection_error(const Affine& A, Point2 s, Point2 d) {
  const Point2 p = A.apply(s);
  return std::hypot(p.x - d.x, p.y - d.y);
}

}  // namespace detail

/// Keeps a pair when some pair among its nearest co-matched pairs (nearest in the joint
/// endpoint space, either orientation) defines a similarity transform that agrees with the
/// keypoint scale ratio and predicts a third neighbouring pair.
inline std::vector<MatchPair> filter_geometric(std::span<const MatchPair> pairs,
                                               std::span<const Keypoint> keypoints,
                                               const GeometricFilterConfig& cfg = {}) {
  if (pairs.size() < 3) return {};
  FeatureMatrix joint(4);
  for (const auto& p : pairs)
    for (bool flip : {false, true}) {
      const auto o = detail::orient(p, keypoints, flip);
      joint.push_back(std::vector<double>{o.a.x, o.a.y, o.b.x, o.b.y});
    }
  const NeighborIndex index(joint);
  const std::size_t want = static_cast<std::size_t>(std::max(2, cfg.neighbors));
  const double log_slack = std::log(cfg.max_scale_ratio);

  std::vector<MatchPair> kept;
  std::vector<detail::OrientedPair> near;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto p = detail::orient(pairs[i], keypoints, false);
    near.clear();
    std::vector<bool> seen(pairs.size(), false);
    seen[i] = true;
    const std::size_t k = std::min(joint.rows() - 1, 2 * want + 1);
    for (const auto& nb : index.query(joint.row(2 * i), k, 2 * i)) {
      const std::size_t j = nb.index / 2;
      if (seen[j]) continue;
      seen[j] = true;
      near.push_back(detail::orient(pairs[j], keypoints, nb.index % 2 == 1));
      if (near.size() == want) break;
    }

    bool supported = false;
    for (std::size_t q = 0; q < near.size() && !supported; ++q) {
      const double ux = near[q].a.x - p.a.x, uy = near[q].a.y - p.a.y;
      const double vx = near[q].b.x - p.b.x, vy = near[q].b.y - p.b.y;
      const double lu = std::hypot(ux, uy), lv = std::hypot(vx, vy);
      if (lu < 1.0 || lv < 1e-9) continue;
      const double s = lv / lu;
      if (std::abs(std::log(s) - std::log(p.sigma_ratio)) > log_slack) continue;
      const double ang = std::atan2(ux * vy - uy * vx, ux * vx + uy * vy);
      const Affine T = Affine::similarity(s, ang, p.a.x, p.a.y, p.b.x - p.a.x, p.b.y - p.a.y);
      for (std::size_t r = 0; r < near.size(); ++r) {
        if (r == q) continue;
        // T passes through both anchors, so its error grows with the distance from the nearer one.
        const double arm = std::min(std::hypot(near[r].a.x - p.a.x, near[r].a.y - p.a.y),
                                    std::hypot(near[r].a.x - near[q].a.x, near[r].a.y - near[q].a.y));
        if (detail::reprojection_error(T, near[r].a, near[r].b) <=
            cfg.tolerance + cfg.relative_tolerance * s * arm) {
          supported = true;
          break;
        }
      }
    }
    if (supported) kept.push_back(pairs[i]);
  }
  return kept;
}

struct AffineEstimate {
  Affine affine;
  std::vector<std::size_t> inliers;  // indices into the input pairs
};

/// RANSAC over minimal 3-pair samples, then least-squares refits on the inliers.
/// Pairs are read as correspondences keypoints[a] -> keypoints[b].
inline AffineEstimate estimate_affine(std::span<const MatchPair> pairs, std::span<const Keypoint> keypoints,
                                      const RansacConfig& cfg = {}) {
  const std::size_t n = pairs.size();
  if (n < 3) throw EstimationError("affine estimation needs at least 3 pairs");
  std::vector<Point2> src(n), dst(n);
  for (std::size_t i = 0; i < n; ++i) {
    src[i] = {keypoints[pairs[i].a].x, keypoints[pairs[i].a].y};
    dst[i] = {keypoints[pairs[i].b].x, keypoints[pairs[i].b].y};
  }
  auto inliers_of = [&](const Affine& A) {
    std::vector<std::size_t> in;
    for (std::size_t i = 0; i < n; ++i)
      if (detail::reprojection_error(A, src[i], dst[i]) <= cfg.threshold) in.push_back(i);
    return in;
  };

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> best;
  long long budget = cfg.max_iterations;
  for (long long it = 0; it < budget; ++it) {
    std::array<std::size_t, 3> s{};
    s[0] = rng() % n;
    do s[1] = rng() % n; while (s[1] == s[0]);
    do s[2] = rng() % n; while (s[2] == s[0] || s[2] == s[1]);
    const double area = (src[s[1]].x - src[s[0]].x) * (src[s[2]].y - src[s[0]].y) -
                        (src[s[1]].y - src[s[0]].y) * (src[s[2]].x - src[s[0]].x);
    if (std::abs(area) < 1.0) continue;
    const std::array<Point2, 3> ps{src[s[0]], src[s[1]], src[s[2]]};
    const std::array<Point2, 3> pd{dst[s[0]], dst[s[1]], dst[s[2]]};
    const auto model = detail::fit_affine(ps, pd);
    if (!model) continue;
    auto in = inliers_of(*model);
    if (in.size() > best.size()) {
      best = std::move(in);
      const double w = static_cast<double>(best.size()) / n;
      const double miss = 1.0 - w * w * w;
      if (miss <= 0.0) break;
      const double need = std::log(1.0 - cfg.confidence) / std::log(miss);
      budget = std::min<long long>(cfg.max_iterations, static_cast<long long>(std::ceil(need)));
    }
  }
  if (best.size() < 3) throw EstimationError("no non-degenerate affine hypothesis");

  AffineEstimate est;
  for (int round = 0; round < 3; ++round) {
    std::vector<Point2> s, d;
    for (std::size_t i : best) s.push_back(src[i]), d.push_back(dst[i]);
    const auto refit = detail::fit_affine(s, d);
    if (!refit) throw EstimationError("degenerate inlier configuration");
    auto in = inliers_of(*refit);
    est.affine = *refit;
    if (in.size() < 3 || in == best) break;
    best = std::move(in);
  }
  est.inliers = std::move(best);
  return est;
}

/// Offset clustering. Each pair is described by (dx, dy, log sigma ratio, rotation angle);
/// a pair may be linked in either orientation, which negates all four. Pairs are joined by
/// single linkage under per-dimension cutoffs; each cluster large enough is oriented
/// consistently, fitted with RANSAC and reduced to its inliers.
inline std::vector<Cluster> cluster_pairs(std::span<const MatchPair> pairs,
                                          std::span<const Descriptor> descriptors, int width, int height,
                                          const ClusterConfig& cfg = {}) {
  const std::size_t n = pairs.size();
  if (n == 0) return {};
  std::vector<Keypoint> kps;
  kps.reserve(descriptors.size());
  for (const auto& d : descriptors) kps.push_back(d.keypoint);

  struct Vec4 {
    double dx, dy, ls, ang;
  };
  std::vector<Vec4> v(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& ka = kps[pairs[i].a];
    const auto& kb = kps[pairs[i].b];
    v[i] = {kb.x - ka.x, kb.y - ka.y, std::log(kb.sigma / ka.sigma),
            relative_phase_signature(descriptors[pairs[i].a], descriptors[pairs[i].b]).angle};
  }
  const double cut_t = cfg.translation_fraction * std::hypot(width, height);
  auto linked = [&](const Vec4& p, const Vec4& q, bool flip) {
    const double f = flip ? -1.0 : 1.0;
    return std::abs(p.dx - f * q.dx) <= cut_t && std::abs(p.dy - f * q.dy) <= cut_t &&
           std::abs(p.ls - f * q.ls) <= cfg.log_scale &&
           std::abs(detail::wrap_angle(p.ang - f * q.ang)) <= cfg.angle;
  };

  // Union-find with orientation parity relative to the root.
  std::vector<std::size_t> parent(n);
  std::vector<std::uint8_t> parity(n, 0);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    std::uint8_t par = 0;
    std::size_t r = x;
    while (parent[r] != r) par ^= parity[r], r = parent[r];
    // path compression
    std::uint8_t acc = par;
    while (parent[x] != x) {
      const std::size_t next = parent[x];
      const std::uint8_t px = parity[x];
      parent[x] = r;
      parity[x] = acc;
      acc ^= px;
      x = next;
    }
    return std::pair{r, par};
  };
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      for (bool flip : {false, true}) {
        if (!linked(v[i], v[j], flip)) continue;
        auto [ri, pi] = find(i);
        auto [rj, pj] = find(j);
        if (ri != rj) {
          parent[rj] = ri;
          parity[rj] = static_cast<std::uint8_t>(pi ^ pj ^ (flip ? 1 : 0));
        }
        break;
      }

  std::vector<std::vector<std::size_t>> groups(n);
  std::vector<std::uint8_t> flip_of(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto [r, par] = find(i);
    groups[r].push_back(i);
    flip_of[i] = par;
  }

  std::vector<Cluster> clusters;
  for (const auto& g : groups) {
    if (g.size() < cfg.min_cluster_size) continue;
    std::vector<MatchPair> oriented;
    oriented.reserve(g.size());
    for (std::size_t i : g) {
      MatchPair p = pairs[i];
      if (flip_of[i]) std::swap(p.a, p.b);
      oriented.push_back(p);
    }
    AffineEstimate est;
    try {
      est = estimate_affine(oriented, kps, cfg.ransac);
    } catch (const EstimationError&) {
      continue;
    }
    if (est.inliers.size() < cfg.min_cluster_size) continue;
    Cluster c;
    for (std::size_t i : est.inliers) c.pairs.push_back(oriented[i]);
    c.affine = est.affine;
    c.inlier_count = est.inliers.size();
    clusters.push_back(std::move(c));
  }
  std::stable_sort(clusters.begin(), clusters.end(),
                   [](const Cluster& a, const Cluster& b) { return a.pairs.size() > b.pairs.size(); });
  return clusters;
}

/// Zero-mean normalized cross-correlation of two equally sized samples. Two flat samples
/// score 1 when their means agree within 0.02, otherwise 0; one flat sample scores 0.
inline double zncc(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) throw ArgumentError("zncc needs equal non-empty samples");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  constexpr double flat = 1e-8;
  const bool fa = saa / n < flat, fb = sbb / n < flat;
  if (fa && fb) return std::abs(ma - mb) < 0.02 ? 1.0 : 0.0;
  if (fa || fb) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

/// Patch similarity for one oriented pair: a square patch around the source and its image
/// under the cluster's linear part around the destination.
inline double pair_zncc(const GrayImage& img, const Keypoint& src, const Keypoint& dst, const Affine& A,
                        int patch_size) {
  std::vector<double> pa, pb;
  pa.reserve(static_cast<std::size_t>(patch_size) * patch_size);
  pb.reserve(pa.capacity());
  const double half = 0.5 * (patch_size - 1);
  for (int j = 0; j < patch_size; ++j)
    for (int i = 0; i < patch_size; ++i) {
      const double ox = i - half, oy = j - half;
      const Point2 d = A.apply_linear(ox, oy);
      pa.push_back(sample_bilinear_clamped(img.field(), src.x + ox, src.y + oy, 0.0));
      pb.push_back(sample_bilinear_clamped(img.field(), dst.x + d.x, dst.y + d.y, 0.0));
    }
  return zncc(pa, pb);
}

inline std::vector<Cluster> filter_content(std::span<const Cluster> clusters, const GrayImage& img,
                                           std::span<const Keypoint> keypoints,
                                           const ContentFilterConfig& cfg = {}) {
  std::vector<Cluster> out;
  for (const auto& c : clusters) {
    Cluster kept;
    kept.affine = c.affine;
    for (const auto& p : c.pairs)
      if (pair_zncc(img, keypoints[p.a], keypoints[p.b], c.affine, cfg.patch_size) >= cfg.min_zncc)
        kept.pairs.push_back(p);
    if (kept.pairs.size() < cfg.min_cluster_size) continue;
    kept.inlier_count = std::min(c.inlier_count, kept.pairs.size());
    out.push_back(std::move(kept));
  }
  return out;
}

namespace detail {

// Per-pixel SSIM between x and y with a 7x7 Gaussian window (sigma 1.5).
inline Field ssim_field(const Field& x, const Field& y) {
  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const auto k = gaussian_kernel_1d(1.5, 2.0);
  const std::span<const double> ks(k);
  auto blur = [&](const Field& f) { return convolve_separable(f, ks, ks, Border::Replicate); };
  Field xx(x.width(), x.height()), yy(x.width(), x.height()), xy(x.width(), x.height());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double a = x.values()[i], b = y.values()[i];
    xx.values()[i] = a * a;
    yy.values()[i] = b * b;
    xy.values()[i] = a * b;
  }
  const Field mx = blur(x), my = blur(y), sxx = blur(xx), syy = blur(yy), sxy = blur(xy);
  Field out(x.width(), x.height());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double ux = mx.values()[i], uy = my.values()[i];
    const double vx = sxx.values()[i] - ux * ux, vy = syy.values()[i] - uy * uy;
    const double cxy = sxy.values()[i] - ux * uy;
    out.values()[i] = ((2 * ux * uy + c1) * (2 * cxy + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
  }
  return out;
}

// SSIM of img against img pulled back through T; 0 where T maps outside the frame.
inline Field warped_ssim(const GrayImage& img, const Affine& T) {
  const int w = img.width(), h = img.height();
  Field warped(w, h);
  BinaryMask valid(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const Point2 p = T.apply(x, y);
      if (p.x < -0.5 || p.y < -0.5 || p.x > w - 0.5 || p.y > h - 0.5) continue;
      warped(x, y) = sample_bilinear_clamped(img.field(), p.x, p.y, 0.0);
      valid(x, y) = 1;
    }
  Field rho = ssim_field(img.field(), warped);
  for (std::size_t i = 0; i < rho.size(); ++i)
    if (!valid.values()[i]) rho.values()[i] = 0.0;
  return rho;
}

}  // namespace detail

/// SSIM correlation map between the image and its warp under `affine`, taken in both
/// directions and combined by pointwise max. Values lie in [-1, 1].
inline Field ssim_map(const GrayImage& img, const Affine& affine) {
  if (!affine.finite()) throw EstimationError("affine is not finite");
  const Affine inv = affine.inverse();
  Field fwd = detail::warped_ssim(img, affine);
  const Field bwd = detail::warped_ssim(img, inv);
  for (std::size_t i = 0; i < fwd.size(); ++i) fwd.values()[i] = std::max(fwd.values()[i], bwd.values()[i]);
  return fwd;
}

/// Disk membership of pixel (x, y) for a keypoint: inside iff the squared distance is at
/// most (sigma * multiplier)^2.
inline bool in_roi_disk(const Keypoint& kp, double multiplier, double x, double y) {
  const double r = kp.sigma * multiplier;
  return (x - kp.x) * (x - kp.x) + (y - kp.y) * (y - kp.y) <= r * r;
}

inline double normalize_roi(double raw, double t_nor) {
  if (!(t_nor > 0.0)) throw ArgumentError("T_nor must be > 0");
  return std::clamp(raw / t_nor, 0.0, 1.0);
}

/// Sum of keypoint disks, dilated, smoothed with the saliency kernel and normalized.
inline RoiHeatMap roi_heat_map(std::span<const Keypoint> keypoints, int width, int height,
                               const RoiConfig& cfg = {}) {
  if (!(cfg.t_nor > 0.0)) throw ArgumentError("T_nor must be > 0");
  if (!(cfg.multiplier >= 0.0) || !(cfg.dilation >= 0.0)) throw ArgumentError("negative ROI parameter");
  RoiHeatMap roi{Field(width, height), Field(width, height)};
  if (keypoints.empty()) return roi;
  Field count(width, height);
  for (const auto& kp : keypoints) {
    const double r = kp.sigma * cfg.multiplier;
    const int x0 = std::max(0, static_cast<int>(std::ceil(kp.x - r)));
    const int x1 = std::min(width - 1, static_cast<int>(std::floor(kp.x + r)));
    const int y0 = std::max(0, static_cast<int>(std::ceil(kp.y - r)));
    const int y1 = std::min(height - 1, static_cast<int>(std::floor(kp.y + r)));
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x)
        if (in_roi_disk(kp, cfg.multiplier, x, y)) count(x, y) += 1.0;
  }
  roi.raw = saliency_heat(dilate_max(count, cfg.dilation), cfg.t_sigma);
  for (std::size_t i = 0; i < roi.raw.size(); ++i)
    roi.normalized.values()[i] = normalize_roi(roi.raw.values()[i], cfg.t_nor);
  return roi;
}

/// Correlation suppressed by the ROI weight; a pixel is kept when this reaches T_cor.
inline double fused_correlation(double rho, double roi_weight) { return rho * roi_weight; }

/// Per-cluster correlation (SSIM, ROI or their product), thresholded at T_cor, united over
/// clusters, stripped of tiny components and closed. `fused_out`, when given, receives the
/// pointwise maximum of the per-cluster correlation fields.
inline BinaryMask fuse_and_localize(std::span<const Cluster> clusters, const GrayImage& img,
                                    const RoiHeatMap& roi, const FusionConfig& cfg = {},
                                    Field* fused_out = nullptr) {
  const int w = img.width(), h = img.height();
  BinaryMask mask(w, h);
  Field best(w, h, clusters.empty() ? 0.0 : -1.0);
  for (const auto& c : clusters) {
    Field rho;
    try {
      rho = cfg.mode == FusionMode::RoiOnly ? roi.normalized : ssim_map(img, c.affine);
    } catch (const EstimationError&) {
      continue;
    }
    if (cfg.mode == FusionMode::Fusion)
      for (std::size_t i = 0; i < rho.size(); ++i)
        rho.values()[i] = fused_correlation(rho.values()[i], roi.normalized.values()[i]);
    for (std::size_t i = 0; i < rho.size(); ++i) {
      best.values()[i] = std::max(best.values()[i], rho.values()[i]);
      if (rho.values()[i] >= cfg.t_cor) mask.values()[i] = 1;
    }
  }
  if (fused_out) *fused_out = std::move(best);
  const auto min_area = static_cast<std::size_t>(std::ceil(cfg.min_component_fraction * w * h));
  mask = remove_small_components(mask, min_area);
  if (cfg.closing_radius > 0.0) mask = close(mask, cfg.closing_radius);
  return mask;
}

}  // namespace cmfd
