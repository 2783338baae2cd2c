#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "cmfd/convolution.hpp"
#include "cmfd/errors.hpp"
#include "cmfd/image.hpp"
#include "cmfd/keypoints.hpp"
#include "cmfd/matching.hpp"
#include "cmfd/nn_index.hpp"

namespace cmfd {

/// A keypoint with its word-level magnitude feature. `source` is the index of the keypoint
/// in the detector output, carried so phrase matches can be reported in that index space.
struct VisualWord {
  Keypoint keypoint;
  std::vector<double> feature;
  std::size_t source = 0;
};

/// A central word and the indices (into the word set) of its K nearest words in the plane.
struct VisualPhrase {
  std::size_t central = 0;
  std::vector<std::size_t> sides;
};

struct SaliencyMap {
  Field edge;
  Field heat;
  Field weight;
};

/// One phrase per word; sides are the K spatially nearest other words, ascending by
/// distance with ties broken by lower index.
inline std::vector<VisualPhrase> build_phrases(std::span<const VisualWord> words, std::size_t k) {
  if (k == 0) throw ArgumentError("side-word count must be >= 1");
  if (words.size() <= k) throw ArgumentError("need more than K words to build phrases");
  FeatureMatrix positions(2);
  for (const auto& w : words) positions.push_back(std::vector<double>{w.keypoint.x, w.keypoint.y});
  const NeighborIndex index(positions);
  std::vector<VisualPhrase> phrases(words.size());
  for (std::size_t i = 0; i < words.size(); ++i) {
    phrases[i].central = i;
    for (const auto& nb : index.query(positions.row(i), k, i)) phrases[i].sides.push_back(nb.index);
  }
  return phrases;
}

/// Central feature plus the per-dimension maximum over the side features.
inline std::vector<double> pool_phrase(std::span<const double> central,
                                       std::span<const std::span<const double>> sides) {
  std::vector<double> out(central.begin(), central.end());
  if (sides.empty()) return out;
  for (const auto& s : sides)
    if (s.size() != central.size()) throw ArgumentError("side feature dimension mismatch");
  for (std::size_t j = 0; j < out.size(); ++j) {
    double m = sides[0][j];
    for (const auto& s : sides.subspan(1)) m = std::max(m, s[j]);
    out[j] += m;
  }
  return out;
}

inline std::vector<double> pool_phrase(const VisualPhrase& phrase, std::span<const VisualWord> words) {
  std::vector<std::span<const double>> sides;
  sides.reserve(phrase.sides.size());
  for (std::size_t s : phrase.sides) sides.emplace_back(words[s].feature);
  return pool_phrase(words[phrase.central].feature, sides);
}

/// Gradient-magnitude edge response in [0,1]: Gaussian smoothing (sigma 1.5), Sobel
/// gradients, magnitude divided by its 99th percentile and clamped.
inline Field edge_map(const GrayImage& img) {
  const Field smooth = gaussian_blur(img.field(), 1.5, Border::Replicate);
  const std::vector<double> tri{1.0, 2.0, 1.0};
  // convolve_separable flips its kernels, so the derivative taps are written reversed.
  const std::vector<double> ddx{1.0, 0.0, -1.0};
  const Field gx = convolve_separable(smooth, std::span<const double>(ddx),
                                      std::span<const double>(tri), Border::Replicate);
  const Field gy = convolve_separable(smooth, std::span<const double>(tri),
                                      std::span<const double>(ddx), Border::Replicate);
  Field mag(img.width(), img.height());
  auto m = mag.values();
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = std::hypot(gx.values()[i], gy.values()[i]);

  std::vector<double> sorted(m.begin(), m.end());
  const std::size_t at = std::min(sorted.size() - 1,
                                  static_cast<std::size_t>(std::ceil(0.99 * sorted.size())) - 1);
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(at), sorted.end());
  double scale = sorted[at];
  if (!(scale > 1e-12)) scale = *std::max_element(m.begin(), m.end());
  if (!(scale > 1e-12)) {
    std::fill(m.begin(), m.end(), 0.0);
    return mag;
  }
  for (double& v : m) v = std::clamp(v / scale, 0.0, 1.0);
  return mag;
}

/// Truncation radius for the saliency kernel: three standard deviations of exp(-T ||d||^2).
inline int saliency_radius(double t_sigma) {
  if (!(t_sigma > 0.0)) throw ArgumentError("T_sigma must be > 0");
  return static_cast<int>(std::ceil(3.0 / std::sqrt(2.0 * t_sigma)));
}

/// (2L+1)^2 kernel exp(-T ||d||^2), unnormalized.
inline Field saliency_kernel(double t_sigma) {
  const int r = saliency_radius(t_sigma);
  Field k(2 * r + 1, 2 * r + 1);
  for (int y = -r; y <= r; ++y)
    for (int x = -r; x <= r; ++x) k(x + r, y + r) = std::exp(-t_sigma * (x * x + y * y));
  return k;
}

inline Field saliency_heat(const Field& edge, double t_sigma) {
  Field heat = convolve_fft(edge, saliency_kernel(t_sigma));
  for (double& v : heat.values()) v = std::max(v, 0.0);  // FFT round-off
  return heat;
}

/// 1 + min-max normalized heat; constant heat gives all ones.
inline Field weight_field(const Field& heat) {
  Field w(heat.width(), heat.height(), 1.0);
  if (heat.empty()) return w;
  const auto [lo, hi] = std::minmax_element(heat.values().begin(), heat.values().end());
  const double span = *hi - *lo;
  if (!(span > 1e-12 * std::max(1.0, std::abs(*hi)))) return w;
  auto out = w.values();
  auto in = heat.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 + (in[i] - *lo) / span;
  return w;
}

inline SaliencyMap saliency_map(const GrayImage& img, double t_sigma) {
  SaliencyMap s;
  s.edge = edge_map(img);
  s.heat = saliency_heat(s.edge, t_sigma);
  s.weight = weight_field(s.heat);
  return s;
}

/// Scales each pooled feature by the weight at the keypoint's nearest pixel.
inline std::vector<std::vector<double>> weight_features(std::span<const std::vector<double>> pooled,
                                                        std::span<const Keypoint> keypoints,
                                                        const Field& weight) {
  if (pooled.size() != keypoints.size()) throw ArgumentError("features and keypoints differ in count");
  std::vector<std::vector<double>> out;
  out.reserve(pooled.size());
  for (std::size_t i = 0; i < pooled.size(); ++i) {
    const int x = static_cast<int>(std::lround(keypoints[i].x));
    const int y = static_cast<int>(std::lround(keypoints[i].y));
    if (!weight.contains(x, y)) throw ArgumentError("keypoint outside the saliency field");
    const double w = weight(x, y);
    auto& f = out.emplace_back(pooled[i]);
    for (double& v : f) v *= w;
  }
  return out;
}

inline std::vector<std::vector<double>> weight_features(std::span<const std::vector<double>> pooled,
                                                        std::span<const Keypoint> keypoints,
                                                        const SaliencyMap& saliency) {
  return weight_features(pooled, keypoints, saliency.weight);
}

/// Direct NN matching of phrase features (no phase verification). Indices refer to the
/// inputs, i.e. to the word set.
inline std::vector<MatchPair> match_phrase_level(std::span<const std::vector<double>> features,
                                                 std::span<const Keypoint> keypoints, MatchConfig cfg) {
  if (features.empty()) return {};
  FeatureMatrix m(features.front().size());
  for (const auto& f : features) m.push_back(f);
  cfg.phase_verify = false;
  return match_features(m, keypoints, cfg);
}

/// Word set D: the distinct keypoints taking part in at least one word-level match, in
/// ascending keypoint order, each carrying its row of the word-level matching features.
inline std::vector<VisualWord> matched_words(std::span<const MatchPair> word_pairs,
                                             std::span<const Descriptor> descriptors,
                                             const FeatureMatrix& features) {
  if (features.rows() != descriptors.size()) throw ArgumentError("features and descriptors differ in count");
  std::vector<std::size_t> ids;
  ids.reserve(2 * word_pairs.size());
  for (const auto& p : word_pairs) {
    ids.push_back(p.a);
    ids.push_back(p.b);
  }
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  std::vector<VisualWord> words;
  words.reserve(ids.size());
  for (std::size_t id : ids) {
    const auto row = features.row(id);
    words.push_back({descriptors[id].keypoint, std::vector<double>(row.begin(), row.end()), id});
  }
  return words;
}

}  // namespace cmfd
