#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cmfd/descriptor.hpp"
#include "cmfd/errors.hpp"
#include "cmfd/keypoints.hpp"
#include "cmfd/nn_index.hpp"

namespace cmfd {

enum class NnStrategy { TwoNN, G2NN, RG2NN, I2NN };

inline std::string_view to_string(NnStrategy s) {
  switch (s) {
    case NnStrategy::TwoNN: return "2nn";
    case NnStrategy::G2NN: return "g2nn";
    case NnStrategy::RG2NN: return "rg2nn";
    case NnStrategy::I2NN: return "i2nn";
  }
  return "?";
}

inline NnStrategy parse_strategy(std::string_view name) {
  for (auto s : {NnStrategy::TwoNN, NnStrategy::G2NN, NnStrategy::RG2NN, NnStrategy::I2NN})
    if (name == to_string(s)) return s;
  throw ArgumentError("unknown NN strategy: " + std::string(name));
}

/// Neighbours of one query, ascending by feature distance; never contains the query.
struct NeighborSet {
  std::size_t query = 0;
  std::vector<std::size_t> neighbors;
  std::vector<double> distances;

  std::size_t size() const noexcept { return neighbors.size(); }
};

/// A pair of keypoint indices judged duplicated. Canonical pairs have a < b; pairs held by a
/// Cluster are instead oriented source -> destination.
struct MatchPair {
  std::size_t a = 0;
  std::size_t b = 0;
  double distance = 0.0;

  friend bool operator==(const MatchPair&, const MatchPair&) = default;
};

struct MatchConfig {
  double ratio_threshold = 0.6;     // relative feature-distance threshold
  double absolute_threshold = 0.1;  // absolute threshold on the second distance (I2NN)
  double spatial_threshold = 50.0;  // minimum keypoint separation in pixels (I2NN)
  NnStrategy strategy = NnStrategy::I2NN;
  int n_neighbors = 10;  // neighbourhood size for G2NN / RG2NN
  bool phase_verify = true;
  double phase_consistency_min = 0.7;
  bool standardize = true;  // per-image feature standardization before NN search

  void validate() const {
    if (!(ratio_threshold > 0.0 && ratio_threshold < 1.0))
      throw ArgumentError("ratio threshold must lie in (0,1)");
    if (!(absolute_threshold > 0.0)) throw ArgumentError("absolute threshold must be > 0");
    if (!(spatial_threshold >= 0.0)) throw ArgumentError("spatial threshold must be >= 0");
    if (n_neighbors < 2) throw ArgumentError("n_neighbors must be >= 2");
  }
};

/// Exact n nearest neighbours of point `query` within the indexed set.
inline NeighborSet knn_search(const NeighborIndex& index, std::size_t query, std::size_t n) {
  if (query >= index.size()) throw ArgumentError("query index out of range");
  if (n >= index.size()) throw ArgumentError("neighbour count must be below the set size");
  NeighborSet ns;
  ns.query = query;
  for (const auto& nb : index.query(index.points().row(query), n, query)) {
    ns.neighbors.push_back(nb.index);
    ns.distances.push_back(nb.distance);
  }
  return ns;
}

inline NeighborSet knn_search(const FeatureMatrix& features, std::size_t query, std::size_t n) {
  return knn_search(NeighborIndex(features), query, n);
}

namespace detail {

// d_a / d_b with 0/0 read as 1 (indistinguishable neighbours).
inline double distance_ratio(double da, double db) {
  if (db > 0.0) return da / db;
  return da > 0.0 ? std::numeric_limits<double>::infinity() : 1.0;
}

inline MatchPair canonical_pair(std::size_t i, std::size_t j, double d) {
  return i < j ? MatchPair{i, j, d} : MatchPair{j, i, d};
}

inline std::vector<MatchPair> first_k(const NeighborSet& ns, std::size_t k) {
  std::vector<MatchPair> out;
  for (std::size_t i = 0; i < k && i < ns.size(); ++i)
    out.push_back(canonical_pair(ns.query, ns.neighbors[i], ns.distances[i]));
  return out;
}

inline double spatial_distance(const Keypoint& a, const Keypoint& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

}  // namespace detail

/// Lowe's ratio test: the first neighbour matches iff d1/d2 < threshold.
inline std::vector<MatchPair> test_2nn(const NeighborSet& ns, const MatchConfig& cfg) {
  if (ns.size() < 2) return {};
  return detail::distance_ratio(ns.distances[0], ns.distances[1]) < cfg.ratio_threshold
             ? detail::first_k(ns, 1)
             : std::vector<MatchPair>{};
}

/// Generalized 2NN: walk i = 1, 2, ... while d_i/d_{i+1} < threshold and match every
/// neighbour passed before the first failing ratio (none if the first ratio fails).
inline std::vector<MatchPair> test_g2nn(const NeighborSet& ns, const MatchConfig& cfg) {
  std::size_t count = 0;
  for (std::size_t i = 0; i + 1 < ns.size(); ++i) {
    if (detail::distance_ratio(ns.distances[i], ns.distances[i + 1]) >= cfg.ratio_threshold) break;
    count = i + 1;
  }
  return detail::first_k(ns, count);
}

/// Reversed G2NN: walk k = n, n-1, ..., 2 and at the first d_{k-1}/d_k < threshold match
/// neighbours 1..k-1.
inline std::vector<MatchPair> test_rg2nn(const NeighborSet& ns, const MatchConfig& cfg) {
  for (std::size_t k = ns.size(); k >= 2; --k)
    if (detail::distance_ratio(ns.distances[k - 2], ns.distances[k - 1]) < cfg.ratio_threshold)
      return detail::first_k(ns, k - 1);
  return {};
}

/// Improved 2NN. Single match when d1/d2 <= ratio threshold and the first neighbour is at
/// least `spatial_threshold` pixels away; otherwise a double match when d2 <= absolute
/// threshold and both neighbours are far enough. The single branch is checked first.
inline std::vector<MatchPair> test_i2nn(const NeighborSet& ns, std::span<const Keypoint> keypoints,
                                        const MatchConfig& cfg) {
  if (ns.size() < 2) return {};
  const Keypoint& k0 = keypoints[ns.query];
  const double s1 = detail::spatial_distance(k0, keypoints[ns.neighbors[0]]);
  const double s2 = detail::spatial_distance(k0, keypoints[ns.neighbors[1]]);
  const double d1 = ns.distances[0];
  const double d2 = ns.distances[1];
  if (detail::distance_ratio(d1, d2) <= cfg.ratio_threshold && s1 >= cfg.spatial_threshold)
    return detail::first_k(ns, 1);
  if (d2 <= cfg.absolute_threshold && s1 >= cfg.spatial_threshold && s2 >= cfg.spatial_threshold)
    return detail::first_k(ns, 2);
  return {};
}

inline std::vector<MatchPair> apply_strategy(const NeighborSet& ns, std::span<const Keypoint> keypoints,
                                             const MatchConfig& cfg) {
  switch (cfg.strategy) {
    case NnStrategy::TwoNN: return test_2nn(ns, cfg);
    case NnStrategy::G2NN: return test_g2nn(ns, cfg);
    case NnStrategy::RG2NN: return test_rg2nn(ns, cfg);
    case NnStrategy::I2NN: return test_i2nn(ns, keypoints, cfg);
  }
  return {};
}

/// Number of neighbours the strategy inspects.
inline std::size_t strategy_neighbors(const MatchConfig& cfg) {
  return cfg.strategy == NnStrategy::G2NN || cfg.strategy == NnStrategy::RG2NN
             ? static_cast<std::size_t>(cfg.n_neighbors)
             : 2;
}

/// Keeps one copy of every (a, b), the one with the smaller distance, sorted by (a, b).
inline std::vector<MatchPair> deduplicate(std::vector<MatchPair> pairs) {
  std::sort(pairs.begin(), pairs.end(), [](const MatchPair& x, const MatchPair& y) {
    if (x.a != y.a) return x.a < y.a;
    if (x.b != y.b) return x.b < y.b;
    return x.distance < y.distance;
  });
  pairs.erase(std::unique(pairs.begin(), pairs.end(),
                          [](const MatchPair& x, const MatchPair& y) { return x.a == y.a && x.b == y.b; }),
              pairs.end());
  return pairs;
}

/// NN search plus NN testing over every feature. `accept`, when set, is a second-stage check
/// applied to each candidate pair.
inline std::vector<MatchPair> match_features(
    const FeatureMatrix& features, std::span<const Keypoint> keypoints, const MatchConfig& cfg,
    const std::function<bool(const MatchPair&)>& accept = {}) {
  cfg.validate();
  if (features.rows() != keypoints.size()) throw ArgumentError("features and keypoints differ in count");
  if (features.rows() < 3) return {};
  const std::size_t n = std::min(strategy_neighbors(cfg), features.rows() - 1);
  const auto knn = all_knn(features, n);
  std::vector<MatchPair> pairs;
  for (std::size_t q = 0; q < features.rows(); ++q) {
    NeighborSet ns;
    ns.query = q;
    for (const auto& nb : knn[q]) {
      ns.neighbors.push_back(nb.index);
      ns.distances.push_back(nb.distance);
    }
    for (const auto& p : apply_strategy(ns, keypoints, cfg))
      if (!accept || accept(p)) pairs.push_back(p);
  }
  return deduplicate(std::move(pairs));
}

/// Standardizes every column to zero mean and unit variance over the rows (columns with
/// negligible spread are zeroed). Applied per image, it removes the feature direction shared
/// by all low-detail regions, which otherwise puts unrelated regions within a few hundredths
/// of each other, and gives distances a scale independent of image contrast.
inline void standardize_features(FeatureMatrix& f) {
  const std::size_t n = f.rows(), d = f.dims();
  if (n == 0) return;
  std::vector<double> mean(d, 0.0), var(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) mean[j] += f.row(i)[j];
  for (double& m : mean) m /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) var[j] += (f.row(i)[j] - mean[j]) * (f.row(i)[j] - mean[j]);
  const double top = *std::max_element(var.begin(), var.end());
  std::vector<double> gain(d, 0.0);
  for (std::size_t j = 0; j < d; ++j)
    if (var[j] > 1e-12 * top && var[j] > 0.0) gain[j] = 1.0 / std::sqrt(var[j] / static_cast<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    auto r = f.row(i);
    for (std::size_t j = 0; j < d; ++j) r[j] = (r[j] - mean[j]) * gain[j];
  }
}

/// Matching features of a descriptor set: the magnitude vectors, standardized on request.
inline FeatureMatrix word_features(std::span<const Descriptor> descriptors, bool standardize) {
  FeatureMatrix features(descriptors.empty() ? 1 : descriptors.front().magnitudes.size());
  for (const auto& d : descriptors) features.push_back(d.magnitudes);
  if (standardize) standardize_features(features);
  return features;
}

/// Word-level matching: NN testing on moment magnitudes, then (optionally) phase verification
/// of each surviving pair. Pair indices refer to `descriptors`.
inline std::vector<MatchPair> match_word_level(std::span<const Descriptor> descriptors,
                                               const MatchConfig& cfg) {
  if (descriptors.empty()) return {};
  const FeatureMatrix features = word_features(descriptors, cfg.standardize);
  std::vector<Keypoint> keypoints;
  keypoints.reserve(descriptors.size());
  for (const auto& d : descriptors) keypoints.push_back(d.keypoint);
  std::function<bool(const MatchPair&)> accept;
  if (cfg.phase_verify)
    accept = [&](const MatchPair& p) {
      return relative_phase_signature(descriptors[p.a], descriptors[p.b]).consistency >=
             cfg.phase_consistency_min;
    };
  return match_features(features, keypoints, cfg, accept);
}

}  // namespace cmfd
