#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstring>
#include <limits>
#include <numeric>
#include <optional>
#include <queue>
#include <span>
#include <vector>

#include "cmfd/errors.hpp"

namespace cmfd {

/// Row-major set of equal-length real feature vectors.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;
  explicit FeatureMatrix(std::size_t dims) : dims_(dims) {}
  FeatureMatrix(std::size_t dims, std::vector<double> data) : dims_(dims), data_(std::move(data)) {
    if (dims_ == 0 || data_.size() % dims_ != 0) throw ArgumentError("feature data length mismatch");
  }

  void push_back(std::span<const double> row) {
    if (dims_ == 0) dims_ = row.size();
    if (row.size() != dims_) throw ArgumentError("feature dimension mismatch");
    data_.insert(data_.end(), row.begin(), row.end());
  }

  std::size_t dims() const noexcept { return dims_; }
  std::size_t rows() const noexcept { return dims_ ? data_.size() / dims_ : 0; }
  std::span<const double> row(std::size_t i) const noexcept { return {data_.data() + i * dims_, dims_}; }
  std::span<double> row(std::size_t i) noexcept { return {data_.data() + i * dims_, dims_}; }

 private:
  std::size_t dims_ = 0;
  std::vector<double> data_;
};

struct Neighbor {
  std::size_t index = 0;
  double distance = 0.0;
};

namespace detail {

#if defined(__AVX512F__)
inline constexpr std::size_t kLanes = 16;
#else
inline constexpr std::size_t kLanes = 8;
#endif
typedef float f32xN __attribute__((vector_size(kLanes * sizeof(float))));

inline double squared_distance(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

struct Candidate {
  double d2;
  std::size_t index;
  // Max-heap on (distance, index): the worst candidate sits on top.
  bool operator<(const Candidate& o) const { return d2 < o.d2 || (d2 == o.d2 && index < o.index); }
};

class CandidateHeap {
 public:
  explicit CandidateHeap(std::size_t k) : k_(k) { heap_.reserve(k + 1); }
  bool full() const { return heap_.size() >= k_; }
  double worst() const { return heap_.front().d2; }
  void offer(double d2, std::size_t index) {
    Candidate c{d2, index};
    if (!full()) {
      heap_.push_back(c);
      std::push_heap(heap_.begin(), heap_.end());
    } else if (c < heap_.front()) {
      std::pop_heap(heap_.begin(), heap_.end());
      heap_.back() = c;
      std::push_heap(heap_.begin(), heap_.end());
    }
  }
  std::vector<Neighbor> sorted() {
    std::sort_heap(heap_.begin(), heap_.end());
    std::vector<Neighbor> out;
    out.reserve(heap_.size());
    for (const auto& c : heap_) out.push_back({c.index, std::sqrt(c.d2)});
    return out;
  }

 private:
  std::size_t k_;
  std::vector<Candidate> heap_;
};

}  // namespace detail

/// Exact k-nearest-neighbour search under Euclidean distance. Results are ordered by
/// (distance, index), so ties go to the lower index. Small sets are scanned directly; larger
/// ones use a kd-tree with per-node bounding boxes.
class NeighborIndex {
 public:
  static constexpr std::size_t kBruteForceBelow = 1000;

  NeighborIndex() = default;
  explicit NeighborIndex(FeatureMatrix points, std::size_t leaf_size = 12)
      : points_(std::move(points)), leaf_size_(std::max<std::size_t>(leaf_size, 1)) {
    if (points_.rows() >= kBruteForceBelow) build();
  }

  std::size_t size() const noexcept { return points_.rows(); }
  std::size_t dims() const noexcept { return points_.dims(); }
  const FeatureMatrix& points() const noexcept { return points_; }

  /// k nearest points to `q`, skipping `exclude` when given.
  std::vector<Neighbor> query(std::span<const double> q, std::size_t k,
                              std::optional<std::size_t> exclude = std::nullopt) const {
    if (q.size() != dims()) throw ArgumentError("query dimension mismatch");
    detail::CandidateHeap heap(k);
    if (k == 0) return {};
    if (nodes_.empty()) {
      for (std::size_t i = 0; i < size(); ++i) {
        if (exclude && *exclude == i) continue;
        heap.offer(detail::squared_distance(q.data(), points_.row(i).data(), dims()), i);
      }
    } else {
      search(0, q.data(), heap, exclude);
    }
    return heap.sorted();
  }

 private:
  struct Node {
    std::size_t begin = 0, end = 0;  // range in order_
    int left = -1, right = -1;
    std::size_t box = 0;  // offset into boxes_ (lo then hi)
  };

  void build() {
    order_.resize(size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    nodes_.reserve(2 * size() / leaf_size_ + 2);
    build_node(0, size());
    ordered_.reserve(size() * dims());
    for (std::size_t i : order_) {
      auto r = points_.row(i);
      ordered_.insert(ordered_.end(), r.begin(), r.end());
    }
  }

  int build_node(std::size_t begin, std::size_t end) {
    const std::size_t d = dims();
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back({begin, end, -1, -1, boxes_.size()});
    boxes_.resize(boxes_.size() + 2 * d);
    double* lo = boxes_.data() + nodes_[id].box;
    double* hi = lo + d;
    std::fill(lo, lo + d, std::numeric_limits<double>::infinity());
    std::fill(hi, hi + d, -std::numeric_limits<double>::infinity());
    for (std::size_t i = begin; i < end; ++i) {
      auto r = points_.row(order_[i]);
      for (std::size_t j = 0; j < d; ++j) {
        lo[j] = std::min(lo[j], r[j]);
        hi[j] = std::max(hi[j], r[j]);
      }
    }
    if (end - begin <= leaf_size_) return id;
    std::size_t split = 0;
    double spread = -1.0;
    for (std::size_t j = 0; j < d; ++j)
      if (hi[j] - lo[j] > spread) {
        spread = hi[j] - lo[j];
        split = j;
      }
    if (spread <= 0.0) return id;  // all points identical
    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                     order_.begin() + static_cast<std::ptrdiff_t>(mid),
                     order_.begin() + static_cast<std::ptrdiff_t>(end),
                     [&](std::size_t a, std::size_t b) {
                       return points_.row(a)[split] < points_.row(b)[split];
                     });
    const int left = build_node(begin, mid);
    const int right = build_node(mid, end);
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
  }

  double box_distance(const Node& n, const double* q) const {
    const std::size_t d = dims();
    const double* lo = boxes_.data() + n.box;
    const double* hi = lo + d;
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double e = q[j] < lo[j] ? lo[j] - q[j] : (q[j] > hi[j] ? q[j] - hi[j] : 0.0);
      s += e * e;
    }
    return s;
  }

  void search(int id, const double* q, detail::CandidateHeap& heap,
              const std::optional<std::size_t>& exclude) const {
    const Node& n = nodes_[id];
    if (n.left < 0) {
      for (std::size_t i = n.begin; i < n.end; ++i) {
        const std::size_t idx = order_[i];
        if (exclude && *exclude == idx) continue;
        heap.offer(detail::squared_distance(q, ordered_.data() + i * dims(), dims()), idx);
      }
      return;
    }
    const double dl = box_distance(nodes_[n.left], q);
    const double dr = box_distance(nodes_[n.right], q);
    const int first = dl <= dr ? n.left : n.right;
    const int second = dl <= dr ? n.right : n.left;
    const double d_first = std::min(dl, dr);
    const double d_second = std::max(dl, dr);
    // Boxes at exactly the current worst distance are still visited so ties resolve by index.
    if (!heap.full() || d_first <= heap.worst()) search(first, q, heap, exclude);
    if (!heap.full() || d_second <= heap.worst()) search(second, q, heap, exclude);
  }

  FeatureMatrix points_;
  std::size_t leaf_size_ = 12;
  std::vector<Node> nodes_;
  std::vector<double> boxes_;
  std::vector<std::size_t> order_;
  std::vector<double> ordered_;
};

/// Exact k nearest neighbours of every row among the other rows, each list ordered by
/// (distance, index). Equivalent to a brute-force scan.
///
/// Distances are screened in single precision with a register-blocked dot-product kernel.
/// Every candidate that could belong to the exact answer is then re-ranked in double
/// precision; a query whose screen is inconclusive falls back to a direct scan.
inline std::vector<std::vector<Neighbor>> all_knn(const FeatureMatrix& f, std::size_t k) {
  const std::size_t n = f.rows(), d = f.dims();
  if (k >= n) throw ArgumentError("neighbour count must be below the set size");
  std::vector<std::vector<Neighbor>> out(n);
  if (k == 0) return out;

  constexpr std::size_t L = detail::kLanes;
  constexpr std::size_t P = 2 * L;  // points per chunk
  constexpr std::size_t Q = 6;      // queries per block
  const std::size_t n_chunks = (n + P - 1) / P;
  const std::size_t n_qry = (n + Q - 1) / Q * Q;

  // Points transposed per chunk: pt[(chunk * d + dim) * P + lane]; queries likewise per block.
  // Padding lanes get an infinite norm so they never screen in.
  std::vector<float> pt(n_chunks * P * d, 0.0f), qt(n_qry * d, 0.0f);
  std::vector<float> norms(n_chunks * P, std::numeric_limits<float>::infinity());
  double max_norm = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    double sq = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      const double v = f.row(j)[c];
      pt[((j / P) * d + c) * P + j % P] = static_cast<float>(v);
      qt[((j / Q) * d + c) * Q + j % Q] = static_cast<float>(v);
      sq += v * v;
    }
    norms[j] = static_cast<float>(sq);
    max_norm = std::max(max_norm, sq);
  }
  // Bound on |screened - exact| squared distance: rounding of the inputs, the d-term dot
  // product and the final sum, each within a few units of 2^-24 relative to the norms,
  // with a 4x margin.
  const double unit = std::ldexp(1.0, -24);
  const double slack = 4.0 * (2.0 * static_cast<double>(d) + 12.0) * unit * 2.0 * (max_norm + 1e-30);

  const std::size_t keep = k + 16;
  struct Screened {
    float d2;
    std::size_t index;
  };
  constexpr std::size_t kQueryBlock = 10 * Q;
  std::vector<std::vector<Screened>> best(kQueryBlock);
  std::vector<float> worst(kQueryBlock);

  for (std::size_t q0 = 0; q0 < n_qry; q0 += kQueryBlock) {
    const std::size_t q1 = std::min(n_qry, q0 + kQueryBlock);
    for (std::size_t i = q0; i < q1; ++i) {
      best[i - q0].clear();
      worst[i - q0] = std::numeric_limits<float>::infinity();
    }
    for (std::size_t ch = 0; ch < n_chunks; ++ch) {
      const std::size_t p0 = ch * P;
      const float* pc = pt.data() + ch * d * P;
      const float* pn = norms.data() + p0;
      for (std::size_t qb = q0; qb < q1; qb += Q) {
        const float* qc = qt.data() + (qb / Q) * d * Q;
        detail::f32xN acc[Q][2] = {};
        for (std::size_t c = 0; c < d; ++c) {
          detail::f32xN r0, r1;
          std::memcpy(&r0, pc + c * P, sizeof r0);
          std::memcpy(&r1, pc + c * P + L, sizeof r1);
          for (std::size_t a = 0; a < Q; ++a) {
            const float qv = qc[c * Q + a];
            acc[a][0] += qv * r0;
            acc[a][1] += qv * r1;
          }
        }
        for (std::size_t a = 0; a < Q; ++a) {
          const std::size_t i = qb + a;
          if (i >= n) break;
          const float qn = norms[i];
          detail::f32xN v[2];
          for (std::size_t h = 0; h < 2; ++h) {
            detail::f32xN nv;
            std::memcpy(&nv, pn + L * h, sizeof nv);
            v[h] = qn + nv - 2.0f * acc[a][h];
          }
          const detail::f32xN m = v[0] < v[1] ? v[0] : v[1];
          float& w = worst[i - q0];
          const auto below = m < w;  // lanes of all ones where a candidate beats the worst kept
          const decltype(below) none = {};
          if (std::memcmp(&below, &none, sizeof below) == 0) continue;
          float d2[P];
          std::memcpy(d2, v, sizeof d2);
          auto& list = best[i - q0];
          for (std::size_t l = 0; l < P; ++l) {
            if (!(d2[l] < w) || p0 + l == i) continue;
            Screened cand{d2[l], p0 + l};
            auto at = std::upper_bound(list.begin(), list.end(), cand,
                                       [](const Screened& x, const Screened& z) { return x.d2 < z.d2; });
            list.insert(at, cand);
            if (list.size() > keep) list.pop_back();
            if (list.size() == keep) w = list.back().d2;
          }
        }
      }
    }
    for (std::size_t i = q0; i < std::min(q1, n); ++i) {
      const auto& list = best[i - q0];
      const double limit = static_cast<double>(list[k - 1].d2) + 2.0 * slack;
      detail::CandidateHeap heap(k);
      const auto q = f.row(i);
      if (list.size() == keep && list.back().d2 <= limit) {
        for (std::size_t j = 0; j < n; ++j)
          if (j != i) heap.offer(detail::squared_distance(q.data(), f.row(j).data(), d), j);
      } else {
        for (const auto& c : list)
          if (c.d2 <= limit) heap.offer(detail::squared_distance(q.data(), f.row(c.index).data(), d), c.index);
      }
      out[i] = heap.sorted();
    }
  }
  return out;
}

}  // namespace cmfd
