#pragma once

#include <cstddef>

#include "cmfd/errors.hpp"
#include "cmfd/image.hpp"

namespace cmfd {

/// Pixel-level detection scores. Ratios with an empty denominator are 0.
struct Score {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;

  /// Share of the frame flagged although not forged.
  double false_positive_area() const {
    const std::size_t n = tp + fp + fn + tn;
    return n ? static_cast<double>(fp) / n : 0.0;
  }
};

inline double f1_score(double precision, double recall) {
  return precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

/// Nonzero samples count as positive in both masks.
inline Score score(const BinaryMask& pred, const BinaryMask& truth) {
  if (!pred.same_shape(truth)) throw ArgumentError("prediction and truth differ in size");
  Score s;
  auto p = pred.values();
  auto t = truth.values();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const bool a = p[i] != 0, b = t[i] != 0;
    if (a && b) ++s.tp;
    else if (a) ++s.fp;
    else if (b) ++s.fn;
    else ++s.tn;
  }
  if (s.tp + s.fp) s.precision = static_cast<double>(s.tp) / (s.tp + s.fp);
  if (s.tp + s.fn) s.recall = static_cast<double>(s.tp) / (s.tp + s.fn);
  s.f1 = f1_score(s.precision, s.recall);
  return s;
}

}  // namespace cmfd
