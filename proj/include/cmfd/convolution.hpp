#pragma once

#include <cmath>
#include <span>
#include <type_traits>
#include <vector>

#include <opencv2/core.hpp>

#include "cmfd/errors.hpp"
#include "cmfd/image.hpp"

namespace cmfd {

enum class Border { Zero, Replicate, Reflect101 };

namespace detail {

inline int border_index(int i, int n, Border border) {
  if (i >= 0 && i < n) return i;
  switch (border) {
    case Border::Zero: return -1;
    case Border::Replicate: return i < 0 ? 0 : n - 1;
    case Border::Reflect101:
      if (n == 1) return 0;
      while (i < 0 || i >= n) i = i < 0 ? -i : 2 * n - 2 - i;
      return i;
  }
  return -1;
}

// Float grids accumulate in float so the inner loops vectorize; everything else in double.
template <typename T>
using accumulator_t = std::conditional_t<std::is_same_v<T, float>, float, double>;

// Convolves one line with a kernel centred at kernel.size()/2.
template <typename T>
void filter_line(const T* src, std::size_t stride, int n, std::span<const accumulator_t<T>> kernel,
                 Border border, T* dst, std::vector<T>& scratch) {
  const int r = static_cast<int>(kernel.size()) / 2;
  scratch.assign(static_cast<std::size_t>(n) + 2 * r, T{});
  for (int i = -r; i < n + r; ++i) {
    int j = border_index(i, n, border);
    scratch[i + r] = j < 0 ? T{} : src[static_cast<std::size_t>(j) * stride];
  }
  const int k = static_cast<int>(kernel.size());
  thread_local std::vector<accumulator_t<T>> acc;
  acc.assign(static_cast<std::size_t>(n), 0);
  for (int t = 0; t < k; ++t) {
    const accumulator_t<T> c = kernel[k - 1 - t];
    const T* s = scratch.data() + t;
    for (int i = 0; i < n; ++i) acc[i] += c * s[i];
  }
  for (int i = 0; i < n; ++i) dst[i] = static_cast<T>(acc[i]);
}

}  // namespace detail

/// Separable convolution: rows with `kx`, then columns with `ky`. Odd-length kernels,
/// centred at size/2.
template <typename T>
Grid<T> convolve_separable(const Grid<T>& in, std::span<const double> kx,
                           std::span<const double> ky, Border border = Border::Reflect101) {
  if (kx.empty() || ky.empty()) throw ArgumentError("empty kernel");
  using Acc = detail::accumulator_t<T>;
  const std::vector<Acc> hx(kx.begin(), kx.end());
  const std::vector<Acc> hy(ky.begin(), ky.end());
  const int w = in.width();
  const int h = in.height();
  Grid<T> tmp(w, h);
  std::vector<T> scratch;
  for (int y = 0; y < h; ++y)
    detail::filter_line<T>(in.row(y).data(), 1, w, hx, border, tmp.row(y).data(), scratch);
  Grid<T> out(w, h);
  if (h == 0 || w == 0) return out;
  // Columns are accumulated a whole row at a time to stay cache friendly.
  const int r = static_cast<int>(hy.size()) / 2;
  const int k = static_cast<int>(hy.size());
  std::vector<const T*> rows(static_cast<std::size_t>(k));
  std::vector<Acc> acc(static_cast<std::size_t>(w));
  for (int y = 0; y < h; ++y) {
    for (int t = 0; t < k; ++t) {
      int j = detail::border_index(y - r + t, h, border);
      rows[t] = j < 0 ? nullptr : tmp.row(j).data();
    }
    auto dst = out.row(y);
    std::fill(acc.begin(), acc.end(), Acc{0});
    for (int t = 0; t < k; ++t) {
      if (!rows[t]) continue;
      const Acc c = hy[k - 1 - t];
      const T* s = rows[t];
      for (int x = 0; x < w; ++x) acc[x] += c * s[x];
    }
    for (int x = 0; x < w; ++x) dst[x] = static_cast<T>(acc[x]);
  }
  return out;
}

/// Normalized 1-D Gaussian, radius ceil(truncate * sigma).
inline std::vector<double> gaussian_kernel_1d(double sigma, double truncate = 3.0) {
  if (!(sigma > 0.0)) throw ArgumentError("gaussian sigma must be > 0");
  const int r = std::max(1, static_cast<int>(std::ceil(truncate * sigma)));
  std::vector<double> k(2 * static_cast<std::size_t>(r) + 1);
  double sum = 0.0;
  for (int i = -r; i <= r; ++i) sum += k[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (double& v : k) v /= sum;
  return k;
}

template <typename T>
Grid<T> gaussian_blur(const Grid<T>& in, double sigma, Border border = Border::Reflect101) {
  const auto k = gaussian_kernel_1d(sigma);
  return convolve_separable(in, std::span<const double>(k), std::span<const double>(k), border);
}

/// Linear convolution through the frequency domain. Both operands are zero padded to a
/// transform size of at least (W + kw - 1) x (H + kh - 1), so the circular product equals
/// the linear convolution; the result is cropped to the input frame with the kernel centre
/// (kw/2, kh/2) at the origin. Samples outside the image count as zero.
inline Field convolve_fft(const Field& img, const Field& kernel) {
  if (kernel.empty()) throw ArgumentError("empty kernel");
  if (img.empty()) throw ArgumentError("empty image");
  const int pw = cv::getOptimalDFTSize(img.width() + kernel.width() - 1);
  const int ph = cv::getOptimalDFTSize(img.height() + kernel.height() - 1);

  auto padded = [&](const Field& f) {
    cv::Mat m = cv::Mat::zeros(ph, pw, CV_64F);
    for (int y = 0; y < f.height(); ++y) {
      auto src = f.row(y);
      std::copy(src.begin(), src.end(), m.ptr<double>(y));
    }
    return m;
  };
  cv::Mat a = padded(img);
  cv::Mat b = padded(kernel);
  cv::dft(a, a, 0, img.height());
  cv::dft(b, b, 0, kernel.height());
  cv::Mat prod;
  cv::mulSpectrums(a, b, prod, 0);
  cv::dft(prod, prod, cv::DFT_INVERSE | cv::DFT_SCALE | cv::DFT_REAL_OUTPUT);

  const int cx = kernel.width() / 2;
  const int cy = kernel.height() / 2;
  Field out(img.width(), img.height());
  for (int y = 0; y < img.height(); ++y) {
    const double* src = prod.ptr<double>(y + cy) + cx;
    std::copy(src, src + img.width(), out.row(y).begin());
  }
  return out;
}

}  // namespace cmfd
