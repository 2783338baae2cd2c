#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "cmfd/errors.hpp"
#include "cmfd/image.hpp"

namespace cmfd {

namespace detail {

inline double channel_scale(int depth) {
  switch (depth) {
    case CV_8U: return 1.0 / 255.0;
    case CV_16U: return 1.0 / 65535.0;
    case CV_32F:
    case CV_64F: return 1.0;
    default: throw FormatError("unsupported sample depth");
  }
}

}  // namespace detail

/// Converts a decoded raster (1, 3 or 4 channels, OpenCV BGR order) to luma in [0,1].
/// Color uses fixed BT.601 weights 0.299 R + 0.587 G + 0.114 B.
inline GrayImage from_mat(const cv::Mat& mat) {
  if (mat.empty()) throw FormatError("empty raster");
  cv::Mat m;
  mat.convertTo(m, CV_64F, detail::channel_scale(mat.depth()));
  const int ch = m.channels();
  if (ch != 1 && ch != 3 && ch != 4) throw FormatError("unsupported channel count");
  Field f(m.cols, m.rows);
  for (int y = 0; y < m.rows; ++y) {
    const double* p = m.ptr<double>(y);
    for (int x = 0; x < m.cols; ++x) {
      const double* px = p + static_cast<std::ptrdiff_t>(x) * ch;
      f(x, y) = ch == 1 ? px[0] : 0.299 * px[2] + 0.587 * px[1] + 0.114 * px[0];
    }
  }
  return GrayImage::clamped(std::move(f));
}

/// 8-bit single-channel raster, values rounded from [0,1].
inline cv::Mat to_mat8(const Field& field, double lo = 0.0, double hi = 1.0) {
  cv::Mat out(field.height(), field.width(), CV_8UC1);
  const double span = hi > lo ? hi - lo : 1.0;
  for (int y = 0; y < field.height(); ++y) {
    auto* p = out.ptr<unsigned char>(y);
    for (int x = 0; x < field.width(); ++x) {
      double v = std::clamp((field(x, y) - lo) / span, 0.0, 1.0);
      p[x] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
  }
  return out;
}

inline cv::Mat to_mat8(const GrayImage& img) { return to_mat8(img.field()); }

inline cv::Mat to_mat8(const BinaryMask& mask) {
  cv::Mat out(mask.height(), mask.width(), CV_8UC1);
  for (int y = 0; y < mask.height(); ++y) {
    auto* p = out.ptr<unsigned char>(y);
    for (int x = 0; x < mask.width(); ++x) p[x] = mask(x, y) ? 255 : 0;
  }
  return out;
}

/// Loads PNG/JPEG/BMP/TIFF as a grayscale image in [0,1].
inline GrayImage load_image(const std::filesystem::path& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw IoError("cannot open image: " + path.string());
  probe.close();
  cv::Mat mat = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (mat.empty()) throw FormatError("cannot decode image: " + path.string());
  return from_mat(mat);
}

/// Loads a ground-truth mask; grayscale samples >= threshold (on the 8-bit scale) are set.
inline BinaryMask load_mask(const std::filesystem::path& path, int threshold = 128) {
  GrayImage g = load_image(path);
  BinaryMask m(g.width(), g.height());
  auto src = g.values();
  auto dst = m.values();
  for (std::size_t i = 0; i < src.size(); ++i)
    dst[i] = std::lround(src[i] * 255.0) >= threshold ? 1 : 0;
  return m;
}

namespace detail {

inline void write_mat(const cv::Mat& mat, const std::filesystem::path& path) {
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), mat);
  } catch (const cv::Exception& e) {
    throw IoError("cannot write " + path.string() + ": " + e.what());
  }
  if (!ok) throw IoError("cannot write " + path.string());
}

}  // namespace detail

/// Writes a mask as 8-bit 0/255.
inline void save_mask(const BinaryMask& mask, const std::filesystem::path& path) {
  detail::write_mat(to_mat8(mask), path);
}

inline void save_image(const GrayImage& img, const std::filesystem::path& path) {
  detail::write_mat(to_mat8(img), path);
}

/// Writes a field linearly mapped from [min, max] to 0..255.
inline void save_field(const Field& field, const std::filesystem::path& path) {
  double lo = 0.0, hi = 0.0;
  if (!field.empty()) {
    auto [mn, mx] = std::minmax_element(field.values().begin(), field.values().end());
    lo = *mn;
    hi = *mx;
  }
  detail::write_mat(to_mat8(field, lo, hi), path);
}

/// Round-trips an image through the JPEG codec at the given quality (1..100).
inline GrayImage jpeg_roundtrip(const GrayImage& img, int quality) {
  std::vector<unsigned char> buf;
  cv::imencode(".jpg", to_mat8(img), buf, {cv::IMWRITE_JPEG_QUALITY, quality});
  cv::Mat decoded = cv::imdecode(buf, cv::IMREAD_GRAYSCALE);
  return from_mat(decoded);
}

}  // namespace cmfd
