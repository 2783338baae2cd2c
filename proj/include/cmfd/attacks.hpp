#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "cmfd/errors.hpp"
#include "cmfd/image.hpp"
#include "cmfd/io.hpp"
#include "cmfd/localization.hpp"
#include "cmfd/random.hpp"
#include "cmfd/resample.hpp"

namespace cmfd {

/// Expands a comma-separated list whose items are single values or `start : step : stop`
/// ranges (inclusive, either direction), e.g. "80, 91 : 2 : 109, 120".
inline std::vector<double> expand_range_grammar(std::string_view text) {
  std::vector<double> out;
  auto parse = [](std::string s) {
    s.erase(0, s.find_first_not_of(" \t"));
    s.erase(s.find_last_not_of(" \t") + 1);
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      throw ArgumentError("bad number in range list: '" + s + "'");
    }
    if (used != s.size()) throw ArgumentError("bad number in range list: '" + s + "'");
    return v;
  };
  std::stringstream items{std::string(text)};
  std::string item;
  while (std::getline(items, item, ',')) {
    std::vector<double> parts;
    std::stringstream ps(item);
    std::string part;
    while (std::getline(ps, part, ':')) parts.push_back(parse(part));
    if (parts.size() == 1) {
      out.push_back(parts[0]);
    } else if (parts.size() == 3) {
      const double start = parts[0], step = parts[1], stop = parts[2];
      if (step == 0.0 || (stop - start) / step < 0.0) throw ArgumentError("range step does not reach stop");
      const long n = std::lround(std::floor((stop - start) / step + 1e-9));
      for (long i = 0; i <= n; ++i) out.push_back(start + step * static_cast<double>(i));
    } else {
      throw ArgumentError("range item must be a value or start:step:stop");
    }
  }
  return out;
}

enum class AttackKind { Scale, Rotate, Noise, Jpeg };

inline std::string_view to_string(AttackKind k) {
  switch (k) {
    case AttackKind::Scale: return "scale";
    case AttackKind::Rotate: return "rotate";
    case AttackKind::Noise: return "awgn";
    case AttackKind::Jpeg: return "jpeg";
  }
  return "?";
}

/// Admissible values per attack, as the benchmark protocol lists them. Scale factors are
/// percentages in the list and plain factors everywhere else.
inline std::vector<double> attack_grammar(AttackKind k) {
  switch (k) {
    case AttackKind::Scale: {
      auto v = expand_range_grammar("80, 91 : 2 : 109, 120");
      for (double& x : v) x /= 100.0;
      return v;
    }
    case AttackKind::Rotate: return expand_range_grammar("2 : 2 : 10, 20, 60, 180");
    case AttackKind::Noise: return expand_range_grammar("0.02 : 0.02 : 0.1");
    case AttackKind::Jpeg: return expand_range_grammar("100 : -10 : 20");
  }
  return {};
}

struct Attack {
  AttackKind kind = AttackKind::Noise;
  double value = 0.0;
  std::uint64_t seed = 0;  // noise realisation

  std::string label() const {
    std::ostringstream os;
    os << to_string(kind) << '=' << value;
    return os.str();
  }
};

/// Parses NAME=VALUE (scale=0.8, rotate=60, awgn=0.04, jpeg=70). With `strict`, the value
/// must be one of the listed protocol values.
inline Attack parse_attack(std::string_view text, bool strict = true) {
  const auto eq = text.find('=');
  if (eq == std::string_view::npos) throw ArgumentError("attack must look like NAME=VALUE");
  const std::string name(text.substr(0, eq));
  const std::string value(text.substr(eq + 1));
  Attack a;
  if (name == "scale") a.kind = AttackKind::Scale;
  else if (name == "rotate") a.kind = AttackKind::Rotate;
  else if (name == "awgn" || name == "noise") a.kind = AttackKind::Noise;
  else if (name == "jpeg") a.kind = AttackKind::Jpeg;
  else throw ArgumentError("unknown attack: " + name);
  const auto values = expand_range_grammar(value);
  if (values.size() != 1) throw ArgumentError("attack takes a single value");
  a.value = values[0];
  if (strict) {
    const auto allowed = attack_grammar(a.kind);
    if (std::none_of(allowed.begin(), allowed.end(), [&](double v) { return std::abs(v - a.value) < 1e-9; }))
      throw ArgumentError("attack value outside the protocol grammar: " + std::string(text));
  } else if (!(a.value > 0.0)) {
    throw ArgumentError("attack value must be > 0");
  }
  return a;
}

/// NAME=LIST where LIST follows the range grammar, e.g. "jpeg=100:-10:20" gives nine attacks.
inline std::vector<Attack> parse_attacks(std::string_view text, bool strict = true) {
  const auto eq = text.find('=');
  if (eq == std::string_view::npos) throw ArgumentError("attack must look like NAME=VALUE");
  const std::string name(text.substr(0, eq));
  std::vector<Attack> out;
  for (double v : expand_range_grammar(text.substr(eq + 1))) {
    std::ostringstream os;
    os.precision(17);
    os << name << '=' << v;
    out.push_back(parse_attack(os.str(), strict));
  }
  return out;
}

namespace detail {

// cos/sin of an angle in degrees, exact for multiples of 90.
inline std::pair<double, double> cos_sin_degrees(double deg) {
  const double q = deg / 90.0;
  if (std::abs(q - std::round(q)) < 1e-12) {
    static constexpr double c[4] = {1, 0, -1, 0};
    static constexpr double s[4] = {0, 1, 0, -1};
    const int i = static_cast<int>(((std::lround(q) % 4) + 4) % 4);
    return {c[i], s[i]};
  }
  const double r = deg * std::numbers::pi / 180.0;
  return {std::cos(r), std::sin(r)};
}

// Rotation (clockwise on screen for positive degrees) and scaling about (cx, cy), then shift.
inline Affine region_transform(double cx, double cy, double degrees, double scale, double dx, double dy) {
  const auto [c, s] = cos_sin_degrees(degrees);
  const double a = scale * c, b = -scale * s, d = scale * s, e = scale * c;
  return {{a, b, cx - a * cx - b * cy + dx, d, e, cy - d * cx - e * cy + dy}};
}

template <typename T>
Grid<T> warp_about_centre(const Grid<T>& in, const Affine& forward, int out_w, int out_h, bool nearest) {
  const Affine inv = forward.inverse();
  Grid<T> out(out_w, out_h);
  for (int y = 0; y < out_h; ++y)
    for (int x = 0; x < out_w; ++x) {
      const Point2 p = inv.apply(x, y);
      if (nearest) {
        const int px = static_cast<int>(std::lround(p.x)), py = static_cast<int>(std::lround(p.y));
        if (in.contains(px, py)) out(x, y) = in(px, py);
      } else {
        out(x, y) = static_cast<T>(sample_bilinear(in, p.x, p.y, 0.0));
      }
    }
  return out;
}

}  // namespace detail

inline GrayImage add_gaussian_noise(const GrayImage& img, double sigma, std::uint64_t seed) {
  Rng rng(seed);
  Field f = img.field();
  for (double& v : f.values()) v += sigma * rng.normal();
  return GrayImage::clamped(std::move(f));
}

/// Rotates the whole frame about its centre, keeping its size; exposed corners become 0.
inline GrayImage rotate_image(const GrayImage& img, double degrees) {
  const double cx = 0.5 * (img.width() - 1), cy = 0.5 * (img.height() - 1);
  const Affine T = detail::region_transform(cx, cy, degrees, 1.0, 0.0, 0.0);
  return GrayImage::clamped(detail::warp_about_centre(img.field(), T, img.width(), img.height(), false));
}

inline BinaryMask rotate_mask(const BinaryMask& mask, double degrees) {
  const double cx = 0.5 * (mask.width() - 1), cy = 0.5 * (mask.height() - 1);
  const Affine T = detail::region_transform(cx, cy, degrees, 1.0, 0.0, 0.0);
  return detail::warp_about_centre(mask, T, mask.width(), mask.height(), true);
}

/// Whole-image attack. Output samples are clamped to [0, 1].
inline GrayImage apply_attack(const GrayImage& img, const Attack& a) {
  switch (a.kind) {
    case AttackKind::Scale: return resize_bicubic(img, a.value);
    case AttackKind::Rotate: return rotate_image(img, a.value);
    case AttackKind::Noise: return add_gaussian_noise(img, a.value, a.seed);
    case AttackKind::Jpeg: {
      const int q = static_cast<int>(std::lround(a.value));
      if (q < 0 || q > 100) throw ArgumentError("jpeg quality must lie in [0,100]");
      return jpeg_roundtrip(img, q);
    }
  }
  return img;
}

/// The ground truth that goes with apply_attack: geometric attacks move the mask too.
inline BinaryMask apply_attack(const BinaryMask& mask, const Attack& a) {
  switch (a.kind) {
    case AttackKind::Scale: {
      const int w = static_cast<int>(std::lround(mask.width() * a.value));
      const int h = static_cast<int>(std::lround(mask.height() * a.value));
      BinaryMask out(w, h);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const int sx = std::clamp(static_cast<int>(std::floor((x + 0.5) / a.value)), 0, mask.width() - 1);
          const int sy = std::clamp(static_cast<int>(std::floor((y + 0.5) / a.value)), 0, mask.height() - 1);
          out(x, y) = mask(sx, sy);
        }
      return out;
    }
    case AttackKind::Rotate: return rotate_mask(mask, a.value);
    default: return mask;
  }
}

/// Pixels whose centre lies inside the polygon (even-odd rule).
inline BinaryMask rasterize_polygon(std::span<const Point2> poly, int width, int height) {
  if (poly.size() < 3) throw ArgumentError("polygon needs at least 3 vertices");
  BinaryMask m(width, height);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      bool inside = false;
      for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
        const Point2 a = poly[i], b = poly[j];
        if ((a.y > y) != (b.y > y) && x < (b.x - a.x) * (y - a.y) / (b.y - a.y) + a.x) inside = !inside;
      }
      m(x, y) = inside ? 1 : 0;
    }
  return m;
}

/// Rectangle covering pixels x..x+w-1, y..y+h-1.
inline std::vector<Point2> rectangle(int x, int y, int w, int h) {
  return {{x - 0.5, y - 0.5}, {x + w - 0.5, y - 0.5}, {x + w - 0.5, y + h - 0.5}, {x - 0.5, y + h - 0.5}};
}

struct RegionEdit {
  double dx = 0.0;
  double dy = 0.0;
  double rotate_degrees = 0.0;  // clockwise on screen, about the region's bounding-box centre
  double scale = 1.0;
};

struct Forgery {
  GrayImage image;
  BinaryMask truth;   // source region united with the pasted region
  BinaryMask source;
  BinaryMask target;
  Affine transform;   // source pixel -> pasted pixel
};

/// Copies the region, optionally rotated and scaled about its centre, to its offset
/// position. Pasted pixels are pulled back through the inverse transform (bilinear).
inline Forgery make_forgery(const GrayImage& src, std::span<const Point2> region, const RegionEdit& edit) {
  if (!(edit.scale > 0.0) || !std::isfinite(edit.scale)) throw ArgumentError("scale must be > 0");
  const int w = src.width(), h = src.height();
  BinaryMask source = rasterize_polygon(region, w, h);
  if (count_nonzero(source) == 0) throw ArgumentError("region covers no pixel");
  double x0 = 1e300, y0 = 1e300, x1 = -1e300, y1 = -1e300;
  for (const auto& p : region) x0 = std::min(x0, p.x), y0 = std::min(y0, p.y), x1 = std::max(x1, p.x), y1 = std::max(y1, p.y);
  const double cx = 0.5 * (x0 + x1), cy = 0.5 * (y0 + y1);
  const Affine T = detail::region_transform(cx, cy, edit.rotate_degrees, edit.scale, edit.dx, edit.dy);
  const bool identity = edit.dx == 0.0 && edit.dy == 0.0 && edit.scale == 1.0 &&
                        std::abs(std::remainder(edit.rotate_degrees, 360.0)) < 1e-12;
  if (identity) throw ArgumentError("region pasted onto itself");

  // Every corner of the transformed region must land inside the frame.
  for (const auto& p : region) {
    const Point2 q = T.apply(p);
    if (q.x < -0.5 - 1e-9 || q.y < -0.5 - 1e-9 || q.x > w - 0.5 + 1e-9 || q.y > h - 0.5 + 1e-9)
      throw ArgumentError("pasted region leaves the frame");
  }
  const Affine inv = T.inverse();

  Field out = src.field();
  BinaryMask target(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const Point2 p = inv.apply(x, y);
      const int px = static_cast<int>(std::lround(p.x)), py = static_cast<int>(std::lround(p.y));
      if (!source.contains(px, py) || !source(px, py)) continue;
      target(x, y) = 1;
      out(x, y) = sample_bilinear_clamped(src.field(), p.x, p.y, 0.0);
    }
  BinaryMask truth = mask_union(source, target);
  return {GrayImage::clamped(std::move(out)), std::move(truth), std::move(source), std::move(target), T};
}

inline Forgery make_forgery(const GrayImage& src, int x, int y, int w, int h, const RegionEdit& edit) {
  const auto poly = rectangle(x, y, w, h);
  return make_forgery(src, poly, edit);
}

}  // namespace cmfd
