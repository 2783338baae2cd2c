#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cmfd/attacks.hpp"
#include "cmfd/image.hpp"
#include "cmfd/io.hpp"
#include "cmfd/localization.hpp"
#include "cmfd/random.hpp"
#include "cmfd/resample.hpp"

namespace cmfd {

struct SceneConfig {
  int width = 384;
  int height = 256;
  int shapes = 24;
  double grain = 0.004;  // std-dev of the final per-pixel noise
};

namespace detail {

inline Field value_noise(int w, int h, int cell, Rng& rng) {
  const int gw = std::max(2, w / cell + 2), gh = std::max(2, h / cell + 2);
  Field g(gw, gh);
  for (double& v : g.values()) v = rng.uniform(-1.0, 1.0);
  // Resample a slightly larger lattice, then crop, so the lattice edges stay out of frame.
  const Field big = resize_bicubic(g, gw * cell, gh * cell);
  Field out(w, h);
  const int ox = static_cast<int>(rng.integer(0, cell - 1)), oy = static_cast<int>(rng.integer(0, cell - 1));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) out(x, y) = big(std::min(x + ox, big.width() - 1), std::min(y + oy, big.height() - 1));
  return out;
}

}  // namespace detail

/// Deterministic procedural scene: multi-scale value noise under a few dozen soft-edged,
/// individually textured ellipses and rectangles, normalized to [0.1, 0.9] plus grain.
inline GrayImage procedural_scene(const SceneConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  const int w = cfg.width, h = cfg.height;
  Field f(w, h);
  for (int cell : {96, 48, 24, 12, 6, 3}) {
    const Field n = detail::value_noise(w, h, cell, rng);
    const double amp = std::pow(cell / 96.0, 0.6);
    for (std::size_t i = 0; i < f.size(); ++i) f.values()[i] += amp * n.values()[i];
  }
  const Field fine = detail::value_noise(w, h, 4, rng);
  for (int s = 0; s < cfg.shapes; ++s) {
    const double cx = rng.uniform(0, w), cy = rng.uniform(0, h);
    const double a = rng.uniform(6, 0.16 * w), b = rng.uniform(6, 0.16 * h);
    const double th = rng.uniform(0, std::numbers::pi);
    const double level = rng.uniform(-1.5, 1.5);
    const double tex = rng.uniform(0.0, 0.8);
    const bool ellipse = rng.uniform() < 0.5;
    const double c = std::cos(th), sn = std::sin(th);
    const double reach = std::max(a, b) + 2;
    for (int y = std::max(0, int(cy - reach)); y < std::min(h, int(cy + reach) + 1); ++y)
      for (int x = std::max(0, int(cx - reach)); x < std::min(w, int(cx + reach) + 1); ++x) {
        const double u = c * (x - cx) + sn * (y - cy), v = -sn * (x - cx) + c * (y - cy);
        const double d = ellipse ? (std::hypot(u / a, v / b) - 1.0) * std::min(a, b)
                                 : std::max(std::abs(u) - a, std::abs(v) - b);
        const double alpha = std::clamp(0.5 - d, 0.0, 1.0);
        if (alpha <= 0.0) continue;
        f(x, y) = (1 - alpha) * f(x, y) + alpha * (level + tex * fine(x, y));
      }
  }
  const auto [lo, hi] = std::minmax_element(f.values().begin(), f.values().end());
  const double mn = *lo, span = std::max(*hi - *lo, 1e-12);
  for (double& v : f.values()) v = 0.1 + 0.8 * (v - mn) / span + cfg.grain * rng.normal();
  return GrayImage::clamped(std::move(f));
}

/// One planted duplication: source pixels map to target pixels through `transform`.
struct PlantedRelation {
  Affine transform;
  BinaryMask source;
};

struct SyntheticImage {
  std::string id;
  GrayImage image;
  BinaryMask truth;
  std::vector<PlantedRelation> relations;  // every ordered duplication relation
  std::string description;
};

/// Square copy region of side `size`, pasted `copies` times with the given edit applied to
/// each paste (offsets chosen at random so no two instances overlap).
struct ForgeryRecipe {
  int size = 80;
  int copies = 1;
  double rotate_degrees = 0.0;
  double scale = 1.0;
};

struct SyntheticSpec {
  std::string id;
  std::uint64_t seed = 0;
  SceneConfig scene;
  std::vector<ForgeryRecipe> forgeries;
  std::optional<Attack> post;  // whole-image attack after pasting
  bool polygon = false;        // irregular (hexagonal) regions instead of squares
};

namespace detail {

struct Box {
  double x0, y0, x1, y1;
  bool overlaps(const Box& o, double gap) const {
    return !(x1 + gap < o.x0 || o.x1 + gap < x0 || y1 + gap < o.y0 || o.y1 + gap < y0);
  }
};

inline Box bounds(std::span<const Point2> poly) {
  Box b{1e300, 1e300, -1e300, -1e300};
  for (const auto& p : poly) b = {std::min(b.x0, p.x), std::min(b.y0, p.y), std::max(b.x1, p.x), std::max(b.y1, p.y)};
  return b;
}

inline std::vector<Point2> region_polygon(int x, int y, int size, bool irregular, Rng& rng) {
  if (!irregular) return rectangle(x, y, size, size);
  const double cx = x + 0.5 * size - 0.5, cy = y + 0.5 * size - 0.5, r = 0.5 * size;
  std::vector<Point2> poly;
  for (int k = 0; k < 6; ++k) {
    const double t = (k + rng.uniform(-0.2, 0.2)) * std::numbers::pi / 3.0;
    const double rr = r * rng.uniform(0.8, 1.0);
    poly.push_back({cx + rr * std::cos(t), cy + rr * std::sin(t)});
  }
  return poly;
}

}  // namespace detail

inline SyntheticImage synthesize(const SyntheticSpec& spec) {
  Rng rng(spec.seed ^ 0x9e3779b97f4a7c15ULL);
  GrayImage img = procedural_scene(spec.scene, spec.seed);
  const int w = img.width(), h = img.height();
  SyntheticImage out;
  out.id = spec.id;
  out.truth = BinaryMask(w, h);
  std::vector<detail::Box> used;
  const double gap = 8.0;

  for (const auto& recipe : spec.forgeries) {
    bool placed = false;
    for (int attempt = 0; attempt < 2000 && !placed; ++attempt) {
      const int margin = 4;
      const int sx = static_cast<int>(rng.integer(margin, w - recipe.size - margin));
      const int sy = static_cast<int>(rng.integer(margin, h - recipe.size - margin));
      const auto poly = detail::region_polygon(sx, sy, recipe.size, spec.polygon, rng);
      const auto sb = detail::bounds(poly);
      if (std::any_of(used.begin(), used.end(), [&](const detail::Box& b) { return b.overlaps(sb, gap); })) continue;

      std::vector<detail::Box> boxes{sb};
      std::vector<RegionEdit> edits;
      for (int c = 0; c < recipe.copies; ++c) {
        RegionEdit e{rng.uniform(-w, w), rng.uniform(-h, h), recipe.rotate_degrees, recipe.scale};
        e.dx = std::round(e.dx);
        e.dy = std::round(e.dy);
        const Affine T = detail::region_transform(0.5 * (sb.x0 + sb.x1), 0.5 * (sb.y0 + sb.y1), e.rotate_degrees,
                                                  e.scale, e.dx, e.dy);
        std::vector<Point2> moved;
        for (const auto& p : poly) moved.push_back(T.apply(p));
        const auto tb = detail::bounds(moved);
        if (tb.x0 < margin || tb.y0 < margin || tb.x1 > w - 1 - margin || tb.y1 > h - 1 - margin) break;
        if (std::any_of(used.begin(), used.end(), [&](const detail::Box& b) { return b.overlaps(tb, gap); }) ||
            std::any_of(boxes.begin(), boxes.end(), [&](const detail::Box& b) { return b.overlaps(tb, gap); }))
          break;
        boxes.push_back(tb);
        edits.push_back(e);
      }
      if (static_cast<int>(edits.size()) != recipe.copies) continue;

      const GrayImage before = img;
      std::vector<Forgery> made;
      for (const auto& e : edits) {
        made.push_back(make_forgery(before, poly, e));
        // Paste onto the running image using the target mask from the clean source.
        Field f = img.field();
        const auto& fg = made.back();
        for (std::size_t i = 0; i < f.size(); ++i)
          if (fg.target.values()[i]) f.values()[i] = fg.image.values()[i];
        img = GrayImage(std::move(f));
        out.truth = mask_union(out.truth, fg.truth);
      }
      for (std::size_t i = 0; i < made.size(); ++i) {
        out.relations.push_back({made[i].transform, made[i].source});
        for (std::size_t j = 0; j < made.size(); ++j)
          if (i != j)
            // Copy i -> copy j through the shared source.
            out.relations.push_back({compose(made[j].transform, made[i].transform.inverse()), made[i].target});
      }
      used.insert(used.end(), boxes.begin(), boxes.end());
      placed = true;
    }
    if (!placed) throw ArgumentError("could not place forgery in " + spec.id);
  }

  if (spec.post) {
    Attack a = *spec.post;
    a.seed = spec.seed + 17;
    if (a.kind == AttackKind::Scale || a.kind == AttackKind::Rotate)
      throw ArgumentError("synthetic post-processing supports noise and jpeg only");
    img = apply_attack(img, a);
    out.description = a.label();
  }
  out.image = std::move(img);
  return out;
}

/// True when some planted relation carries one keypoint to within `tolerance` pixels of the other.
inline bool is_planted_match(const SyntheticImage& s, const Keypoint& a, const Keypoint& b, double tolerance = 3.0) {
  for (const auto& r : s.relations)
    for (const auto& [p, q] : {std::pair{&a, &b}, std::pair{&b, &a}}) {
      const int px = static_cast<int>(std::lround(p->x)), py = static_cast<int>(std::lround(p->y));
      if (!r.source.contains(px, py) || !r.source(px, py)) continue;
      const Point2 t = r.transform.apply(p->x, p->y);
      if (std::hypot(t.x - q->x, t.y - q->y) <= tolerance) return true;
    }
  return false;
}

/// The 20-image benchmark corpus: translations, region rotations {10, 60, 180}, region
/// scalings {0.8, 1.2}, and translated copies under noise (0.02..0.1) and JPEG (100..20).
inline std::vector<SyntheticSpec> benchmark_corpus_specs(std::uint64_t base_seed = 1000) {
  std::vector<SyntheticSpec> specs;
  auto add = [&](const std::string& kind, ForgeryRecipe r, std::optional<Attack> post = {}, bool polygon = false) {
    SyntheticSpec s;
    s.seed = base_seed + specs.size();
    char id[32];
    std::snprintf(id, sizeof id, "syn%02zu", specs.size());
    s.id = std::string(id) + "_" + kind;
    s.forgeries = {r};
    s.post = post;
    s.polygon = polygon;
    specs.push_back(std::move(s));
  };
  for (int i = 0; i < 3; ++i) add("translate", {});
  for (double deg : {10.0, 60.0, 180.0}) add("rotate" + std::to_string(int(deg)), {80, 1, deg, 1.0});
  add("scale080", {80, 1, 0.0, 0.8});
  add("scale120", {72, 1, 0.0, 1.2});
  for (double s : {0.02, 0.04, 0.06, 0.08, 0.10})
    add("awgn" + std::to_string(int(std::lround(s * 100))), {}, Attack{AttackKind::Noise, s, 0});
  for (double q : {100.0, 80.0, 60.0, 40.0, 20.0})
    add("jpeg" + std::to_string(int(q)), {}, Attack{AttackKind::Jpeg, q, 0});
  add("polygon", {}, {}, true);
  add("polygon_rotate60", {80, 1, 60.0, 1.0}, {}, true);
  return specs;
}

/// Clean controls drawn from the same scene generator.
inline std::vector<SyntheticSpec> clean_corpus_specs(std::size_t n = 5, std::uint64_t base_seed = 5000) {
  std::vector<SyntheticSpec> specs;
  for (std::size_t i = 0; i < n; ++i) {
    SyntheticSpec s;
    s.seed = base_seed + i;
    s.id = "clean" + std::to_string(i);
    specs.push_back(std::move(s));
  }
  return specs;
}

/// Multi-forgery corpus: each image holds a region pasted twice (three instances), and every
/// other image an extra single duplication.
inline std::vector<SyntheticSpec> multi_forgery_corpus_specs(std::size_t n = 50, std::uint64_t base_seed = 9000) {
  std::vector<SyntheticSpec> specs;
  for (std::size_t i = 0; i < n; ++i) {
    SyntheticSpec s;
    s.seed = base_seed + i;
    s.id = "multi" + std::to_string(i);
    s.forgeries = {{64, 2, 0.0, 1.0}};
    if (i % 2 == 1) s.forgeries.push_back({56, 1, 0.0, 1.0});
    specs.push_back(std::move(s));
  }
  return specs;
}

/// Writes images/<id>.png and masks/<id>.png.
inline void write_dataset(const std::filesystem::path& dir, std::span<const SyntheticImage> images) {
  std::filesystem::create_directories(dir / "images");
  std::filesystem::create_directories(dir / "masks");
  for (const auto& s : images) {
    save_image(s.image, dir / "images" / (s.id + ".png"));
    save_mask(s.truth, dir / "masks" / (s.id + ".png"));
  }
}

}  // namespace cmfd
