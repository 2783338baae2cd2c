// Acceptance run: one line per criterion, nonzero exit when any criterion fails.
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

#include "cmfd/benchmark.hpp"
#include "cmfd/cmfd.hpp"
#include "cmfd/synthetic.hpp"
#include "../unit/support.hpp"

using namespace cmfd;

namespace {

enum class Verdict { Pass, Fail, Skip };

struct Outcome {
  Verdict verdict = Verdict::Fail;
  std::string detail;
};

struct Criterion {
  int number;
  std::string name;
  double budget_seconds;
  std::function<Outcome()> run;
};

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

struct Checks {
  bool ok = true;
  std::ostringstream failed;
  void expect(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      failed << " [" << what << "]";
    }
  }
  Outcome outcome(const std::string& summary) const {
    return {ok ? Verdict::Pass : Verdict::Fail, summary + (ok ? "" : "; failed:" + failed.str())};
  }
};

double purity(std::span<const MatchPair> pairs, std::span<const Descriptor> ds, const SyntheticImage& s) {
  if (pairs.empty()) return 0.0;
  std::size_t good = 0;
  for (const auto& p : pairs) good += is_planted_match(s, ds[p.a].keypoint, ds[p.b].keypoint);
  return static_cast<double>(good) / pairs.size();
}

std::vector<SyntheticImage> corpus() {
  std::vector<SyntheticImage> out;
  for (const auto& spec : benchmark_corpus_specs()) out.push_back(synthesize(spec));
  return out;
}

// ---------------------------------------------------------------------------------------

Outcome equation_fidelity() {
  Checks c;
  c.expect(scale_factor(1000, 1500, 3000) == 2.0, "scale (1000,1500)");
  c.expect(scale_factor(3000, 2000, 3000) == 1.0, "scale (3000,2000)");
  c.expect(scale_factor(4000, 2500, 3000) == 1.0, "scale (4000,2500)");
  c.expect(scale_factor(600, 800, 3000) == 3.75, "scale (600,800)");

  const std::vector<double> centre{1, 2}, s1{3, 0}, s2{0, 5}, s3{1, 1};
  std::vector<std::span<const double>> sides{s1, s2, s3};
  c.expect(pool_phrase(centre, sides) == std::vector<double>{4, 7}, "pool [4,7]");
  std::sort(sides.begin(), sides.end(), [](auto a, auto b) { return a.data() < b.data(); });
  do c.expect(pool_phrase(centre, sides) == std::vector<double>{4, 7}, "pool permutation");
  while (std::next_permutation(sides.begin(), sides.end(), [](auto a, auto b) { return a.data() < b.data(); }));

  c.expect(saliency_radius(0.001) == 68, "L = 68");
  c.expect(saliency_kernel(0.001).width() == 137, "kernel side 137");

  const Keypoint k{10, 10, 2};
  c.expect(in_roi_disk(k, 5, 10, 10), "disk centre");
  c.expect(!in_roi_disk(k, 5, 10, 21), "disk outside");
  c.expect(in_roi_disk(k, 5, 10, 20), "disk rim");

  c.expect(normalize_roi(50000, 25000) == 1.0, "normalize 50000");
  c.expect(normalize_roi(12500, 25000) == 0.5, "normalize 12500");

  const double t_cor = FusionConfig{}.t_cor;
  c.expect(fused_correlation(0.8, 0.5) == 0.4 && fused_correlation(0.8, 0.5) >= t_cor, "fusion 0.8*0.5 kept");
  c.expect(!(fused_correlation(0.9, 0.0) >= t_cor), "fusion zero ROI dropped");
  return c.outcome("scale factors, pooling, L, disk, normalization and fusion cases");
}

Outcome oracle_equivalence() {
  Checks c;
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    const Field img = test::random_field(32, 32, rng, -1, 1);
    const Field ker = test::random_field(5, 5, rng, -1, 1);
    worst = std::max(worst, test::max_abs_diff(convolve_fft(img, ker), test::direct_convolution(img, ker)));
  }
  c.expect(worst <= 1e-8, fmt("fft gap %.2e", worst));

  std::size_t knn_mismatch = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(1000 + seed);
    FeatureMatrix f(8);
    for (int i = 0; i < 200; ++i) {
      std::vector<double> row(8);
      for (double& v : row) v = rng.uniform();
      f.push_back(row);
    }
    const NeighborIndex index(f);
    const std::size_t n = 5;
    for (std::size_t q = 0; q < 200; ++q) {
      std::vector<std::pair<double, std::size_t>> all;
      for (std::size_t j = 0; j < 200; ++j)
        if (j != q) all.emplace_back(std::sqrt(detail::squared_distance(f.row(q).data(), f.row(j).data(), 8)), j);
      std::sort(all.begin(), all.end());
      const NeighborSet ns = knn_search(index, q, n);
      for (std::size_t r = 0; r < n; ++r)
        if (ns.neighbors[r] != all[r].second || std::abs(ns.distances[r] - all[r].first) > 1e-12) {
          ++knn_mismatch;
          break;
        }
    }
  }
  c.expect(knn_mismatch == 0, "knn mismatches " + std::to_string(knn_mismatch));

  std::size_t phrase_mismatch = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(2000 + seed);
    std::vector<VisualWord> words;
    for (std::size_t i = 0; i < 100; ++i) words.push_back({{rng.uniform(0, 500), rng.uniform(0, 500), 1}, {0.0}, i});
    const auto phrases = build_phrases(words, 3);
    for (std::size_t i = 0; i < words.size(); ++i) {
      std::vector<std::pair<double, std::size_t>> d;
      for (std::size_t j = 0; j < words.size(); ++j)
        if (j != i)
          d.emplace_back(std::hypot(words[j].keypoint.x - words[i].keypoint.x, words[j].keypoint.y - words[i].keypoint.y), j);
      std::sort(d.begin(), d.end());
      const std::vector<std::size_t> want{d[0].second, d[1].second, d[2].second};
      phrase_mismatch += phrases[i].sides != want;
    }
  }
  c.expect(phrase_mismatch == 0, "phrase mismatches " + std::to_string(phrase_mismatch));
  return c.outcome(fmt("fft max gap %.2e; knn and phrase side sets compared on 100 and 20 sets", worst));
}

Outcome invariance() {
  Checks c;
  const MomentDescriber md;
  auto turned = [](const Keypoint& k, int q, int w, int h) -> Keypoint {
    if (q == 1) return {h - 1 - k.y, k.x, k.sigma};
    if (q == 2) return {w - 1 - k.x, h - 1 - k.y, k.sigma};
    return {k.y, w - 1 - k.x, k.sigma};
  };
  double worst_rot = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const GrayImage img = test::texture(101, 87, 6, seed);
    for (const Keypoint k : {Keypoint{50, 43, 4}, Keypoint{30, 60, 2.5}, Keypoint{71, 20, 3}}) {
      const Descriptor a = md.describe(img, k);
      for (int q = 1; q < 4; ++q) {
        const Descriptor b = md.describe(rotate90(img, q), turned(k, q, img.width(), img.height()));
        for (std::size_t i = 0; i < a.magnitudes.size(); ++i) {
          // The (0,0) moment of a zero-mean patch is ~1e-16; relative error is meaningless there.
          if (a.magnitudes[i] < 1e-9) continue;
          worst_rot = std::max(worst_rot, std::abs(a.magnitudes[i] - b.magnitudes[i]) / a.magnitudes[i]);
        }
      }
    }
  }
  c.expect(worst_rot <= 0.01, fmt("rotation %.4f", worst_rot));

  double worst_scale = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const GrayImage img = test::texture(101, 101, 6, seed);
    const GrayImage big = resize_bicubic(img, 2.0);
    for (double s : {3.0, 4.0, 6.0}) {
      const Descriptor a = md.describe(img, {50, 50, s});
      const Descriptor b = md.describe(big, {100.5, 100.5, 2 * s});
      double n = 0.0;
      for (double v : a.magnitudes) n += v * v;
      worst_scale = std::max(worst_scale, feature_distance(a, b) / std::sqrt(n));
    }
  }
  c.expect(worst_scale <= 0.03, fmt("rescale %.4f", worst_scale));

  bool exact = true;
  const GrayImage img = test::texture(120, 120, 5, 77);
  Rng rng(5);
  for (int t = 0; t < 50; ++t) {
    std::vector<Descriptor> d;
    for (int i = 0; i < 5; ++i) d.push_back(md.describe(img, {rng.uniform(20, 100), rng.uniform(20, 100), 3}));
    std::vector<std::span<const double>> sides;
    for (int i = 1; i < 5; ++i) sides.emplace_back(d[i].magnitudes);
    const auto ref = pool_phrase(d[0].magnitudes, sides);
    std::sort(sides.begin(), sides.end(), [](auto a, auto b) { return a.data() < b.data(); });
    do exact &= pool_phrase(d[0].magnitudes, sides) == ref;
    while (std::next_permutation(sides.begin(), sides.end(), [](auto a, auto b) { return a.data() < b.data(); }));
  }
  c.expect(exact, "pooling permutation");
  return c.outcome(fmt("worst rotation deviation %.4f, worst rescale deviation %.4f, pooling exact", worst_rot, worst_scale));
}

Outcome nn_ablation() {
  using clk = std::chrono::steady_clock;
  const NnStrategy order[] = {NnStrategy::TwoNN, NnStrategy::G2NN, NnStrategy::RG2NN, NnStrategy::I2NN};
  double correct[4] = {}, pairs[4] = {}, seconds[4] = {};
  const auto specs = multi_forgery_corpus_specs(50);
  for (const auto& spec : specs) {
    const SyntheticImage s = synthesize(spec);
    const PipelineConfig cfg =
        PipelineConfig{}.in_image_units(scale_factor(s.image.height(), s.image.width(), DetectorConfig{}.normalization_target));
    const auto ds = MomentDescriber(cfg.descriptor).describe_all(s.image, detect_keypoints(s.image, cfg.detector));
    for (int i = 0; i < 4; ++i) {
      MatchConfig mc = cfg.word;
      mc.strategy = order[i];
      const auto t0 = clk::now();
      const auto wp = match_word_level(ds, mc);
      seconds[i] += std::chrono::duration<double>(clk::now() - t0).count();
      pairs[i] += wp.size();
      for (const auto& p : wp) correct[i] += is_planted_match(s, ds[p.a].keypoint, ds[p.b].keypoint);
    }
  }
  const double n = static_cast<double>(specs.size());
  std::ostringstream os;
  for (int i = 0; i < 4; ++i)
    os << to_string(order[i]) << fmt(" correct %.1f purity %.3f time %.3fs; ", correct[i] / n, correct[i] / pairs[i], seconds[i] / n);
  const double ratio = correct[0] > 0 ? correct[3] / correct[0] : 1e300;
  Checks c;
  c.expect(ratio >= 1.8, fmt("I2NN/2NN %.2f", ratio));
  c.expect(correct[3] / pairs[3] >= correct[2] / pairs[2], "purity I2NN >= RG2NN");
  c.expect(seconds[3] < seconds[2], "time I2NN < RG2NN");
  return c.outcome(os.str() + fmt("I2NN/2NN correct ratio %.2f", ratio));
}

Outcome phrase_ablation() {
  std::size_t better = 0, n = 0;
  std::ostringstream os;
  for (const auto& s : corpus()) {
    PipelineTrace t;
    run_pipeline(s.image, PipelineConfig{}, &t);
    const double w = purity(t.word_pairs, t.descriptors, s), p = purity(t.phrase_pairs, t.descriptors, s);
    better += p > w;
    ++n;
    os << "\n    " << s.id << fmt(": word %.3f (%.0f pairs) phrase %.3f (%.0f pairs)", w, t.word_pairs.size(), p,
                                    t.phrase_pairs.size());
  }
  const double share = static_cast<double>(better) / n;

  // Reported only: the multi-forgery corpus has no signal attacks.
  std::size_t multi_better = 0, multi_n = 0;
  for (const auto& spec : multi_forgery_corpus_specs(50)) {
    const SyntheticImage s = synthesize(spec);
    PipelineTrace t;
    run_pipeline(s.image, PipelineConfig{}, &t);
    multi_better += purity(t.phrase_pairs, t.descriptors, s) > purity(t.word_pairs, t.descriptors, s);
    ++multi_n;
  }
  Checks c;
  c.expect(share >= 0.9, fmt("share %.2f", share));
  return c.outcome(fmt("phrase purity above word purity on %.0f of %.0f benchmark images (%.2f)", better, n, share) +
                   fmt("; multi-forgery corpus, for reference: %.0f of %.0f", multi_better, multi_n) + os.str());
}

Outcome fusion_ablation() {
  const FusionMode modes[] = {FusionMode::Fusion, FusionMode::SsimOnly, FusionMode::RoiOnly};
  double f1[3] = {};
  std::size_t n = 0, precision_violations = 0, subset_violations = 0;
  std::ostringstream os;
  for (const auto& s : corpus()) {
    Score sc[3];
    PipelineTrace t;
    for (int m = 0; m < 3; ++m) {
      PipelineConfig cfg;
      cfg.fusion.mode = modes[m];
      sc[m] = score(run_pipeline(s.image, cfg, m == 0 ? &t : nullptr).mask, s.truth);
      f1[m] += sc[m].f1;
    }
    // The thresholded product before mask cleanup is always inside the SSIM-only set.
    FusionConfig raw;
    raw.min_component_fraction = 0.0;
    raw.closing_radius = 0.0;
    FusionConfig raw_ssim = raw;
    raw_ssim.mode = FusionMode::SsimOnly;
    if (!t.clusters.empty() &&
        !is_subset(fuse_and_localize(t.clusters, s.image, t.roi, raw), fuse_and_localize(t.clusters, s.image, t.roi, raw_ssim)))
      ++subset_violations;
    if (sc[0].precision < sc[1].precision) {
      ++precision_violations;
      os << "\n    " << s.id << fmt(": fusion precision %.3f < ssim precision %.3f", sc[0].precision, sc[1].precision);
    }
    ++n;
  }
  for (double& v : f1) v /= static_cast<double>(n);
  Checks c;
  c.expect(f1[0] > f1[1] && f1[0] > f1[2], "mean F1 ordering");
  c.expect(precision_violations == 0, std::to_string(precision_violations) + " image(s) with fusion precision below SSIM-only");
  c.expect(subset_violations == 0, std::to_string(subset_violations) + " image(s) where fused set leaves SSIM set");
  return c.outcome(fmt("mean F1 fusion %.3f, ssim %.3f, roi %.3f", f1[0], f1[1], f1[2]) + os.str());
}

Outcome end_to_end() {
  double total = 0.0;
  std::size_t n = 0;
  std::ostringstream os;
  for (const auto& s : corpus()) {
    const double f = score(run_pipeline(s.image, PipelineConfig{}).mask, s.truth).f1;
    total += f;
    ++n;
    os << "\n    " << s.id << fmt(": F1 %.3f", f);
  }
  const double mean = total / static_cast<double>(n);
  double worst_clean = 0.0;
  for (const auto& spec : clean_corpus_specs()) {
    const SyntheticImage s = synthesize(spec);
    const auto mask = run_pipeline(s.image, PipelineConfig{}).mask;
    worst_clean = std::max(worst_clean, static_cast<double>(count_nonzero(mask)) / mask.values().size());
  }
  Checks c;
  c.expect(mean >= 0.80, fmt("mean F1 %.3f < 0.80", mean));
  c.expect(worst_clean < 0.005, fmt("clean false-positive area %.4f", worst_clean));
  return c.outcome(fmt("mean F1 %.3f over %.0f images; worst clean false-positive area %.4f", mean, n, worst_clean) + os.str());
}

Outcome user_dataset() {
  const char* dir = std::getenv("CMFD_FAU_DIR");
  if (!dir || !*dir) return {Verdict::Skip, "set CMFD_FAU_DIR to a dataset in images/ + masks/ layout"};
  const auto listing = list_dataset(dir);
  const auto r = run_benchmark(listing, PipelineConfig{});
  std::ostringstream os;
  for (const auto& rec : r.records) os << "\n    " << rec.id << fmt(": F1 %.3f", rec.score.f1);
  for (const auto& w : r.warnings) os << "\n    warning: " << w;
  const double mean = r.aggregates.empty() ? 0.0 : r.aggregates[0].f1;
  return {r.records.empty() ? Verdict::Fail : Verdict::Pass,
          fmt("%.0f images scored, mean F1 %.3f (published reference 0.913)", r.records.size(), mean) + os.str()};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {1, "equation fidelity", 1, equation_fidelity},
      {2, "oracle equivalence", 30, oracle_equivalence},
      {3, "invariance", 30, invariance},
      {4, "NN-test ablation", 300, nn_ablation},
      {5, "word vs phrase ablation", 300, phrase_ablation},
      {6, "fusion ablation", 600, fusion_ablation},
      {7, "end-to-end benchmark", 600, end_to_end},
      {8, "user-supplied dataset", 1e300, user_dataset},
  };
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));
  int failures = 0;
  for (const auto& cr : all) {
    if (!only.empty() && std::find(only.begin(), only.end(), cr.number) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = cr.run();
    } catch (const std::exception& e) {
      o = {Verdict::Fail, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (o.verdict == Verdict::Pass && secs > cr.budget_seconds) {
      o.verdict = Verdict::Fail;
      o.detail += fmt("; over the %.0f s budget", cr.budget_seconds);
    }
    const char* tag = o.verdict == Verdict::Pass ? "PASS" : o.verdict == Verdict::Fail ? "FAIL" : "SKIP";
    failures += o.verdict == Verdict::Fail;
    std::cout << "criterion " << cr.number << " (" << cr.name << "): " << tag << fmt("  [%.2f s]  ", secs) << o.detail
              << std::endl;
  }
  std::cout << (failures ? std::to_string(failures) + " criterion(s) failed" : std::string("all criteria passed")) << '\n';
  return failures ? 1 : 0;
}
