#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <json.hpp>
#include <opencv2/core/version.hpp>

#include "cmfd/attacks.hpp"
#include "cmfd/io.hpp"
#include "cmfd/metrics.hpp"
#include "cmfd/pipeline.hpp"

namespace cmfd {

struct DatasetItem {
  std::string id;  // file stem
  std::filesystem::path image;
  std::filesystem::path mask;
};

struct DatasetListing {
  std::vector<DatasetItem> items;  // sorted by id
  std::vector<std::string> warnings;
};

/// Lists images/*.png whose stem also exists as masks/<stem>.png. Images without a mask are
/// skipped with a warning; a missing or empty images/ directory yields an empty listing.
inline DatasetListing list_dataset(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError("dataset directory not found: " + dir.string());
  DatasetListing out;
  const fs::path images = dir / "images";
  if (fs::is_directory(images)) {
    for (const auto& e : fs::directory_iterator(images)) {
      if (!e.is_regular_file() || e.path().extension() != ".png") continue;
      const std::string stem = e.path().stem().string();
      const fs::path mask = dir / "masks" / (stem + ".png");
      if (fs::is_regular_file(mask)) out.items.push_back({stem, e.path(), mask});
      else out.warnings.push_back("no mask for " + stem + ", skipped");
    }
  }
  std::sort(out.items.begin(), out.items.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  std::sort(out.warnings.begin(), out.warnings.end());
  if (out.items.empty()) out.warnings.push_back("dataset " + dir.string() + " holds no scorable images");
  return out;
}

/// A named configuration the benchmark runs every image under.
struct Variant {
  std::string name;
  PipelineConfig config;
};

/// Toggles for the ablation tables: "nn" (the four neighbour tests), "phrase" (word level
/// only vs. with phrase matching) and "fusion" (fused map vs. either cue alone).
inline std::vector<Variant> ablation_variants(const PipelineConfig& base, std::string_view what) {
  std::vector<Variant> v;
  if (what == "nn") {
    for (auto s : {NnStrategy::TwoNN, NnStrategy::G2NN, NnStrategy::RG2NN, NnStrategy::I2NN}) {
      PipelineConfig c = base;
      c.word.strategy = s;
      v.push_back({std::string(to_string(s)), c});
    }
  } else if (what == "phrase") {
    PipelineConfig word = base, phrase = base;
    word.phrase_level = false;
    phrase.phrase_level = true;
    v.push_back({"word", word});
    v.push_back({"phrase", phrase});
  } else if (what == "fusion") {
    for (auto m : {FusionMode::Fusion, FusionMode::SsimOnly, FusionMode::RoiOnly}) {
      PipelineConfig c = base;
      c.fusion.mode = m;
      v.push_back({std::string(to_string(m)), c});
    }
  } else {
    throw ArgumentError("unknown ablation '" + std::string(what) + "' (nn, phrase or fusion)");
  }
  return v;
}

struct PairTally {
  std::size_t pairs = 0;
  std::size_t in_truth = 0;  // both keypoints inside the forged area

  double purity() const { return pairs ? static_cast<double>(in_truth) / pairs : 0.0; }
};

struct EvalRecord {
  std::string id;
  std::string variant;
  std::string attack;  // "none" or NAME=VALUE
  Score score;
  PairTally word;
  PairTally phrase;
  PipelineReport report;
};

struct BenchmarkOptions {
  std::vector<Variant> variants;   // empty runs the defaults once
  std::vector<Attack> attacks;     // empty runs the images unattacked
  unsigned threads = 0;            // 0 = hardware concurrency
  std::function<void(const EvalRecord&)> on_record;  // called as records finish, under a lock
};

struct Aggregate {
  std::string variant;
  std::string attack;
  std::size_t images = 0;
  double precision = 0.0, recall = 0.0, f1 = 0.0;  // means over images
  double word_purity = 0.0, phrase_purity = 0.0;    // pooled over images
  std::size_t word_pairs = 0, word_in_truth = 0;
  std::size_t phrase_pairs = 0, phrase_in_truth = 0;
  double seconds = 0.0;  // mean per image
  std::map<std::string, double> stage_seconds;
};

struct BenchmarkResult {
  std::vector<EvalRecord> records;  // sorted by (variant, attack, id)
  std::vector<Aggregate> aggregates;
  std::vector<std::string> warnings;
};

namespace detail {

inline PairTally tally(std::span<const MatchPair> pairs, std::span<const Descriptor> ds, const BinaryMask& truth) {
  PairTally t;
  auto inside = [&](const Keypoint& k) {
    const int x = static_cast<int>(std::lround(k.x)), y = static_cast<int>(std::lround(k.y));
    return truth.contains(x, y) && truth(x, y) != 0;
  };
  for (const auto& p : pairs) {
    ++t.pairs;
    if (inside(ds[p.a].keypoint) && inside(ds[p.b].keypoint)) ++t.in_truth;
  }
  return t;
}

// Stable per-image noise seed so results do not depend on scheduling.
inline std::uint64_t item_seed(std::uint64_t base, const std::string& id) {
  std::uint64_t h = 1469598103934665603ull ^ base;
  for (unsigned char c : id) h = (h ^ c) * 1099511628211ull;
  return h;
}

}  // namespace detail

/// Scores one image (already attacked) against its truth mask.
inline EvalRecord evaluate(const GrayImage& img, const BinaryMask& truth, const PipelineConfig& cfg) {
  if (img.width() != truth.width() || img.height() != truth.height())
    throw ArgumentError("image and mask differ in size");
  PipelineTrace trace;
  auto res = run_pipeline(img, cfg, &trace);
  EvalRecord r;
  r.score = score(res.mask, truth);
  r.word = detail::tally(trace.word_pairs, trace.descriptors, truth);
  r.phrase = detail::tally(trace.phrase_pairs, trace.descriptors, truth);
  r.report = std::move(res.report);
  return r;
}

inline std::vector<Aggregate> aggregate(std::span<const EvalRecord> records) {
  std::map<std::pair<std::string, std::string>, Aggregate> groups;
  std::vector<std::pair<std::string, std::string>> order;
  for (const auto& r : records) {
    const auto key = std::make_pair(r.variant, r.attack);
    auto [it, fresh] = groups.try_emplace(key);
    if (fresh) order.push_back(key);
    Aggregate& a = it->second;
    a.variant = r.variant;
    a.attack = r.attack;
    ++a.images;
    a.precision += r.score.precision;
    a.recall += r.score.recall;
    a.f1 += r.score.f1;
    a.word_pairs += r.word.pairs;
    a.word_in_truth += r.word.in_truth;
    a.phrase_pairs += r.phrase.pairs;
    a.phrase_in_truth += r.phrase.in_truth;
    a.seconds += r.report.total_seconds();
    for (const auto& t : r.report.timings) a.stage_seconds[t.stage] += t.seconds;
  }
  std::vector<Aggregate> out;
  for (const auto& key : order) {
    Aggregate a = groups[key];
    const double n = static_cast<double>(a.images);
    a.precision /= n;
    a.recall /= n;
    a.f1 /= n;
    a.seconds /= n;
    for (auto& [stage, s] : a.stage_seconds) s /= n;
    a.word_purity = PairTally{a.word_pairs, a.word_in_truth}.purity();
    a.phrase_purity = PairTally{a.phrase_pairs, a.phrase_in_truth}.purity();
    out.push_back(std::move(a));
  }
  return out;
}

/// Runs every (variant, attack, image) job on a worker pool. Noise and JPEG attacks hit the
/// whole image; scaling and rotation transform image and mask together. Images that fail to
/// load or mismatch their mask become warnings.
inline BenchmarkResult run_benchmark(const DatasetListing& data, const PipelineConfig& config,
                                     BenchmarkOptions opts = {}) {
  if (opts.variants.empty()) opts.variants.push_back({"default", config});
  for (const auto& v : opts.variants) v.config.validate();
  std::vector<std::optional<Attack>> attacks;
  if (opts.attacks.empty()) attacks.push_back(std::nullopt);
  for (const auto& a : opts.attacks) attacks.push_back(a);

  struct Job {
    const Variant* variant;
    const std::optional<Attack>* attack;
    const DatasetItem* item;
  };
  std::vector<Job> jobs;
  for (const auto& v : opts.variants)
    for (const auto& a : attacks)
      for (const auto& it : data.items) jobs.push_back({&v, &a, &it});

  BenchmarkResult out;
  out.warnings = data.warnings;
  std::mutex mu;
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t j; (j = next.fetch_add(1)) < jobs.size();) {
      const Job& job = jobs[j];
      try {
        GrayImage img = load_image(job.item->image);
        BinaryMask truth = load_mask(job.item->mask);
        std::string label = "none";
        if (*job.attack) {
          Attack a = **job.attack;
          a.seed = detail::item_seed(a.seed ^ job.variant->config.seed, job.item->id);
          img = apply_attack(img, a);
          truth = apply_attack(truth, a);
          label = a.label();
        }
        EvalRecord r = evaluate(img, truth, job.variant->config);
        r.id = job.item->id;
        r.variant = job.variant->name;
        r.attack = label;
        std::lock_guard lock(mu);
        if (opts.on_record) opts.on_record(r);
        out.records.push_back(std::move(r));
      } catch (const Error& e) {
        std::lock_guard lock(mu);
        out.warnings.push_back(job.item->id + ": " + e.what());
      }
    }
  };
  unsigned n = opts.threads ? opts.threads : std::max(1u, std::thread::hardware_concurrency());
  n = static_cast<unsigned>(std::min<std::size_t>(n, std::max<std::size_t>(jobs.size(), 1)));
  std::vector<std::jthread> pool;
  for (unsigned i = 1; i < n; ++i) pool.emplace_back(work);
  work();
  pool.clear();

  // Records come back in completion order; restore the job order.
  std::map<std::string, std::size_t> vrank, arank;
  for (std::size_t i = 0; i < opts.variants.size(); ++i) vrank.try_emplace(opts.variants[i].name, i);
  for (std::size_t i = 0; i < attacks.size(); ++i) arank.try_emplace(attacks[i] ? attacks[i]->label() : "none", i);
  std::sort(out.records.begin(), out.records.end(), [&](const EvalRecord& a, const EvalRecord& b) {
    return std::tie(vrank[a.variant], arank[a.attack], a.id) < std::tie(vrank[b.variant], arank[b.attack], b.id);
  });
  std::sort(out.warnings.begin(), out.warnings.end());
  out.aggregates = aggregate(out.records);
  return out;
}

inline const std::vector<std::string>& csv_stages() {
  static const std::vector<std::string> s{"keypoints", "word", "phrase", "localization"};
  return s;
}

/// One row per record.
inline void write_csv(std::ostream& os, const BenchmarkResult& r) {
  os << "id,variant,attack,precision,recall,f1,tp,fp,fn,keypoints,word_pairs,word_in_truth,"
        "phrase_pairs,phrase_in_truth,clusters,stopped_at";
  for (const auto& s : csv_stages()) os << ",seconds_" << s;
  os << ",seconds_total\n";
  auto num = [](double v) { return detail::format_double(v); };
  for (const auto& e : r.records) {
    os << e.id << ',' << e.variant << ',' << e.attack << ',' << num(e.score.precision) << ','
       << num(e.score.recall) << ',' << num(e.score.f1) << ',' << e.score.tp << ',' << e.score.fp << ','
       << e.score.fn << ',' << e.report.keypoints << ',' << e.word.pairs << ',' << e.word.in_truth << ','
       << e.phrase.pairs << ',' << e.phrase.in_truth << ',' << e.report.clusters.size() << ','
       << e.report.stopped_at;
    for (const auto& s : csv_stages()) os << ',' << num(e.report.seconds(s));
    os << ',' << num(e.report.total_seconds()) << '\n';
  }
}

inline nlohmann::json to_json(const Aggregate& a) {
  return {{"variant", a.variant},
          {"attack", a.attack},
          {"images", a.images},
          {"precision", a.precision},
          {"recall", a.recall},
          {"f1", a.f1},
          {"word_pairs", a.word_pairs},
          {"word_purity", a.word_purity},
          {"phrase_pairs", a.phrase_pairs},
          {"phrase_purity", a.phrase_purity},
          {"seconds_per_image", a.seconds},
          {"stage_seconds", a.stage_seconds}};
}

inline nlohmann::json versions_json() {
  return {{"cmfd", kVersion}, {"opencv", CV_VERSION}, {"compiler", __VERSION__}};
}

/// Aggregates per (variant, attack), per-image scores, warnings, the configuration and versions.
inline nlohmann::json to_json(const BenchmarkResult& r, const PipelineConfig& config) {
  nlohmann::json j;
  j["versions"] = versions_json();
  j["config"] = to_json(config);
  j["aggregates"] = nlohmann::json::array();
  for (const auto& a : r.aggregates) j["aggregates"].push_back(to_json(a));
  j["images"] = nlohmann::json::array();
  for (const auto& e : r.records)
    j["images"].push_back({{"id", e.id},
                           {"variant", e.variant},
                           {"attack", e.attack},
                           {"precision", e.score.precision},
                           {"recall", e.score.recall},
                           {"f1", e.score.f1},
                           {"report", to_json(e.report)}});
  j["warnings"] = r.warnings;
  return j;
}

}  // namespace cmfd
