#pragma once

#include <charconv>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cmfd/descriptor.hpp"
#include "cmfd/errors.hpp"
#include "cmfd/io.hpp"
#include "cmfd/keypoints.hpp"
#include "cmfd/localization.hpp"
#include "cmfd/matching.hpp"
#include "cmfd/phrase.hpp"

namespace cmfd {

inline constexpr const char* kVersion = "0.1.0";

/// Every tunable of the detector. Values marked "frame" are in pixels of the normalized
/// frame (long edge = detector.normalization_target) and are rescaled to the input image
/// at run time; everything else is in input-image pixels or dimensionless.
struct PipelineConfig {
  DetectorConfig detector;
  DescriptorConfig descriptor;
  MatchConfig word;  // spatial_threshold: frame
  MatchConfig phrase{.phase_verify = false};  // spatial_threshold: frame
  bool phrase_level = true;  // false localizes straight from the word-level matches
  int side_words = 3;
  double saliency_t_sigma = 0.001;  // frame
  bool geometric_filter = true;
  GeometricFilterConfig geometric;
  ClusterConfig cluster;
  ContentFilterConfig content;
  RoiConfig roi;  // dilation, t_sigma, t_nor: frame
  FusionConfig fusion;
  std::uint64_t seed = 0;

  void validate() const {
    detector.validate();
    descriptor.validate();
    word.validate();
    phrase.validate();
    if (side_words < 1) throw ArgumentError("side_words must be >= 1");
    if (!(saliency_t_sigma > 0.0)) throw ArgumentError("saliency T_sigma must be > 0");
    if (!(roi.t_sigma > 0.0) || !(roi.t_nor > 0.0)) throw ArgumentError("ROI T_sigma and T_nor must be > 0");
    if (roi.multiplier < 0.0 || roi.dilation < 0.0) throw ArgumentError("negative ROI parameter");
    if (cluster.min_cluster_size < 3) throw ArgumentError("min cluster size must be >= 3");
    if (content.patch_size < 2) throw ArgumentError("content patch must be >= 2");
    const auto& r = cluster.ransac;
    if (!(r.threshold > 0.0) || r.max_iterations < 1 || !(r.confidence > 0.0 && r.confidence < 1.0))
      throw ArgumentError("bad RANSAC parameters");
  }

  /// Copy with frame-unit values converted for an image normalized by factor `s`.
  PipelineConfig in_image_units(double s) const {
    if (!(s > 0.0)) throw ArgumentError("scale factor must be > 0");
    PipelineConfig c = *this;
    c.word.spatial_threshold = word.spatial_threshold / s;
    c.phrase.spatial_threshold = phrase.spatial_threshold / s;
    c.saliency_t_sigma = saliency_t_sigma * s * s;
    c.roi.dilation = roi.dilation / s;
    c.roi.t_sigma = roi.t_sigma * s * s;
    c.roi.t_nor = roi.t_nor / (s * s);
    c.cluster.ransac.seed = seed;
    return c;
  }
};

namespace detail {

// Shortest text that reads back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline double parse_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw ArgumentError("config " + key + ": not a number: " + v);
  return out;
}

inline long long parse_integer(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  long long out = 0;
  try {
    out = std::stoll(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw ArgumentError("config " + key + ": not an integer: " + v);
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw ArgumentError("config " + key + ": not a boolean: " + v);
}

struct ConfigField {
  std::string key;
  std::function<std::string(const PipelineConfig&)> get;
  std::function<void(PipelineConfig&, const std::string&)> set;
};

template <class T>
ConfigField real_field(std::string key, T PipelineConfig::*outer, double T::*inner) {
  return {key, [=](const PipelineConfig& c) { return format_double(c.*outer.*inner); },
          [=](PipelineConfig& c, const std::string& v) { c.*outer.*inner = parse_double(key, v); }};
}

template <class T, class I>
ConfigField int_field(std::string key, T PipelineConfig::*outer, I T::*inner) {
  return {key, [=](const PipelineConfig& c) { return std::to_string(c.*outer.*inner); },
          [=](PipelineConfig& c, const std::string& v) {
            const long long x = parse_integer(key, v);
            if (std::is_unsigned_v<I> && x < 0) throw ArgumentError("config " + key + ": must be >= 0");
            c.*outer.*inner = static_cast<I>(x);
          }};
}

template <class T>
ConfigField bool_field(std::string key, T PipelineConfig::*outer, bool T::*inner) {
  return {key, [=](const PipelineConfig& c) { return std::string(c.*outer.*inner ? "true" : "false"); },
          [=](PipelineConfig& c, const std::string& v) { c.*outer.*inner = parse_bool(key, v); }};
}

inline void add_match_fields(std::vector<ConfigField>& f, const std::string& p, MatchConfig PipelineConfig::*m,
                             bool with_phase) {
  f.push_back(real_field(p + ".ratio_threshold", m, &MatchConfig::ratio_threshold));
  f.push_back(real_field(p + ".absolute_threshold", m, &MatchConfig::absolute_threshold));
  f.push_back(real_field(p + ".spatial_threshold", m, &MatchConfig::spatial_threshold));
  const std::string key = p + ".strategy";
  f.push_back({key, [=](const PipelineConfig& c) { return std::string(to_string((c.*m).strategy)); },
               [=](PipelineConfig& c, const std::string& v) { (c.*m).strategy = parse_strategy(v); }});
  f.push_back(int_field(p + ".n_neighbors", m, &MatchConfig::n_neighbors));
  if (with_phase) {
    f.push_back(bool_field(p + ".phase_verify", m, &MatchConfig::phase_verify));
    f.push_back(real_field(p + ".phase_consistency_min", m, &MatchConfig::phase_consistency_min));
  }
  f.push_back(bool_field(p + ".standardize", m, &MatchConfig::standardize));
}

inline const std::vector<ConfigField>& config_fields() {
  static const std::vector<ConfigField> fields = [] {
    using C = PipelineConfig;
    std::vector<ConfigField> f;
    f.push_back({"seed", [](const C& c) { return std::to_string(c.seed); },
                 [](C& c, const std::string& v) {
                   const long long s = parse_integer("seed", v);
                   if (s < 0) throw ArgumentError("config seed: must be >= 0");
                   c.seed = static_cast<std::uint64_t>(s);
                 }});

    f.push_back(int_field("detector.normalization_target", &C::detector, &DetectorConfig::normalization_target));
    f.push_back(real_field("detector.contrast_threshold", &C::detector, &DetectorConfig::contrast_threshold));
    f.push_back({"detector.octaves",
                 [](const C& c) { return c.detector.octaves ? std::to_string(*c.detector.octaves) : std::string("auto"); },
                 [](C& c, const std::string& v) {
                   if (v == "auto") c.detector.octaves.reset();
                   else c.detector.octaves = static_cast<int>(parse_integer("detector.octaves", v));
                 }});
    f.push_back(int_field("detector.scales_per_octave", &C::detector, &DetectorConfig::scales_per_octave));
    f.push_back(real_field("detector.edge_response_threshold", &C::detector, &DetectorConfig::edge_response_threshold));
    f.push_back(real_field("detector.base_sigma", &C::detector, &DetectorConfig::base_sigma));

    f.push_back(int_field("descriptor.n_max", &C::descriptor, &DescriptorConfig::n_max));
    f.push_back(int_field("descriptor.m_max", &C::descriptor, &DescriptorConfig::m_max));
    f.push_back(real_field("descriptor.patch_radius_multiplier", &C::descriptor,
                           &DescriptorConfig::patch_radius_multiplier));
    f.push_back(int_field("descriptor.resample_size", &C::descriptor, &DescriptorConfig::resample_size));
    f.push_back(bool_field("descriptor.zero_mean", &C::descriptor, &DescriptorConfig::zero_mean));
    f.push_back(real_field("descriptor.smoothing", &C::descriptor, &DescriptorConfig::smoothing));
    f.push_back(real_field("descriptor.min_smoothing", &C::descriptor, &DescriptorConfig::min_smoothing));
    f.push_back(real_field("descriptor.min_scale", &C::descriptor, &DescriptorConfig::min_scale));

    add_match_fields(f, "word", &C::word, true);
    f.push_back({"phrase.enabled", [](const C& c) { return std::string(c.phrase_level ? "true" : "false"); },
                 [](C& c, const std::string& v) { c.phrase_level = parse_bool("phrase.enabled", v); }});
    f.push_back({"phrase.side_words", [](const C& c) { return std::to_string(c.side_words); },
                 [](C& c, const std::string& v) { c.side_words = static_cast<int>(parse_integer("phrase.side_words", v)); }});
    f.push_back({"phrase.t_sigma", [](const C& c) { return format_double(c.saliency_t_sigma); },
                 [](C& c, const std::string& v) { c.saliency_t_sigma = parse_double("phrase.t_sigma", v); }});
    add_match_fields(f, "phrase", &C::phrase, false);

    f.push_back({"geometric.enabled", [](const C& c) { return std::string(c.geometric_filter ? "true" : "false"); },
                 [](C& c, const std::string& v) { c.geometric_filter = parse_bool("geometric.enabled", v); }});
    f.push_back(int_field("geometric.neighbors", &C::geometric, &GeometricFilterConfig::neighbors));
    f.push_back(real_field("geometric.tolerance", &C::geometric, &GeometricFilterConfig::tolerance));
    f.push_back(real_field("geometric.relative_tolerance", &C::geometric, &GeometricFilterConfig::relative_tolerance));
    f.push_back(real_field("geometric.max_scale_ratio", &C::geometric, &GeometricFilterConfig::max_scale_ratio));

    f.push_back(real_field("cluster.translation_fraction", &C::cluster, &ClusterConfig::translation_fraction));
    f.push_back(real_field("cluster.log_scale", &C::cluster, &ClusterConfig::log_scale));
    f.push_back(real_field("cluster.angle", &C::cluster, &ClusterConfig::angle));
    f.push_back(int_field("cluster.min_size", &C::cluster, &ClusterConfig::min_cluster_size));
    f.push_back({"ransac.threshold", [](const C& c) { return format_double(c.cluster.ransac.threshold); },
                 [](C& c, const std::string& v) { c.cluster.ransac.threshold = parse_double("ransac.threshold", v); }});
    f.push_back({"ransac.max_iterations", [](const C& c) { return std::to_string(c.cluster.ransac.max_iterations); },
                 [](C& c, const std::string& v) {
                   c.cluster.ransac.max_iterations = static_cast<int>(parse_integer("ransac.max_iterations", v));
                 }});
    f.push_back({"ransac.confidence", [](const C& c) { return format_double(c.cluster.ransac.confidence); },
                 [](C& c, const std::string& v) { c.cluster.ransac.confidence = parse_double("ransac.confidence", v); }});

    f.push_back(int_field("content.patch_size", &C::content, &ContentFilterConfig::patch_size));
    f.push_back(real_field("content.min_zncc", &C::content, &ContentFilterConfig::min_zncc));

    f.push_back(real_field("roi.multiplier", &C::roi, &RoiConfig::multiplier));
    f.push_back(real_field("roi.dilation", &C::roi, &RoiConfig::dilation));
    f.push_back(real_field("roi.t_sigma", &C::roi, &RoiConfig::t_sigma));
    f.push_back(real_field("roi.t_nor", &C::roi, &RoiConfig::t_nor));

    f.push_back(real_field("fusion.t_cor", &C::fusion, &FusionConfig::t_cor));
    f.push_back({"fusion.mode", [](const C& c) { return std::string(to_string(c.fusion.mode)); },
                 [](C& c, const std::string& v) {
                   if (v == "fusion") c.fusion.mode = FusionMode::Fusion;
                   else if (v == "ssim") c.fusion.mode = FusionMode::SsimOnly;
                   else if (v == "roi") c.fusion.mode = FusionMode::RoiOnly;
                   else throw ArgumentError("config fusion.mode: expected fusion, ssim or roi");
                 }});
    f.push_back(real_field("fusion.min_component_fraction", &C::fusion, &FusionConfig::min_component_fraction));
    f.push_back(real_field("fusion.closing_radius", &C::fusion, &FusionConfig::closing_radius));
    return f;
  }();
  return fields;
}

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

/// Sets one value by its config key.
inline void set_config_value(PipelineConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& f : detail::config_fields())
    if (f.key == key) return f.set(cfg, value);
  throw ArgumentError("unknown config key: " + key);
}

/// Ordered key/value view of the whole configuration.
inline std::vector<std::pair<std::string, std::string>> config_entries(const PipelineConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& f : detail::config_fields()) out.emplace_back(f.key, f.get(cfg));
  return out;
}

/// `key = value` lines; `#` starts a comment. Keys not mentioned keep their defaults.
inline PipelineConfig parse_config(std::istream& in) {
  PipelineConfig cfg;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ArgumentError("config line " + std::to_string(number) + ": expected key = value");
    set_config_value(cfg, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
  cfg.validate();
  return cfg;
}

inline PipelineConfig parse_config(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path.string());
  return parse_config(in);
}

inline std::string write_config(const PipelineConfig& cfg) {
  std::string out;
  for (const auto& [k, v] : config_entries(cfg)) out += k + " = " + v + "\n";
  return out;
}

struct StageTime {
  std::string stage;
  double seconds = 0.0;
};

struct ClusterSummary {
  std::size_t pairs = 0;
  std::size_t inliers = 0;
  Affine affine;
};

struct PipelineReport {
  int width = 0, height = 0;
  double scale = 1.0;
  std::size_t keypoints = 0;
  std::size_t descriptors = 0;
  std::size_t word_pairs = 0;
  std::size_t words = 0;
  std::size_t phrase_pairs = 0;
  std::size_t filtered_pairs = 0;
  std::size_t clusters_before_content = 0;
  std::vector<ClusterSummary> clusters;
  std::size_t mask_area = 0;
  /// Stage whose empty result ended the run early; empty when every stage ran.
  std::string stopped_at;
  std::vector<StageTime> timings;

  double seconds(const std::string& stage) const {
    for (const auto& t : timings)
      if (t.stage == stage) return t.seconds;
    return 0.0;
  }
  double total_seconds() const {
    double s = 0.0;
    for (const auto& t : timings) s += t.seconds;
    return s;
  }
};

/// Everything computed along the way, for debugging and ablations.
struct PipelineTrace {
  std::vector<Keypoint> keypoints;
  std::vector<Descriptor> descriptors;
  std::vector<MatchPair> word_pairs;   // indices into descriptors
  std::vector<MatchPair> phrase_pairs; // indices into descriptors
  std::vector<MatchPair> filtered_pairs;
  std::vector<Cluster> clusters;
  SaliencyMap saliency;
  RoiHeatMap roi;
  Field fused;
};

struct PipelineResult {
  BinaryMask mask;
  PipelineReport report;
};

namespace detail {

class StageClock {
 public:
  explicit StageClock(PipelineReport& r) : report_(r) {}
  template <class F>
  auto run(const std::string& stage, F&& f) {
    const auto t0 = std::chrono::steady_clock::now();
    auto record = [&] {
      report_.timings.push_back({stage, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()});
    };
    try {
      if constexpr (std::is_void_v<decltype(f())>) {
        f();
        record();
      } else {
        auto out = f();
        record();
        return out;
      }
    } catch (const StageError&) {
      throw;
    } catch (const Error& e) {
      throw StageError(stage, e.what());
    }
  }

 private:
  PipelineReport& report_;
};

}  // namespace detail

/// Keypoints, word-level matching, phrase-level matching and localization. An empty
/// intermediate result ends the run with an all-zero mask and `report.stopped_at` set.
/// Module errors are rethrown as StageError naming the stage.
inline PipelineResult run_pipeline(const GrayImage& img, const PipelineConfig& config,
                                   PipelineTrace* trace = nullptr) {
  config.validate();
  PipelineResult res{BinaryMask(img.width(), img.height()), {}};
  PipelineReport& rep = res.report;
  rep.width = img.width();
  rep.height = img.height();
  rep.scale = scale_factor(img.height(), img.width(), config.detector.normalization_target);
  const PipelineConfig cfg = config.in_image_units(rep.scale);
  PipelineTrace local;
  PipelineTrace& t = trace ? *trace : local;
  detail::StageClock clock(rep);
  auto stop = [&](const char* stage) {
    rep.stopped_at = stage;
    return res;
  };

  t.keypoints = clock.run("keypoints", [&] { return detect_keypoints(img, cfg.detector); });
  rep.keypoints = t.keypoints.size();
  if (t.keypoints.empty()) return stop("keypoints");

  FeatureMatrix word_rows;
  clock.run("word", [&] {
    const MomentDescriber describer(cfg.descriptor);
    t.descriptors = describer.describe_all(img, t.keypoints);
    t.word_pairs = match_word_level(t.descriptors, cfg.word);
    if (!t.descriptors.empty()) word_rows = word_features(t.descriptors, cfg.word.standardize);
  });
  rep.descriptors = t.descriptors.size();
  rep.word_pairs = t.word_pairs.size();
  if (t.word_pairs.empty()) return stop("word");

  if (cfg.phrase_level) {
    clock.run("phrase", [&] {
      const auto words = matched_words(t.word_pairs, t.descriptors, word_rows);
      rep.words = words.size();
      t.phrase_pairs.clear();
      if (words.size() <= static_cast<std::size_t>(cfg.side_words)) return;
      const auto phrases = build_phrases(words, static_cast<std::size_t>(cfg.side_words));
      std::vector<std::vector<double>> pooled;
      std::vector<Keypoint> centres;
      pooled.reserve(phrases.size());
      centres.reserve(phrases.size());
      for (const auto& ph : phrases) {
        pooled.push_back(pool_phrase(ph, words));
        centres.push_back(words[ph.central].keypoint);
      }
      t.saliency = saliency_map(img, cfg.saliency_t_sigma);
      const auto weighted = weight_features(pooled, centres, t.saliency);
      for (const auto& p : match_phrase_level(weighted, centres, cfg.phrase))
        t.phrase_pairs.push_back({words[p.a].source, words[p.b].source, p.distance});
    });
  } else {
    t.phrase_pairs = t.word_pairs;
  }
  rep.phrase_pairs = t.phrase_pairs.size();
  if (t.phrase_pairs.empty()) return stop("phrase");

  clock.run("localization", [&] {
    std::vector<Keypoint> kps;
    kps.reserve(t.descriptors.size());
    for (const auto& d : t.descriptors) kps.push_back(d.keypoint);
    t.filtered_pairs = cfg.geometric_filter ? filter_geometric(t.phrase_pairs, kps, cfg.geometric) : t.phrase_pairs;
    rep.filtered_pairs = t.filtered_pairs.size();
    auto clusters = cluster_pairs(t.filtered_pairs, t.descriptors, img.width(), img.height(), cfg.cluster);
    rep.clusters_before_content = clusters.size();
    ContentFilterConfig content = cfg.content;
    content.min_cluster_size = cfg.cluster.min_cluster_size;
    t.clusters = filter_content(clusters, img, kps, content);
    for (const auto& c : t.clusters) rep.clusters.push_back({c.pairs.size(), c.inlier_count, c.affine});
    if (t.clusters.empty()) return;

    std::vector<Keypoint> matched;
    for (const auto& p : t.phrase_pairs) {
      matched.push_back(kps[p.a]);
      matched.push_back(kps[p.b]);
    }
    t.roi = roi_heat_map(matched, img.width(), img.height(), cfg.roi);
    res.mask = fuse_and_localize(t.clusters, img, t.roi, cfg.fusion, &t.fused);
  });
  if (t.clusters.empty()) return stop("localization");
  rep.mask_area = count_nonzero(res.mask);
  return res;
}

inline nlohmann::json to_json(const Affine& a) {
  return nlohmann::json::array({a.m[0], a.m[1], a.m[2], a.m[3], a.m[4], a.m[5]});
}

inline nlohmann::json to_json(const PipelineReport& r) {
  nlohmann::json j;
  j["width"] = r.width;
  j["height"] = r.height;
  j["scale"] = r.scale;
  j["counts"] = {{"keypoints", r.keypoints},       {"descriptors", r.descriptors},
                 {"word_pairs", r.word_pairs},     {"words", r.words},
                 {"phrase_pairs", r.phrase_pairs}, {"filtered_pairs", r.filtered_pairs},
                 {"clusters_before_content", r.clusters_before_content}, {"clusters", r.clusters.size()},
                 {"mask_area", r.mask_area}};
  auto& cl = j["clusters"] = nlohmann::json::array();
  for (const auto& c : r.clusters) cl.push_back({{"pairs", c.pairs}, {"inliers", c.inliers}, {"affine", to_json(c.affine)}});
  auto& tm = j["timing_seconds"] = nlohmann::json::object();
  for (const auto& s : r.timings) tm[s.stage] = s.seconds;
  j["stopped_at"] = r.stopped_at.empty() ? nlohmann::json(nullptr) : nlohmann::json(r.stopped_at);
  return j;
}

inline nlohmann::json to_json(const PipelineConfig& cfg) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : config_entries(cfg)) j[k] = v;
  return j;
}

/// Writes the intermediate fields of a run as PNGs into `dir`.
inline void dump_trace(const PipelineTrace& t, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  if (!t.saliency.edge.empty()) save_field(t.saliency.edge, dir / "edge.png");
  if (!t.saliency.heat.empty()) save_field(t.saliency.heat, dir / "heat.png");
  if (!t.saliency.weight.empty()) save_field(t.saliency.weight, dir / "weight.png");
  if (!t.roi.normalized.empty()) detail::write_mat(to_mat8(t.roi.normalized), dir / "roi.png");
  if (!t.fused.empty()) detail::write_mat(to_mat8(t.fused), dir / "fused.png");
  std::ofstream pairs(dir / "pairs.csv");
  if (!pairs) throw IoError("cannot write " + (dir / "pairs.csv").string());
  pairs << "stage,ax,ay,asigma,bx,by,bsigma,distance\n";
  auto emit = [&](const char* stage, const std::vector<MatchPair>& ps) {
    for (const auto& p : ps) {
      const Keypoint& a = t.descriptors[p.a].keypoint;
      const Keypoint& b = t.descriptors[p.b].keypoint;
      pairs << stage << ',' << a.x << ',' << a.y << ',' << a.sigma << ',' << b.x << ',' << b.y << ',' << b.sigma
            << ',' << p.distance << '\n';
    }
  };
  emit("word", t.word_pairs);
  emit("phrase", t.phrase_pairs);
  emit("filtered", t.filtered_pairs);
}

}  // namespace cmfd
