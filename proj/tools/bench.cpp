#include <cstdio>
#include <fstream>
#include <iostream>

#include "common.hpp"
#include "cmfd/benchmark.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Score the detector on a dataset (images/*.png with masks/<stem>.png)"};
  std::string dir, config, nn, ablate, csv = "bench.csv", json = "bench.json";
  std::vector<std::string> overrides, attack_args;
  bool free_params = false, quiet = false;
  unsigned threads = 0;
  app.add_option("dataset", dir, "dataset directory")->required()->check(CLI::ExistingDirectory);
  app.add_option("--config", config, "key=value configuration file")->check(CLI::ExistingFile);
  app.add_option("--set", overrides, "override one setting, KEY=VALUE (repeatable)");
  app.add_option("--attack", attack_args,
                 "whole-image attack NAME=VALUES, e.g. jpeg=100:-10:20 or scale=0.8 (repeatable)");
  app.add_flag("--free-params", free_params, "accept attack values outside the protocol lists");
  app.add_option("--nn-strategy", nn, "word-level neighbour test: 2nn, g2nn, rg2nn or i2nn");
  app.add_option("--ablate", ablate, "run the variants of one ablation")
      ->check(CLI::IsMember({"nn", "phrase", "fusion"}));
  app.add_option("--threads", threads, "worker threads (default: all cores)");
  app.add_option("--csv", csv, "per-image CSV report")->capture_default_str();
  app.add_option("--json", json, "aggregate JSON report")->capture_default_str();
  app.add_flag("-q,--quiet", quiet, "no per-image progress lines");
  CLI11_PARSE(app, argc, argv);

  return cmfd::tools::guarded([&] {
    auto cfg = cmfd::tools::make_config(config, overrides);
    if (!nn.empty()) cfg.word.strategy = cmfd::parse_strategy(nn);
    cmfd::BenchmarkOptions opts;
    opts.threads = threads;
    for (const auto& a : attack_args)
      for (auto& x : cmfd::parse_attacks(a, !free_params)) {
        x.seed = cfg.seed;
        opts.attacks.push_back(x);
      }
    if (!ablate.empty()) opts.variants = cmfd::ablation_variants(cfg, ablate);
    if (!quiet)
      opts.on_record = [](const cmfd::EvalRecord& r) {
        std::fprintf(stderr, "  %-24s %-8s %-12s F1 %.3f  (%.2f s)\n", r.id.c_str(), r.variant.c_str(),
                     r.attack.c_str(), r.score.f1, r.report.total_seconds());
      };

    const auto listing = cmfd::list_dataset(dir);
    const auto result = cmfd::run_benchmark(listing, cfg, opts);
    for (const auto& w : result.warnings) std::cerr << "warning: " << w << '\n';

    std::ofstream c(csv);
    if (!c) throw cmfd::IoError("cannot write " + csv);
    cmfd::write_csv(c, result);
    std::ofstream j(json);
    if (!j) throw cmfd::IoError("cannot write " + json);
    j << cmfd::to_json(result, cfg).dump(2) << '\n';

    std::printf("%-10s %-14s %6s %9s %7s %7s %12s %12s %9s\n", "variant", "attack", "images", "precision", "recall",
                "f1", "word_purity", "phr_purity", "s/image");
    for (const auto& a : result.aggregates)
      std::printf("%-10s %-14s %6zu %9.4f %7.4f %7.4f %12.4f %12.4f %9.3f\n", a.variant.c_str(), a.attack.c_str(),
                  a.images, a.precision, a.recall, a.f1, a.word_purity, a.phrase_purity, a.seconds);
    if (result.aggregates.empty()) std::printf("(no images scored)\n");
    return 0;
  });
}
