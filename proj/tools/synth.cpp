#include <iostream>

#include "common.hpp"
#include "cmfd/synthetic.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Write a synthetic copy-move dataset (images/*.png, masks/*.png)"};
  std::string dir, corpus = "benchmark";
  std::size_t count = 0;
  std::uint64_t seed = 0;
  app.add_option("dir", dir, "output dataset directory")->required();
  app.add_option("--corpus", corpus, "benchmark, clean or multi")->capture_default_str()
      ->check(CLI::IsMember({"benchmark", "clean", "multi"}));
  app.add_option("--count", count, "number of images for clean/multi (default 5/50)");
  app.add_option("--seed", seed, "base seed (default per corpus)");
  CLI11_PARSE(app, argc, argv);

  return cmfd::tools::guarded([&] {
    std::vector<cmfd::SyntheticSpec> specs;
    if (corpus == "benchmark") specs = seed ? cmfd::benchmark_corpus_specs(seed) : cmfd::benchmark_corpus_specs();
    else if (corpus == "clean") specs = cmfd::clean_corpus_specs(count ? count : 5, seed ? seed : 5000);
    else specs = cmfd::multi_forgery_corpus_specs(count ? count : 50, seed ? seed : 9000);
    std::vector<cmfd::SyntheticImage> images;
    for (const auto& s : specs) images.push_back(cmfd::synthesize(s));
    cmfd::write_dataset(dir, images);
    std::cout << "wrote " << images.size() << " images to " << dir << '\n';
    return 0;
  });
}
