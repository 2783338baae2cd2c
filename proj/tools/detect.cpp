#include <fstream>
#include <iostream>

#include "common.hpp"
#include "cmfd/io.hpp"
#include "cmfd/pipeline.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Detect copy-move forgery in one image"};
  std::string image, config, out, report, debug;
  std::vector<std::string> overrides;
  bool print_config = false;
  app.add_option("image", image, "input image")->required()->check(CLI::ExistingFile);
  app.add_option("--config", config, "key=value configuration file")->check(CLI::ExistingFile);
  app.add_option("--set", overrides, "override one setting, KEY=VALUE (repeatable)");
  app.add_option("--out", out, "write the detection mask (PNG, 0/255)");
  app.add_option("--report", report, "write a JSON report");
  app.add_option("--dump-debug", debug, "write intermediate maps and matched pairs to this directory");
  app.add_flag("--print-config", print_config, "print the effective configuration and exit");
  CLI11_PARSE(app, argc, argv);

  return cmfd::tools::guarded([&] {
    const auto cfg = cmfd::tools::make_config(config, overrides);
    if (print_config) {
      std::cout << cmfd::write_config(cfg);
      return 0;
    }
    const auto img = cmfd::load_image(image);
    cmfd::PipelineTrace trace;
    const auto res = cmfd::run_pipeline(img, cfg, debug.empty() ? nullptr : &trace);
    if (!out.empty()) cmfd::save_mask(res.mask, out);
    if (!debug.empty()) cmfd::dump_trace(trace, debug);
    nlohmann::json j = cmfd::to_json(res.report);
    j["image"] = image;
    j["forged"] = res.report.mask_area > 0;
    j["config"] = cmfd::to_json(cfg);
    j["version"] = cmfd::kVersion;
    if (!report.empty()) {
      std::ofstream f(report);
      if (!f) throw cmfd::IoError("cannot write " + report);
      f << j.dump(2) << '\n';
    }
    const auto& r = res.report;
    std::cout << image << ": " << (r.mask_area ? "forged" : "no forgery found") << ", " << r.mask_area
              << " px flagged, " << r.clusters.size() << " cluster(s), " << r.keypoints << " keypoints, "
              << r.word_pairs << " word / " << r.phrase_pairs << " phrase pairs, " << r.total_seconds() << " s";
    if (!r.stopped_at.empty()) std::cout << " (stopped after " << r.stopped_at << ")";
    std::cout << '\n';
    return 0;
  });
}
