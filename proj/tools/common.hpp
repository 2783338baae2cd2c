#pragma once

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cmfd/pipeline.hpp"

namespace cmfd::tools {

/// Config file first, then KEY=VALUE overrides in order.
inline PipelineConfig make_config(const std::string& file, const std::vector<std::string>& overrides) {
  PipelineConfig cfg = file.empty() ? PipelineConfig{} : load_config(file);
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ArgumentError("--set expects KEY=VALUE, got " + o);
    set_config_value(cfg, o.substr(0, eq), o.substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

template <typename F>
int guarded(F&& body) {
  try {
    return body();
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace cmfd::tools
