#pragma once

#include <stdexcept>
#include <string>

namespace cmfd {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// File could not be opened or read.
struct IoError : Error {
  using Error::Error;
};

/// File was readable but not a decodable raster.
struct FormatError : Error {
  using Error::Error;
};

struct ArgumentError : Error {
  using Error::Error;
};

/// A keypoint region could not be described (e.g. entirely off-image).
struct DescribeError : Error {
  using Error::Error;
};

/// Transform estimation failed: too few or degenerate correspondences.
struct EstimationError : Error {
  using Error::Error;
};

/// Wraps a module error with the name of the pipeline stage that raised it.
struct StageError : Error {
  StageError(std::string stage_name, const std::string& what)
      : Error(stage_name + ": " + what), stage(std::move(stage_name)) {}
  std::string stage;
};

}  // namespace cmfd
