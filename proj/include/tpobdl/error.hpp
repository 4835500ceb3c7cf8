#pragma once

#include <stdexcept>
#include <string>

namespace tpobdl {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File could not be opened, parsed, or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Two rasters that must agree in size do not.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Clustering produced a result the pipeline cannot continue from
/// (e.g. no confident training samples of one class).
class DegenerateClusteringError : public Error {
 public:
  using Error::Error;
};

/// A label map holds a value outside the expected class set.
class LabelError : public Error {
 public:
  using Error::Error;
};

/// Bad parameter or malformed config/spec input.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace tpobdl
