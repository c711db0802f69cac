#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lfi {

/// Base of every error the toolkit throws. `tag()` is a stable machine-readable
/// identifier, used by the CLI for its single-line stderr report.
class Error : public std::runtime_error {
 public:
  Error(std::string tag, const std::string& what)
      : std::runtime_error(what), tag_(std::move(tag)) {}
  const std::string& tag() const noexcept { return tag_; }

 private:
  std::string tag_;
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error("E_SHAPE", what) {}
};

/// Non-finite value encountered; `index` locates the offending entry when known.
class NumericError : public Error {
 public:
  NumericError(const std::string& what, std::size_t index = npos)
      : Error("E_NUMERIC", what), index_(index) {}
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

class InsufficientDataError : public Error {
 public:
  explicit InsufficientDataError(const std::string& what) : Error("E_INSUFFICIENT_DATA", what) {}
};

class DegenerateDataError : public Error {
 public:
  explicit DegenerateDataError(const std::string& what) : Error("E_DEGENERATE_DATA", what) {}
};

class RangeError : public Error {
 public:
  RangeError(const std::string& what, std::size_t index)
      : Error("E_RANGE", what), index_(index) {}
  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, std::size_t epoch)
      : Error("E_TRAINING", what), epoch_(epoch) {}
  std::size_t epoch() const noexcept { return epoch_; }

 private:
  std::size_t epoch_;
};

class DegeneratePopulationError : public Error {
 public:
  explicit DegeneratePopulationError(const std::string& what)
      : Error("E_DEGENERATE_POPULATION", what) {}
};

/// A corrected SNPE-A component whose precision is not positive-definite.
class NonPositiveDefinite : public Error {
 public:
  NonPositiveDefinite(const std::string& what, std::size_t component)
      : Error("E_NON_POSITIVE_DEFINITE", what), component_(component) {}
  std::size_t component() const noexcept { return component_; }

 private:
  std::size_t component_;
};

class InitializationError : public Error {
 public:
  explicit InitializationError(const std::string& what) : Error("E_INITIALIZATION", what) {}
};

class DegenerateAcquisitionError : public Error {
 public:
  explicit DegenerateAcquisitionError(const std::string& what)
      : Error("E_DEGENERATE_ACQUISITION", what) {}
};

class ConfigError : public Error {
 public:
  ConfigError(std::string tag, const std::string& what) : Error(std::move(tag), what) {}
};

}  // namespace lfi
