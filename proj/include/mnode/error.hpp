#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace mnode {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shape or width mismatch between tensors, layers or datasets.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Out-of-range class index or element position.
class IndexError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file. `offset` is the byte offset (binary formats) or the
/// 1-based line number (text formats) where parsing failed.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : Error(what), offset_(offset) {}
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

/// Invalid user-provided configuration or argument.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Non-finite value where a finite one is mandatory.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Statistics carried by solver failures so callers can report partial work.
struct SolverStats {
  std::int64_t accepted = 0;
  std::int64_t rejected = 0;
  std::int64_t nfe = 0;
};

class SolverError : public Error {
 public:
  SolverError(const std::string& what, SolverStats stats)
      : Error(what), stats_(stats) {}
  const SolverStats& stats() const noexcept { return stats_; }

 private:
  SolverStats stats_;
};

/// Trajectory left the valid band of a coordinate chart.
class ChartError : public Error {
 public:
  using Error::Error;
};

/// Training aborted (non-finite loss, NFE budget, solver failure).
class TrainingAbort : public Error {
 public:
  TrainingAbort(const std::string& what, int epoch, int batch)
      : Error(what), epoch_(epoch), batch_(batch) {}
  int epoch() const noexcept { return epoch_; }
  int batch() const noexcept { return batch_; }

 private:
  int epoch_;
  int batch_;
};

/// Writes a warning line to stderr unless warnings were silenced.
void warn(const std::string& message);
void set_warnings_enabled(bool enabled);

}  // namespace mnode
