#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gritnet {

enum class ErrorKind {
  schema_mismatch,
  ordering,
  empty_input,
  shape,
  numeric_failure,
  vocabulary,
  corrupt_file,
  version_mismatch,
  config,
  stratification,
  degenerate_labels,
  undefined_auc,
  undefined_arr,
  calibration,
  check_failure,
  io,
  usage,
};

std::string_view to_string(ErrorKind kind);

/// All library failures are reported through this type; `kind()` lets callers
/// (and the CLI exit-code mapping) branch without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

}  // namespace gritnet
