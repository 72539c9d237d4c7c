#pragma once

#include <stdexcept>
#include <string>

namespace repgraph {

enum class ErrorCode {
  dimension,
  contract,
  index,
  io_failure,
  malformed_header,
  length_mismatch,
  unsupported_op,
  validation,
  config,
};

const char* to_string(ErrorCode code);

// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::dimension: return "dimension error";
    case ErrorCode::contract: return "contract error";
    case ErrorCode::index: return "index error";
    case ErrorCode::io_failure: return "io failure";
    case ErrorCode::malformed_header: return "malformed header";
    case ErrorCode::length_mismatch: return "length mismatch";
    case ErrorCode::unsupported_op: return "unsupported op";
    case ErrorCode::validation: return "validation error";
    case ErrorCode::config: return "config error";
  }
  return "error";
}

}  // namespace repgraph
