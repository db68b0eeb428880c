#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace choicelab {

enum class ErrorCode {
  Domain,
  Separation,
  InsufficientPoints,
  NonConvergence,
  DegenerateContour,
  ZeroVariance,
  Empty,
  ShortSample,
  MissingAsset,
  UnknownEmotion,
  UnsupportedDomain,
  OutOfRange,
  ParseFailed,
  Transport,
  Protocol,
  Timeout,
  BatchAborted,
  Validation,
};

std::string_view to_string(ErrorCode code) noexcept;

// Typed failure carried across module boundaries. Degenerate fits and
// malformed inputs surface as one of these, never as clamped values.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace choicelab
