#include "choicelab/error.hpp"

namespace choicelab {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::Domain: return "DOMAIN";
    case ErrorCode::Separation: return "SEPARATION";
    case ErrorCode::InsufficientPoints: return "INSUFFICIENT_POINTS";
    case ErrorCode::NonConvergence: return "NONCONVERGENCE";
    case ErrorCode::DegenerateContour: return "DEGENERATE_CONTOUR";
    case ErrorCode::ZeroVariance: return "ZERO_VARIANCE";
    case ErrorCode::Empty: return "EMPTY";
    case ErrorCode::ShortSample: return "SHORT_SAMPLE";
    case ErrorCode::MissingAsset: return "MISSING_ASSET";
    case ErrorCode::UnknownEmotion: return "UNKNOWN_EMOTION";
    case ErrorCode::UnsupportedDomain: return "UNSUPPORTED_DOMAIN";
    case ErrorCode::OutOfRange: return "OUT_OF_RANGE";
    case ErrorCode::ParseFailed: return "PARSE_FAILED";
    case ErrorCode::Transport: return "TRANSPORT";
    case ErrorCode::Protocol: return "PROTOCOL";
    case ErrorCode::Timeout: return "TIMEOUT";
    case ErrorCode::BatchAborted: return "BATCH_ABORTED";
    case ErrorCode::Validation: return "VALIDATION";
  }
  return "UNKNOWN";
}

}  // namespace choicelab
