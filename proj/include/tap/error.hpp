#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tap {

enum class ErrorCode {
  EmptyMask,
  RunLengthMismatch,
  DegenerateBox,
  NoDepthSupport,
  DimensionMismatch,
  SingularInnovation,
  ShapeMismatch,
  NonInvertibleMotion,
  NonMonotonicFrame,
  FrameRangeMismatch,
  EmptyInput,
  InvalidConfig,
  ParseError,
  FormatError,
  InvalidArgument,
  InvariantViolation,
};

inline constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptyMask: return "EmptyMask";
    case ErrorCode::RunLengthMismatch: return "RunLengthMismatch";
    case ErrorCode::DegenerateBox: return "DegenerateBox";
    case ErrorCode::NoDepthSupport: return "NoDepthSupport";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::SingularInnovation: return "SingularInnovation";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonInvertibleMotion: return "NonInvertibleMotion";
    case ErrorCode::NonMonotonicFrame: return "NonMonotonicFrame";
    case ErrorCode::FrameRangeMismatch: return "FrameRangeMismatch";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::FormatError: return "FormatError";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::InvariantViolation: return "InvariantViolation";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above.
/// `line()` is nonzero only for text-format parse failures.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::size_t line = 0)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code),
        line_(line),
        message_(message) {}

  ErrorCode code() const noexcept { return code_; }
  std::size_t line() const noexcept { return line_; }
  const std::string& message() const noexcept { return message_; }

  /// Internal invariant violations map to a different exit status than
  /// bad input data.
  bool is_internal() const noexcept { return code_ == ErrorCode::InvariantViolation; }

 private:
  ErrorCode code_;
  std::size_t line_;
  std::string message_;
};

}  // namespace tap
