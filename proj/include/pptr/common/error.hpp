#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pptr {

enum class Errc {
  EmptyFrame,
  DegenerateGeometry,
  InvalidConfig,
  MissingNormals,
  LengthMismatch,
  NonFiniteInput,
  EmptyGroup,
  ConfigMismatch,
  AllMasked,
  DivergedLoss,
  InvalidSpec,
  MalformedManifest,
  FrameCountMismatch,
  ParseError,
  IoError,
  UsageError,
};

inline std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::EmptyFrame: return "EmptyFrame";
    case Errc::DegenerateGeometry: return "DegenerateGeometry";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::MissingNormals: return "MissingNormals";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::NonFiniteInput: return "NonFiniteInput";
    case Errc::EmptyGroup: return "EmptyGroup";
    case Errc::ConfigMismatch: return "ConfigMismatch";
    case Errc::AllMasked: return "AllMasked";
    case Errc::DivergedLoss: return "DivergedLoss";
    case Errc::InvalidSpec: return "InvalidSpec";
    case Errc::MalformedManifest: return "MalformedManifest";
    case Errc::FrameCountMismatch: return "FrameCountMismatch";
    case Errc::ParseError: return "ParseError";
    case Errc::IoError: return "IoError";
    case Errc::UsageError: return "UsageError";
  }
  return "Unknown";
}

/// Library-wide exception. `code()` identifies the failure class; `what()`
/// carries a single-line human-readable detail.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& detail)
      : std::runtime_error(detail), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

/// Parse failure that knows its 1-based line number.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& detail)
      : Error(Errc::ParseError, "line " + std::to_string(line) + ": " + detail),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace pptr
