#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace newsie {

enum class Errc {
  MalformedLine,
  CycleDetected,
  MultipleRoots,
  UnmappedLabel,
  InvalidId,
  EmptyDocument,
  MissingOffset,
  DimMismatch,
  EmptyBatch,
  IndexOutOfRange,
  MissingLabels,
  EmptyEvalSet,
  InvalidFormat,
  NumericFailure,
};

inline std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::MalformedLine: return "MalformedLine";
    case Errc::CycleDetected: return "CycleDetected";
    case Errc::MultipleRoots: return "MultipleRoots";
    case Errc::UnmappedLabel: return "UnmappedLabel";
    case Errc::InvalidId: return "InvalidId";
    case Errc::EmptyDocument: return "EmptyDocument";
    case Errc::MissingOffset: return "MissingOffset";
    case Errc::DimMismatch: return "DimMismatch";
    case Errc::EmptyBatch: return "EmptyBatch";
    case Errc::IndexOutOfRange: return "IndexOutOfRange";
    case Errc::MissingLabels: return "MissingLabels";
    case Errc::EmptyEvalSet: return "EmptyEvalSet";
    case Errc::InvalidFormat: return "InvalidFormat";
    case Errc::NumericFailure: return "NumericFailure";
  }
  return "Unknown";
}

// All library failures surface as this exception; `code()` tells callers
// which contract was violated. `line()` is 0 when no source line applies.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what, std::size_t line = 0)
      : std::runtime_error(format(code, what, line)), code_(code), line_(line) {}

  Errc code() const noexcept { return code_; }
  std::size_t line() const noexcept { return line_; }

 private:
  static std::string format(Errc code, const std::string& what, std::size_t line) {
    std::string msg(errc_name(code));
    if (line > 0) msg += " at line " + std::to_string(line);
    msg += ": ";
    msg += what;
    return msg;
  }

  Errc code_;
  std::size_t line_;
};

}  // namespace newsie
