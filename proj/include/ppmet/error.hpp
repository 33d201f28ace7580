#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ppmet {

enum class ErrorKind {
  kInvalidSegment,
  kInvalidArgument,
  kParse,
  kBadMagic,
  kBadHeader,
  kDimMismatch,
  kTruncated,
  kNonFinite,
  kOutOfRange,
  kEmpty,
  kDegenerate,
  kNumerical,
  kOracle,
  kIo,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidSegment: return "invalid segment";
    case ErrorKind::kInvalidArgument: return "invalid argument";
    case ErrorKind::kParse: return "parse error";
    case ErrorKind::kBadMagic: return "bad magic";
    case ErrorKind::kBadHeader: return "bad header";
    case ErrorKind::kDimMismatch: return "dim mismatch";
    case ErrorKind::kTruncated: return "truncated";
    case ErrorKind::kNonFinite: return "non-finite value";
    case ErrorKind::kOutOfRange: return "out of range";
    case ErrorKind::kEmpty: return "empty";
    case ErrorKind::kDegenerate: return "degenerate";
    case ErrorKind::kNumerical: return "numerical failure";
    case ErrorKind::kOracle: return "oracle failure";
    case ErrorKind::kIo: return "i/o error";
  }
  return "unknown";
}

// Every library failure is an Error; callers branch on kind().
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// A record-level failure while reading a text or binary stream. `index` is the
// 1-based line number for text formats and the 0-based record index otherwise.
class RecordError : public Error {
 public:
  RecordError(ErrorKind kind, const std::string& what, std::size_t index)
      : Error(kind, what), index_(index) {}

  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

class OracleError : public Error {
 public:
  OracleError(const std::string& what, int iteration)
      : Error(ErrorKind::kOracle, what), iteration_(iteration) {}

  int iteration() const noexcept { return iteration_; }

 private:
  int iteration_;
};

}  // namespace ppmet
