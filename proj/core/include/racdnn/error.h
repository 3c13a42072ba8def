#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace racdnn {

enum class ErrorKind {
  kInvalidShape,
  kInvalidArgument,
  kNoGraph,
  kInvalidScale,
  kInvalidBatch,
  kInvalidGroundTruth,
  kInvalidSpec,
  kParse,
  kIo,
  kCheckpoint,
  kNumeric,
};

const char* to_string(ErrorKind kind);

// Single exception type for the library; `kind()` distinguishes the failure
// class so callers (the CLI in particular) can map it to an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Netpbm / manifest parse failure; carries the byte offset of the problem.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(ErrorKind::kParse,
              what + " (at byte " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

}  // namespace racdnn
