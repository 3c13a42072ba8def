#pragma once

#include <stdexcept>
#include <string>

namespace racdnn::cli {

// Malformed command line or configuration; exit status 1.
class UsageError : public std::runtime_error {
 public:
  explicit UsageError(const std::string& what) : std::runtime_error(what) {}
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumeric = 3;

}  // namespace racdnn::cli
