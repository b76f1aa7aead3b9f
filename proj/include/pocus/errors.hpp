#ifndef POCUS_ERRORS_HPP
#define POCUS_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace pocus {

// Process exit codes: 0 success, 1 usage, 2 data error, 3 runtime failure.
class Error : public std::runtime_error {
 public:
  enum class Kind { kUsage = 1, kData = 2, kRuntime = 3 };

  Error(Kind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}

  Kind kind() const { return kind_; }
  int exit_code() const { return static_cast<int>(kind_); }

 private:
  Kind kind_;
};

// Bad flags, bad config values, inconsistent options.
class UsageError : public Error {
 public:
  explicit UsageError(const std::string& msg) : Error(Kind::kUsage, msg) {}
};

// Missing or malformed input files, undecodable videos, violated data contracts.
class DataError : public Error {
 public:
  explicit DataError(const std::string& msg) : Error(Kind::kData, msg) {}
};

// Failures that arise while computing: non-finite losses, unwritable outputs.
class RuntimeFailure : public Error {
 public:
  explicit RuntimeFailure(const std::string& msg) : Error(Kind::kRuntime, msg) {}
};

}  // namespace pocus

#endif  // POCUS_ERRORS_HPP
