#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace hhkg {

using NodeId = std::uint32_t;
using EdgeId = std::uint32_t;
using RelationId = std::uint32_t;
using Index = std::uint32_t;

// Categories map one-to-one onto CLI exit codes (2, 3, 4).
enum class ErrorKind { kUsage, kData, kNumeric };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error(ErrorKind::kUsage, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorKind::kData, what) {}
  DataError(const std::string& source, std::size_t line, const std::string& what)
      : Error(ErrorKind::kData, source + ":" + std::to_string(line) + ": " + what),
        line_(line) {}

  // 1-based line of the offending input, 0 when not tied to a line.
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_ = 0;
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ErrorKind::kNumeric, what) {}
};

inline void require(bool condition, const std::string& what) {
  if (!condition) throw DataError(what);
}

}  // namespace hhkg
