// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace avjoint {

enum class ErrorKind {
  InvalidInput,
  InvalidConfig,
  InvalidState,
  Numerical,
  Format,
  Io,
  Training,
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct InvalidInput : Error {
  explicit InvalidInput(const std::string& w) : Error(ErrorKind::InvalidInput, w) {}
};
struct InvalidConfig : Error {
  explicit InvalidConfig(const std::string& w) : Error(ErrorKind::InvalidConfig, w) {}
};
struct InvalidState : Error {
  explicit InvalidState(const std::string& w) : Error(ErrorKind::InvalidState, w) {}
};
struct NumericalError : Error {
  explicit NumericalError(const std::string& w) : Error(ErrorKind::Numerical, w) {}
};
struct IoError : Error {
  explicit IoError(const std::string& w) : Error(ErrorKind::Io, w) {}
};
struct TrainingError : Error {
  explicit TrainingError(const std::string& w) : Error(ErrorKind::Training, w) {}
};

/// Malformed binary file; `offset` is the byte position where parsing failed.
class FormatError : public Error {
 public:
  FormatError(const std::string& w, std::size_t offset)
      : Error(ErrorKind::Format, w + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Writes a one-line warning to stderr. Thread-safe.
void warn(std::string_view message);

}  // namespace avjoint
