// SPDX-License-Identifier: Apache-2.0
#include "avjoint/error.hpp"

#include <iostream>
#include <mutex>

namespace avjoint {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::InvalidInput: return "InvalidInput";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::InvalidState: return "InvalidState";
    case ErrorKind::Numerical: return "NumericalError";
    case ErrorKind::Format: return "FormatError";
    case ErrorKind::Io: return "IoError";
    case ErrorKind::Training: return "TrainingError";
  }
  return "Error";
}

void warn(std::string_view message) {
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  std::cerr << "avjoint: warning: " << message << '\n';
}

}  // namespace avjoint
