#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace cyclecert {

/// Failure categories. Certificates and the CLI report these by name.
enum class ErrorKind {
  kInput,
  kNumeric,
  kDiverged,
  kOutOfRange,
  kEquilibrium,
  kInvalidReparametrization,
  kTransversalityLoss,
  kNoReturn,
  kSynchronizationLost,
  kPrecondition,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInput: return "input";
    case ErrorKind::kNumeric: return "numeric";
    case ErrorKind::kDiverged: return "diverged";
    case ErrorKind::kOutOfRange: return "out-of-range";
    case ErrorKind::kEquilibrium: return "equilibrium-proximity";
    case ErrorKind::kInvalidReparametrization: return "invalid-reparametrization";
    case ErrorKind::kTransversalityLoss: return "transversality-loss";
    case ErrorKind::kNoReturn: return "no-return";
    case ErrorKind::kSynchronizationLost: return "synchronization-lost";
    case ErrorKind::kPrecondition: return "precondition";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Error carrying the index (step, coordinate or sample) where it happened.
class IndexedError : public Error {
 public:
  IndexedError(ErrorKind kind, const std::string& message, std::size_t index)
      : Error(kind, message + " (index " + std::to_string(index) + ")"),
        index_(index) {}

  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

}  // namespace cyclecert
