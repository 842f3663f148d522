#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace ptw {

/// Base for every error raised by the library. `code()` is a stable,
/// machine-readable identifier used by the CLI error records.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& what)
      : std::runtime_error(what), code_(std::move(code)) {}
  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& what)
      : Error("invalid-argument", what) {}
};

class IncompatibleCheckpoint : public Error {
 public:
  explicit IncompatibleCheckpoint(const std::string& what)
      : Error("incompatible-checkpoint", what) {}
};

class FrozenParameters : public Error {
 public:
  explicit FrozenParameters(const std::string& what)
      : Error("frozen-parameters", what) {}
};

class TrainingDiverged : public Error {
 public:
  TrainingDiverged(const std::string& where, std::int64_t step)
      : Error("training-diverged",
              where + ": non-finite loss at step " + std::to_string(step)),
        step_(step) {}
  std::int64_t step() const noexcept { return step_; }

 private:
  std::int64_t step_;
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what)
      : Error("numerical-error", what) {}
};

class AttackError : public Error {
 public:
  explicit AttackError(const std::string& what) : Error("attack-error", what) {}
};

class InversionError : public Error {
 public:
  explicit InversionError(const std::string& what)
      : Error("inversion-error", what) {}
};

class NotFound : public Error {
 public:
  explicit NotFound(const std::string& what) : Error("not-found", what) {}
};

class InternalError : public Error {
 public:
  explicit InternalError(const std::string& what)
      : Error("internal-invariant", what) {}
};

}  // namespace ptw
