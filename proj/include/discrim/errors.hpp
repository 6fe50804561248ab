#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace discrim {

/// Base of every error this library throws. `kind()` is a stable, machine-readable tag.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

/// Argument outside the mathematical domain of an operation (e.g. delta <= 0).
class DomainError : public Error {
 public:
  explicit DomainError(const std::string& message) : Error("domain_error", message) {}
};

/// Non-finite or otherwise unusable numeric input.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& message) : Error("numeric_error", message) {}
};

/// k_dyn requested before k1 could be estimated.
class ScheduleNotWarmed : public Error {
 public:
  ScheduleNotWarmed()
      : Error("schedule_not_warmed", "threshold schedule has no k1 estimate yet") {}
};

class DimensionMismatch : public Error {
 public:
  DimensionMismatch(std::size_t expected, std::size_t actual)
      : Error("dimension_mismatch", "expected dimension " + std::to_string(expected) +
                                        ", got " + std::to_string(actual)) {}
};

class InvalidLabel : public Error {
 public:
  explicit InvalidLabel(const std::string& message) : Error("invalid_label", message) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& message) : Error("config_error", message) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& message) : Error("io_error", message) {}
};

enum class IdxErrorKind { WrongMagic, Truncated, CountMismatch };

class IdxError : public Error {
 public:
  IdxError(IdxErrorKind kind, const std::string& message)
      : Error(tag(kind), message), idx_kind_(kind) {}

  IdxErrorKind idx_kind() const noexcept { return idx_kind_; }

 private:
  static std::string tag(IdxErrorKind kind) {
    switch (kind) {
      case IdxErrorKind::WrongMagic: return "idx_wrong_magic";
      case IdxErrorKind::Truncated: return "idx_truncated";
      case IdxErrorKind::CountMismatch: return "idx_count_mismatch";
    }
    return "idx_error";
  }

  IdxErrorKind idx_kind_;
};

/// Training stopped on a non-finite inner loss.
class TrainingAborted : public Error {
 public:
  TrainingAborted(std::size_t sample_id, int epoch, double value)
      : Error("training_aborted", "non-finite inner loss " + std::to_string(value) +
                                      " for sample " + std::to_string(sample_id) +
                                      " at epoch " + std::to_string(epoch)),
        sample_id_(sample_id),
        epoch_(epoch) {}

  std::size_t sample_id() const noexcept { return sample_id_; }
  int epoch() const noexcept { return epoch_; }

 private:
  std::size_t sample_id_;
  int epoch_;
};

}  // namespace discrim
