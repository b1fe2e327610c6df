#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace metaid {

// Base of every error raised by the library. `kind()` is a stable,
// machine-parsable tag used by the CLI's one-line error output.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

// A record field violates a TweetRecord invariant.
class ValidationError : public Error {
 public:
  ValidationError(std::string field, const std::string& message)
      : Error("validation", field + ": " + message), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class InvalidCombinationError : public Error {
 public:
  explicit InvalidCombinationError(const std::string& m) : Error("invalid-combination", m) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& m) : Error("io", m) {}
};

class FormatError : public Error {
 public:
  explicit FormatError(const std::string& m) : Error("format", m) {}
};

class InsufficientRecordsError : public Error {
 public:
  InsufficientRecordsError(std::string user, const std::string& m)
      : Error("insufficient-records", m), user_(std::move(user)) {}

  const std::string& user() const noexcept { return user_; }

 private:
  std::string user_;
};

class StratificationError : public Error {
 public:
  explicit StratificationError(const std::string& m) : Error("stratification", m) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& m) : Error("shape", m) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& m) : Error("numeric", m) {}
};

class DomainError : public Error {
 public:
  explicit DomainError(const std::string& m) : Error("domain", m) {}
};

class UnknownClassError : public Error {
 public:
  explicit UnknownClassError(const std::string& m) : Error("unknown-class", m) {}
};

class ScheduleError : public Error {
 public:
  explicit ScheduleError(const std::string& m) : Error("schedule", m) {}
};

class PlanError : public Error {
 public:
  explicit PlanError(const std::string& m) : Error("plan", m) {}
};

class CapacityError : public Error {
 public:
  explicit CapacityError(const std::string& m) : Error("capacity", m) {}
};

}  // namespace metaid
