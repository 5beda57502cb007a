#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace labmate {

/// Base of every domain error raised by the library. The CLI maps these to
/// exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SchemaError : public Error {
 public:
  SchemaError(std::string field, const std::string& what)
      : Error("schema error at '" + field + "': " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class ValueError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DegenerateDepth : public Error {
 public:
  using Error::Error;
};

class NoGoal : public Error {
 public:
  NoGoal() : Error("scene has no goal and no fallback obstruction threshold is set") {}
};

class InconsistentLabels : public Error {
 public:
  InconsistentLabels() : Error("interaction without obstruction is not a valid class") {}
};

class EmptyScene : public Error {
 public:
  EmptyScene() : Error("scene has no objects") {}
};

/// Raised by the response parser. `raw()` keeps the full offending text so a
/// live model's output is never lost.
class ParseError : public Error {
 public:
  ParseError(std::size_t offset, std::string reason, std::string raw)
      : Error("parse error at offset " + std::to_string(offset) + ": " + reason),
        offset_(offset),
        reason_(std::move(reason)),
        raw_(std::move(raw)) {}

  std::size_t offset() const noexcept { return offset_; }
  const std::string& reason() const noexcept { return reason_; }
  const std::string& raw() const noexcept { return raw_; }

 private:
  std::size_t offset_;
  std::string reason_;
  std::string raw_;
};

class TransportError : public Error {
 public:
  using Error::Error;
};

class TimeoutError : public TransportError {
 public:
  using TransportError::TransportError;
};

class UndefinedTransition : public Error {
 public:
  using Error::Error;
};

class NoMessageNeeded : public Error {
 public:
  NoMessageNeeded() : Error("no message is needed for an unobstructed path") {}
};

class InfeasiblePlacement : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class TooFewRecords : public Error {
 public:
  using Error::Error;
};

class EmptyInput : public Error {
 public:
  EmptyInput() : Error("empty input") {}
};

class LengthMismatch : public Error {
 public:
  using Error::Error;
};

class TooFewFolds : public Error {
 public:
  TooFewFolds() : Error("at least two fold values are required") {}
};

class MissingCell : public Error {
 public:
  using Error::Error;
};

/// Backend failure observed during an episode, tagged with the tick at which
/// it happened.
class BackendError : public Error {
 public:
  BackendError(double tick_s, const std::string& what)
      : Error("backend failure at t=" + std::to_string(tick_s) + "s: " + what), tick_s_(tick_s) {}
  double tick_s() const noexcept { return tick_s_; }

 private:
  double tick_s_;
};

}  // namespace labmate
