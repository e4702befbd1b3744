#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace gift {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller violated an operation's precondition.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// A domain object violates one of its invariants.
class InvariantError : public Error {
 public:
  using Error::Error;
};

/// A line of a record file could not be parsed. `line` is 1-based.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, std::string field, const std::string& message)
      : Error("line " + std::to_string(line) + (field.empty() ? "" : ", field '" + field + "'") +
              ": " + message),
        line_(line),
        field_(std::move(field)) {}

  std::size_t line() const noexcept { return line_; }
  const std::string& field() const noexcept { return field_; }

 private:
  std::size_t line_;
  std::string field_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Network failure or exhausted retries against an inference endpoint.
class BackendError : public Error {
 public:
  using Error::Error;
};

/// The endpoint answered, but the answer breaks the wire contract.
class ProtocolError : public BackendError {
 public:
  ProtocolError(const std::string& message, std::string raw_body)
      : BackendError(message), raw_body_(std::move(raw_body)) {}

  const std::string& raw_body() const noexcept { return raw_body_; }

 private:
  std::string raw_body_;
};

/// The endpoint cannot perform the requested kind of call (e.g. echo scoring).
class CapabilityError : public BackendError {
 public:
  using BackendError::BackendError;
};

/// The host lacks what the sandbox needs (e.g. no Python runtime).
class SandboxEnvironmentError : public Error {
 public:
  using Error::Error;
};

/// An identity that must hold by construction did not. Indicates a bug.
class InternalConsistencyError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(std::vector<std::string> problems)
      : Error(join(problems)), problems_(std::move(problems)) {}

  const std::vector<std::string>& problems() const noexcept { return problems_; }

 private:
  static std::string join(const std::vector<std::string>& problems) {
    std::string out = "invalid configuration";
    for (const auto& p : problems) out += "\n  " + p;
    return out;
  }

  std::vector<std::string> problems_;
};

}  // namespace gift
