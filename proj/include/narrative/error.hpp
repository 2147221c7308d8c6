#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace narrative {

// Root of every error this library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidTemplate : public Error {
 public:
  using Error::Error;
};

class NoJsonFound : public Error {
 public:
  NoJsonFound() : Error("no balanced JSON object found in reply") {}
};

class SchemaMismatch : public Error {
 public:
  explicit SchemaMismatch(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

// Gateway failures.
class GatewayError : public Error {
 public:
  using Error::Error;
};

class TransportError : public GatewayError {
 public:
  using GatewayError::GatewayError;
};

class UpstreamStatus : public GatewayError {
 public:
  explicit UpstreamStatus(int code)
      : GatewayError("upstream returned HTTP " + std::to_string(code)), code_(code) {}
  int code() const { return code_; }

 private:
  int code_;
};

class MalformedResponse : public GatewayError {
 public:
  using GatewayError::GatewayError;
};

class NoScriptedMatch : public GatewayError {
 public:
  NoScriptedMatch() : GatewayError("no scripted rule matched and no default is set") {}
};

class InvariantViolation : public Error {
 public:
  using Error::Error;
};

class StageFailed : public Error {
 public:
  StageFailed(std::string stage, std::string last_error)
      : Error("stage '" + stage + "' failed: " + last_error),
        stage_(std::move(stage)),
        last_error_(std::move(last_error)) {}
  const std::string& stage() const { return stage_; }
  const std::string& last_error() const { return last_error_; }

 private:
  std::string stage_;
  std::string last_error_;
};

class JudgeUnavailable : public Error {
 public:
  using Error::Error;
};

class TurnInFlight : public Error {
 public:
  TurnInFlight() : Error("a turn is already in flight for this session") {}
};

class UnknownAction : public Error {
 public:
  using Error::Error;
};

class UnknownNpc : public Error {
 public:
  using Error::Error;
};

class TurnFailed : public Error {
 public:
  using Error::Error;
};

class InvalidInput : public Error {
 public:
  using Error::Error;
};

}  // namespace narrative
