#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace egoqa {

// Root of every error the library raises. Callers that only care about
// "something in egoqa failed" catch this.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed on-disk record. line is 1-based, 0 when unknown.
class ParseError : public Error {
 public:
  ParseError(const std::string& file, std::size_t line, const std::string& what)
      : Error(file + ":" + std::to_string(line) + ": " + what), file_(file), line_(line) {}
  const std::string& file() const { return file_; }
  std::size_t line() const { return line_; }

 private:
  std::string file_;
  std::size_t line_;
};

class AssociationError : public Error {
 public:
  using Error::Error;
};

class OrderingError : public Error {
 public:
  using Error::Error;
};

class ReferenceError : public Error {
 public:
  using Error::Error;
};

class SchemaError : public Error {
 public:
  using Error::Error;
};

// Precondition violated by the caller (bad sizes, unknown ids, ...).
class InputError : public Error {
 public:
  using Error::Error;
};

class DegenerateInputError : public InputError {
 public:
  using InputError::InputError;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DatasetError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::string raw) : Error(what), raw_(std::move(raw)) {}
  const std::string& raw_text() const { return raw_; }

 private:
  std::string raw_;
};

class TemplateError : public Error {
 public:
  using Error::Error;
};

// Anything that went wrong talking to a model or embedding backend.
class GatewayError : public Error {
 public:
  using Error::Error;
};

class TransportError : public GatewayError {
 public:
  TransportError(const std::string& what, std::string attempt_log, int attempts)
      : GatewayError(what), attempt_log_(std::move(attempt_log)), attempts_(attempts) {}
  const std::string& attempt_log() const { return attempt_log_; }
  int attempts() const { return attempts_; }

 private:
  std::string attempt_log_;
  int attempts_;
};

class ProtocolError : public GatewayError {
 public:
  ProtocolError(const std::string& what, int status) : GatewayError(what), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

class DecodeError : public GatewayError {
 public:
  using GatewayError::GatewayError;
};

class ScriptedMissError : public GatewayError {
 public:
  using GatewayError::GatewayError;
};

class OracleContractError : public GatewayError {
 public:
  using GatewayError::GatewayError;
};

// Provider failure attributed to a particular frame.
class FrameGatewayError : public GatewayError {
 public:
  FrameGatewayError(std::string frame_id, const std::string& what)
      : GatewayError("frame " + frame_id + ": " + what), frame_id_(std::move(frame_id)) {}
  const std::string& frame_id() const { return frame_id_; }

 private:
  std::string frame_id_;
};

}  // namespace egoqa
