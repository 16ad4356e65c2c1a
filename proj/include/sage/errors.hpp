#pragma once

#include <stdexcept>
#include <string>

namespace sage {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Candidate source text does not parse. Line and column are 1-based.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, int line, int column)
      : Error(what), line_(line), column_(column) {}

  int line() const noexcept { return line_; }
  int column() const noexcept { return column_; }

 private:
  int line_;
  int column_;
};

class InsufficientData : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class EmptyTrace : public Error {
 public:
  using Error::Error;
};

class UnknownFid : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// LLM access ------------------------------------------------------------

class TransportError : public Error {
 public:
  using Error::Error;
};

class RateLimited : public TransportError {
 public:
  using TransportError::TransportError;
};

class MalformedResponse : public Error {
 public:
  using Error::Error;
};

class MissingDescription : public MalformedResponse {
 public:
  using MalformedResponse::MalformedResponse;
};

class MissingCodeBlock : public MalformedResponse {
 public:
  using MalformedResponse::MalformedResponse;
};

// Run-aborting conditions raised by the evolution engine -----------------

class LLMUnavailable : public Error {
 public:
  using Error::Error;
};

class EvaluatorUnavailable : public Error {
 public:
  using Error::Error;
};

}  // namespace sage
