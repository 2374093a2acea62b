#pragma once

#include <stdexcept>
#include <string>

namespace alfa {

// Base of every error thrown by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input violates a documented precondition or invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Caller is not allowed to do this (unscreened annotator, annotator cap).
class PermissionError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class NotFoundError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Text (a record line, an LLM response) could not be parsed. `raw` keeps the
// offending text for diagnostics.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::string raw = {})
      : Error(what), raw_(std::move(raw)) {}
  const std::string& raw() const { return raw_; }

 private:
  std::string raw_;
};

// Connection-level failure talking to an endpoint. Retryable.
class TransportError : public Error {
 public:
  using Error::Error;
};

class TimeoutError : public TransportError {
 public:
  using TransportError::TransportError;
};

// Endpoint answered with a non-2xx status.
class ApiError : public Error {
 public:
  ApiError(int status, std::string body)
      : Error("API error " + std::to_string(status) + ": " + body),
        status_(status),
        body_(std::move(body)) {}
  int status() const { return status_; }
  const std::string& body() const { return body_; }
  bool retryable() const { return status_ == 429 || status_ >= 500; }

 private:
  int status_;
  std::string body_;
};

// Bad run configuration or broken provenance chain.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace alfa
