#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace edgecloud {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller violated a documented precondition (empty input, bad range).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration or input file content.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Two allocation schemes (or a scheme and a sub-task set) cover different indices.
class DomainMismatchError : public Error {
 public:
  using Error::Error;
};

/// The model answer to a decomposition prompt held no numbered lines.
class DecompositionParseError : public Error {
 public:
  DecompositionParseError(std::string message, std::string raw_response, std::string task_id = {})
      : Error(std::move(message)), raw_response_(std::move(raw_response)), task_id_(std::move(task_id)) {}

  const std::string& raw_response() const noexcept { return raw_response_; }
  const std::string& task_id() const noexcept { return task_id_; }

 private:
  std::string raw_response_;
  std::string task_id_;
};

/// Base of failures raised while talking to a model endpoint.
class BackendError : public Error {
 public:
  using Error::Error;
  virtual bool retryable() const noexcept { return false; }
};

/// Network-level failure. Retried by the router up to its attempt budget.
class TransportError : public BackendError {
 public:
  explicit TransportError(const std::string& message, int attempts = 1)
      : BackendError(message), attempts_(attempts) {}
  bool retryable() const noexcept override { return true; }
  int attempts() const noexcept { return attempts_; }

 private:
  int attempts_;
};

/// The endpoint answered but the payload could not be understood. Never retried.
class DecodeError : public BackendError {
 public:
  using BackendError::BackendError;
};

/// The endpoint lacks something the request needs (log-probs, embeddings).
class CapabilityError : public BackendError {
 public:
  using BackendError::BackendError;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& message, int epoch) : Error(message), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

/// An operation that must produce data produced none.
class EmptyResultError : public Error {
 public:
  using Error::Error;
};

}  // namespace edgecloud
