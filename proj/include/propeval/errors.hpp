#pragma once

#include <stdexcept>
#include <string>

namespace propeval {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

// Image dimensions absent from an annotation record.
class MissingSizeError : public ParseError {
 public:
  using ParseError::ParseError;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class PolicyError : public Error {
 public:
  using Error::Error;
};

// Evaluation slice with no targets (no reference proposals / no annotations).
class EmptyTargetError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace propeval
