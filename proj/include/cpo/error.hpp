#pragma once

#include <stdexcept>
#include <string>

namespace cpo {

// Base of everything the library throws on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad user input: files, configs, specs. The CLI maps these to exit code 1.
class InputError : public Error {
 public:
  using Error::Error;
};

class DegeneratePoint : public Error {
 public:
  DegeneratePoint() : Error("point coincides with the camera center") {}
};

class ParseError : public InputError {
 public:
  using InputError::InputError;
};

class MissingProperty : public InputError {
 public:
  using InputError::InputError;
};

class IoError : public InputError {
 public:
  using InputError::InputError;
};

class AspectError : public InputError {
 public:
  using InputError::InputError;
};

class InvalidSpec : public InputError {
 public:
  using InputError::InputError;
};

class ConfigError : public InputError {
 public:
  using InputError::InputError;
};

class MissingGroundTruth : public InputError {
 public:
  using InputError::InputError;
};

class NonIntegerShift : public Error {
 public:
  using Error::Error;
};

class GridMismatch : public Error {
 public:
  using Error::Error;
};

class EmptyViewSet : public Error {
 public:
  EmptyViewSet() : Error("score map requires at least one synthetic view") {}
};

class NoFreeSpace : public Error {
 public:
  NoFreeSpace() : Error("partition has no empty cell to place a camera in") {}
};

class EmptyCandidateSet : public Error {
 public:
  using Error::Error;
};

class EmptyInput : public Error {
 public:
  using Error::Error;
};

}  // namespace cpo
