#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace incpvae {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shapes that cannot be combined by an operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Argument outside the mathematical domain of an operation (log of x <= 0,
// Bernoulli target outside [0, 1], ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Violated precondition of an API call.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Malformed dataset or checkpoint file.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

// Non-finite values during training or evaluation.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Calibration constants that make a ratio metric meaningless.
class DegenerateCalibrationError : public Error {
 public:
  using Error::Error;
};

}  // namespace incpvae
