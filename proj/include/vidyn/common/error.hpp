#pragma once

#include <stdexcept>
#include <string>

namespace vidyn {

// Error categories map onto the CLI exit codes: usage -> 2, numeric -> 3, io -> 4.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& msg) : Error(msg) {}
};

class ShapeError : public UsageError {
 public:
  explicit ShapeError(const std::string& msg) : UsageError(msg) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& msg) : Error(msg) {}
};

class IntegrationDiverged : public NumericError {
 public:
  IntegrationDiverged(const std::string& msg, long step) : NumericError(msg), step(step) {}
  long step;
};

class TrainingFailure : public NumericError {
 public:
  TrainingFailure(const std::string& msg, long iteration) : NumericError(msg), iteration(iteration) {}
  long iteration;
};

class ForecastDiverged : public NumericError {
 public:
  ForecastDiverged(const std::string& msg, long step, long sample)
      : NumericError(msg), step(step), sample(sample) {}
  long step;
  long sample;
};

class DegenerateDimension : public NumericError {
 public:
  explicit DegenerateDimension(const std::string& msg) : NumericError(msg) {}
};

class PoisonedGradient : public NumericError {
 public:
  PoisonedGradient(const std::string& tensor, std::size_t index)
      : NumericError("non-finite gradient in " + tensor + " at index " +
                     std::to_string(index)),
        tensor(tensor),
        index(index) {}
  std::string tensor;
  std::size_t index;
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& msg) : Error(msg) {}
};

}  // namespace vidyn
