#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace markph {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Malformed input data (CSV rows, record invariants). CLI exit code 2.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration or call arguments. CLI exit code 2.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Estimation or inference could not produce a number. CLI exit code 3.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace markph
