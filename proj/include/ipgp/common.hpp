#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace ipgp {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Error taxonomy. The CLI maps these onto exit codes:
// config/structural -> 2, data -> 3, numerical -> 4.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Inconsistent dimensions or an internally contradictory model wiring.
struct StructuralError : ConfigError {
  using ConfigError::ConfigError;
};

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Diagonal jitter added before every Cholesky factorization, escalated once
// to kJitterMax if the first attempt fails.
inline constexpr double kJitter = 1e-6;
inline constexpr double kJitterMax = 1e-4;

}  // namespace ipgp
