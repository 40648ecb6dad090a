#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace phl {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Raised when a model is malformed: dimension mismatches, dangling ports,
/// algebraic loops, unknown identifiers.
class StructuralError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when an integration step produces a non-finite state.
class IntegrationError : public std::runtime_error {
 public:
  IntegrationError(const std::string& what, double time)
      : std::runtime_error(what + " (t = " + std::to_string(time) + ")"),
        time_(time) {}
  double time() const noexcept { return time_; }

 private:
  double time_;
};

/// Raised for invalid configuration values; carries the offending field.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& field, const std::string& what)
      : std::runtime_error(field + ": " + what), field_(field) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

inline void require_dim(Index got, Index expected, const char* what) {
  if (got != expected) {
    throw StructuralError(std::string(what) + ": expected dimension " +
                          std::to_string(expected) + ", got " +
                          std::to_string(got));
  }
}

}  // namespace phl
