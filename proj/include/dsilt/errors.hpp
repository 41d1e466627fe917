#pragma once

#include <stdexcept>
#include <string>

namespace dsilt {

// Base of every error raised by the library. Callers that only care about
// "something went wrong in dsilt" can catch this.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class InputError : public Error {
 public:
  using Error::Error;
};

// Raised when the GLM weight phi''(theta) falls below the floor.
class WeightUnderflowError : public Error {
 public:
  WeightUnderflowError(double theta, double weight)
      : Error("GLM weight underflow at theta=" + std::to_string(theta) +
              " (weight=" + std::to_string(weight) + ")"),
        theta_(theta) {}
  double theta() const noexcept { return theta_; }

 private:
  double theta_;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

// Solver hit its iteration cap. `residual` carries the last optimality
// residual (KKT residual for LASSO-type solvers).
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : Error(what + " (final residual " + std::to_string(residual) + ")"),
        residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

class InfeasibleTauError : public Error {
 public:
  InfeasibleTauError(double tau, int target)
      : Error("group Dantzig problem infeasible at tau=" + std::to_string(tau) +
              " for target " + std::to_string(target) +
              "; enlarge tau"),
        tau_(tau),
        target_(target) {}
  double tau() const noexcept { return tau_; }
  int target() const noexcept { return target_; }

 private:
  double tau_;
  int target_;
};

class TuningError : public Error {
 public:
  using Error::Error;
};

// Wire-format failures. Each has its own type so callers can tell a damaged
// frame from a frame written by another protocol version.
class FrameError : public Error {
 public:
  using Error::Error;
};

class ChecksumError : public FrameError {
 public:
  using FrameError::FrameError;
};

class VersionError : public FrameError {
 public:
  using FrameError::FrameError;
};

class TruncatedFrameError : public FrameError {
 public:
  using FrameError::FrameError;
};

// A protocol round failed at a specific node. study is -1 for the analysis
// computer.
class ProtocolError : public Error {
 public:
  ProtocolError(const std::string& what, int study, int fold)
      : Error(what + " [study " + std::to_string(study) + ", fold " + std::to_string(fold) + "]"),
        study_(study),
        fold_(fold) {}
  int study() const noexcept { return study_; }
  int fold() const noexcept { return fold_; }

 private:
  int study_;
  int fold_;
};

}  // namespace dsilt
