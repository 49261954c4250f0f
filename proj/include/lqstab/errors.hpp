/*
 Copyright 2026 The lqstab Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/
#ifndef LQSTAB_ERRORS_HPP
#define LQSTAB_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace lqstab {

/// Base class of every error thrown by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid parameter values, inconsistent dimensions, schema violations.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Matrix/vector shape mismatch.
class DimensionError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// A simulated state exceeded the configured magnitude cap (or went
/// non-finite). Unstable runs must fail loudly, not emit inf/nan.
class OverflowError : public Error {
 public:
  OverflowError(const std::string& msg, long step) : Error(msg), step_(step) {}
  long step() const { return step_; }

 private:
  long step_;
};

/// An iterative solver hit its iteration budget. For the Riccati value
/// iteration this is the practical non-stabilizability diagnostic.
class NonConvergenceError : public Error {
 public:
  NonConvergenceError(const std::string& msg, double last_residual, long iterations)
      : Error(msg), last_residual_(last_residual), iterations_(iterations) {}
  double last_residual() const { return last_residual_; }
  long iterations() const { return iterations_; }

 private:
  double last_residual_;
  long iterations_;
};

/// The regressor Gram matrix is numerically rank deficient.
class SingularGramError : public Error {
 public:
  SingularGramError(const std::string& msg, double min_eigenvalue, int episode = -1)
      : Error(msg), min_eigenvalue_(min_eigenvalue), episode_(episode) {}
  double min_eigenvalue() const { return min_eigenvalue_; }
  /// 1-based episode index when raised inside a stabilization run, else -1.
  int episode() const { return episode_; }

 private:
  double min_eigenvalue_;
  int episode_;
};

/// A Monte Carlo estimate came out degenerate (e.g. an all-zero quantile).
class EstimationError : public Error {
 public:
  using Error::Error;
};

/// Random feedback redraw budget exhausted. Statistically near-impossible
/// with sane settings; signals a misconfigured floor.
class DegenerateDrawError : public Error {
 public:
  using Error::Error;
};

/// File I/O failure.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace lqstab

#endif  // LQSTAB_ERRORS_HPP
