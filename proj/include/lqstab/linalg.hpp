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
#ifndef LQSTAB_LINALG_HPP
#define LQSTAB_LINALG_HPP

#include <Eigen/Dense>
#include <cmath>
#include <limits>

#include "lqstab/errors.hpp"

namespace lqstab {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
Matrix<Scalar> symmetrized(const Matrix<Scalar>& m) {
  return ((m + m.transpose()) / Scalar(2)).eval();
}

template <typename Scalar>
bool is_symmetric(const Matrix<Scalar>& m, Scalar tol) {
  if (m.rows() != m.cols()) return false;
  const Scalar scale = m.cwiseAbs().maxCoeff();
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= tol * std::max(scale, Scalar(1));
}

/// Largest singular value (operator 2-norm).
template <typename Scalar>
Scalar spectral_norm(const Matrix<Scalar>& m) {
  if (m.size() == 0) return Scalar(0);
  if (!m.allFinite()) throw ConfigError("spectral_norm: matrix has non-finite entries");
  Eigen::JacobiSVD<Matrix<Scalar>> svd(m);
  return svd.singularValues()(0);
}

/// Singular values in decreasing order.
template <typename Scalar>
Vector<Scalar> singular_values(const Matrix<Scalar>& m) {
  Eigen::JacobiSVD<Matrix<Scalar>> svd(m);
  return svd.singularValues();
}

/// Largest eigenvalue modulus of a square matrix.
template <typename Scalar>
Scalar spectral_radius(const Matrix<Scalar>& m) {
  if (m.rows() != m.cols()) throw DimensionError("spectral_radius: matrix must be square");
  if (m.size() == 0) return Scalar(0);
  if (!m.allFinite()) throw ConfigError("spectral_radius: matrix has non-finite entries");
  Eigen::EigenSolver<Matrix<Scalar>> es(m, /*computeEigenvectors=*/false);
  Scalar r = Scalar(0);
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    r = std::max(r, std::abs(es.eigenvalues()(i)));
  }
  return r;
}

/// Eigenvalues of a symmetric matrix, ascending.
template <typename Scalar>
Vector<Scalar> symmetric_eigenvalues(const Matrix<Scalar>& m) {
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

/// Operator 2-norm of a symmetric matrix (cheaper than an SVD).
template <typename Scalar>
Scalar symmetric_spectral_norm(const Matrix<Scalar>& m) {
  if (m.size() == 0) return Scalar(0);
  return symmetric_eigenvalues<Scalar>(m).cwiseAbs().maxCoeff();
}

template <typename Scalar>
void require_symmetric_positive_definite(const Matrix<Scalar>& m, const char* name) {
  if (m.rows() != m.cols() || m.rows() == 0) {
    throw DimensionError(std::string(name) + " must be a nonempty square matrix");
  }
  if (!m.allFinite()) throw ConfigError(std::string(name) + " has non-finite entries");
  if (!is_symmetric<Scalar>(m, Scalar(1e-10))) {
    throw ConfigError(std::string(name) + " must be symmetric");
  }
  const Vector<Scalar> eigs = symmetric_eigenvalues<Scalar>(symmetrized<Scalar>(m));
  if (eigs.minCoeff() <= Scalar(0)) {
    throw ConfigError(std::string(name) + " must be positive definite (min eigenvalue " +
                      std::to_string(static_cast<double>(eigs.minCoeff())) + ")");
  }
}

/// Lower-triangular Cholesky factor of a symmetric PD matrix.
template <typename Scalar>
Matrix<Scalar> cholesky_lower(const Matrix<Scalar>& m, const char* name) {
  require_symmetric_positive_definite<Scalar>(m, name);
  Eigen::LLT<Matrix<Scalar>> llt(symmetrized<Scalar>(m));
  if (llt.info() != Eigen::Success) {
    throw ConfigError(std::string(name) + ": Cholesky factorization failed");
  }
  return llt.matrixL();
}

}  // namespace lqstab

#endif  // LQSTAB_LINALG_HPP
