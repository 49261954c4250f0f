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
#ifndef LQSTAB_IDENTIFICATION_HPP
#define LQSTAB_IDENTIFICATION_HPP

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "lqstab/errors.hpp"
#include "lqstab/linalg.hpp"
#include "lqstab/parallel.hpp"
#include "lqstab/system.hpp"

namespace lqstab {

template <typename Scalar = double>
struct LeastSquaresEstimate {
  Matrix<Scalar> D_hat;  // p x p closed-loop estimate
  Matrix<Scalar> gram;   // V_n = sum x(t) x(t)'
  long n = 0;            // transitions used
  Scalar gram_min_eig = Scalar(0);
};

template <typename Scalar = double>
struct EstimateOptions {
  /// Rank tolerance of the singular-Gram check, applied to the
  /// column-equilibrated regressor: singular when
  /// sigma_min(X S) <= rank_tol * sigma_max(X S), S = diag(1/||col_j||).
  /// Equilibration makes the test scale-free: a healthy unstable run has an
  /// astronomical raw lambda_max/lambda_min ratio purely from coordinate
  /// scales, while genuine degeneracy (zero states, subspace-confined data,
  /// directions collapsed below the arithmetic's resolution) shows up as
  /// collinearity of the normalized columns.
  Scalar rank_tol = Scalar(1e-8L);
};

/// Least-squares fit of x(t+1) ~ D x(t) over the trajectory's transitions,
/// solved through a column-equilibrated orthogonal factorization of the
/// regressor stack rather than an explicit Gram inverse.
///
/// Projections that land below the rounding floor of the factored system
/// are truncated to zero (the minimum-norm convention of rank-revealing
/// solvers). On unstable runs the dominant coordinates grow so large that
/// their stored values carry absolute rounding error far above the noise
/// level; the cross terms they would contribute are pure arithmetic junk,
/// and the loss is flat along those directions at the resolution the data
/// supports.
template <typename Scalar>
LeastSquaresEstimate<Scalar> estimate_closed_loop(const Trajectory<Scalar>& traj,
                                                  const EstimateOptions<Scalar>& opts = {}) {
  if (traj.states.size() < 2) {
    throw ConfigError("estimate_closed_loop: need at least one transition");
  }
  const Eigen::Index p = traj.p();
  const long n = static_cast<long>(traj.states.size()) - 1;

  Matrix<Scalar> X(n, p), Y(n, p);
  for (long t = 0; t < n; ++t) {
    X.row(t) = traj.states[static_cast<std::size_t>(t)].transpose();
    Y.row(t) = traj.states[static_cast<std::size_t>(t) + 1].transpose();
  }

  LeastSquaresEstimate<Scalar> est;
  est.n = n;
  est.gram = symmetrized<Scalar>(X.transpose() * X);
  const Vector<Scalar> eigs = symmetric_eigenvalues<Scalar>(est.gram);
  const Scalar lmin = std::max(eigs.minCoeff(), Scalar(0));
  const Scalar lmax = eigs.maxCoeff();
  est.gram_min_eig = lmin;

  // Column equilibration keeps both the singularity test and the
  // factorization honest when state coordinates live on wildly different
  // scales (mixed stable/unstable spectra make V_n's extreme eigenvalues
  // scale linearly vs. exponentially in n).
  Vector<Scalar> colscale(p);
  bool zero_column = false;
  for (Eigen::Index j = 0; j < p; ++j) {
    const Scalar norm = X.col(j).norm();
    zero_column = zero_column || !(norm > Scalar(0));
    colscale(j) = norm > Scalar(0) ? Scalar(1) / norm : Scalar(1);
  }
  const Matrix<Scalar> Xs = X * colscale.asDiagonal();
  const Vector<Scalar> eq_eigs =
      symmetric_eigenvalues<Scalar>(symmetrized<Scalar>(Xs.transpose() * Xs));
  const Scalar eq_min = std::max(eq_eigs.minCoeff(), Scalar(0));
  const Scalar eq_max = eq_eigs.maxCoeff();
  if (lmax <= Scalar(0) || zero_column ||
      eq_min <= opts.rank_tol * opts.rank_tol * eq_max) {
    throw SingularGramError("estimate_closed_loop: singular Gram matrix (min eigenvalue " +
                                std::to_string(static_cast<double>(lmin)) + ")",
                            static_cast<double>(lmin));
  }

  Eigen::HouseholderQR<Matrix<Scalar>> qr(Xs);
  const Matrix<Scalar> Qthin = qr.householderQ() * Matrix<Scalar>::Identity(n, p);
  const Matrix<Scalar> R = qr.matrixQR().topRows(p).template triangularView<Eigen::Upper>();
  const Matrix<Scalar> Qabs = Qthin.cwiseAbs();
  const Scalar floor_factor =
      Scalar(32) * static_cast<Scalar>(n) * std::numeric_limits<Scalar>::epsilon();

  Matrix<Scalar> Z(p, p);
  for (Eigen::Index target = 0; target < p; ++target) {
    Vector<Scalar> z = Qthin.transpose() * Y.col(target);
    const Vector<Scalar> zfloor = Qabs.transpose() * Y.col(target).cwiseAbs();
    for (Eigen::Index jj = 0; jj < p; ++jj) {
      if (std::abs(z(jj)) <= floor_factor * zfloor(jj)) z(jj) = Scalar(0);
    }
    Z.col(target) = R.template triangularView<Eigen::Upper>().solve(z);
  }
  est.D_hat = (colscale.asDiagonal() * Z).transpose();
  return est;
}

template <typename Scalar = double>
struct SpectralReport {
  std::vector<std::complex<Scalar>> eigenvalues;   // all p, as computed
  std::vector<std::complex<Scalar>> outside_unit;  // distinct |lambda| > 1 (clustered)
  std::vector<long> geometric_multiplicities;      // one per outside_unit entry
  bool regular = true;
  bool has_unit_eigenvalue = false;
  Scalar rank_tol = Scalar(0);
  Scalar unit_tol = Scalar(0);
};

/// Eigenvalue diagnostics of a closed-loop matrix: which eigenvalues sit
/// outside the unit circle, their geometric multiplicities
/// (p - rank(D - lambda I), rank via singular values), regularity (every
/// outside eigenvalue has multiplicity one) and unit-circle membership.
template <typename Scalar>
SpectralReport<Scalar> spectral_report(const Matrix<Scalar>& D, Scalar rank_tol = Scalar(1e-8L),
                                       Scalar unit_tol = Scalar(1e-6L)) {
  if (D.rows() != D.cols() || D.rows() == 0) {
    throw DimensionError("spectral_report: D must be a nonempty square matrix");
  }
  if (!D.allFinite()) throw ConfigError("spectral_report: D has non-finite entries");
  if (!(rank_tol > Scalar(0)) || !(unit_tol > Scalar(0))) {
    throw ConfigError("spectral_report: tolerances must be positive");
  }

  const Eigen::Index p = D.rows();
  SpectralReport<Scalar> report;
  report.rank_tol = rank_tol;
  report.unit_tol = unit_tol;

  Eigen::EigenSolver<Matrix<Scalar>> es(D, /*computeEigenvectors=*/false);
  for (Eigen::Index i = 0; i < p; ++i) {
    report.eigenvalues.push_back(es.eigenvalues()(i));
  }

  const Scalar scale = spectral_norm<Scalar>(D);
  for (const auto& lambda : report.eigenvalues) {
    if (std::abs(std::abs(lambda) - Scalar(1)) < unit_tol) report.has_unit_eigenvalue = true;
  }

  // Cluster the outside eigenvalues so numerically split multiple roots
  // (Jordan structure perturbs eigenvalues at sqrt(eps) scale) are analyzed
  // once at their centroid.
  const Scalar cluster_tol =
      Scalar(16) * std::sqrt(std::numeric_limits<Scalar>::epsilon()) * std::max(scale, Scalar(1));
  std::vector<std::complex<Scalar>> outside;
  for (const auto& lambda : report.eigenvalues) {
    if (std::abs(lambda) > Scalar(1)) outside.push_back(lambda);
  }
  std::vector<std::complex<Scalar>> reps;
  std::vector<long> counts;
  for (const auto& lambda : outside) {
    bool merged = false;
    for (std::size_t c = 0; c < reps.size(); ++c) {
      if (std::abs(lambda - reps[c]) <= cluster_tol) {
        reps[c] = (reps[c] * Scalar(counts[c]) + lambda) / Scalar(counts[c] + 1);
        ++counts[c];
        merged = true;
        break;
      }
    }
    if (!merged) {
      reps.push_back(lambda);
      counts.push_back(1);
    }
  }

  using Complex = std::complex<Scalar>;
  using CMatrix = Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic>;
  for (const auto& lambda : reps) {
    CMatrix shifted = D.template cast<Complex>();
    for (Eigen::Index i = 0; i < p; ++i) shifted(i, i) -= lambda;
    Eigen::JacobiSVD<CMatrix> svd(shifted);
    const auto& sv = svd.singularValues();
    // threshold anchored to the scale of D itself: D - lambda I can be tiny
    // when lambda is a full-multiplicity eigenvalue
    const Scalar threshold = rank_tol * std::max(sv.size() > 0 ? sv(0) : Scalar(0), scale);
    long rank = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i) {
      if (sv(i) > threshold) ++rank;
    }
    const long mult = std::max<long>(1, static_cast<long>(p) - rank);
    report.outside_unit.push_back(lambda);
    report.geometric_multiplicities.push_back(mult);
    if (mult != 1) report.regular = false;
  }
  return report;
}

/// Structured text form: one eigenvalue per line
/// (re, im, modulus, outside flag, geometric multiplicity when outside).
template <typename Scalar>
void write_spectral_report(const SpectralReport<Scalar>& report, std::ostream& os) {
  os << "# lqstab-spectral v1\n";
  os << "# rank_tol," << detail::format_scalar<Scalar>(report.rank_tol) << "\n";
  os << "# unit_tol," << detail::format_scalar<Scalar>(report.unit_tol) << "\n";
  os << "re,im,modulus,outside_unit,geometric_multiplicity\n";
  for (const auto& lambda : report.eigenvalues) {
    const Scalar mod = std::abs(lambda);
    const bool outside = mod > Scalar(1);
    long mult = 0;
    if (outside) {
      // find the cluster this eigenvalue was merged into
      std::size_t best = 0;
      Scalar best_dist = std::numeric_limits<Scalar>::infinity();
      for (std::size_t c = 0; c < report.outside_unit.size(); ++c) {
        const Scalar d = std::abs(lambda - report.outside_unit[c]);
        if (d < best_dist) {
          best_dist = d;
          best = c;
        }
      }
      if (!report.outside_unit.empty()) mult = report.geometric_multiplicities[best];
    }
    os << detail::format_scalar<Scalar>(lambda.real()) << ","
       << detail::format_scalar<Scalar>(lambda.imag()) << "," << detail::format_scalar<Scalar>(mod)
       << "," << (outside ? 1 : 0) << ",";
    if (outside) os << mult;
    os << "\n";
  }
  os << "# regular," << (report.regular ? "true" : "false") << "\n";
  os << "# has_unit_eigenvalue," << (report.has_unit_eigenvalue ? "true" : "false") << "\n";
}

/// Parameters of the sample-size bound
/// n / (log n)^(4/alpha) >= (rho / eps^2) ((-log delta)^(1+4/alpha) - log psi(delta)).
/// rho and psi are surrogates the theory leaves unspecified; psi defaults to
/// the linear form c_psi * delta valid for bounded-pdf noise.
template <typename Scalar = double>
struct SampleSizeParams {
  Scalar rho = Scalar(1);
  Scalar c_psi = Scalar(1);
  std::optional<Scalar> psi_const;
  Scalar alpha = Scalar(2);

  Scalar psi(Scalar delta) const { return psi_const ? *psi_const : c_psi * delta; }
};

/// Smallest integer n >= 3 satisfying the bound (natural logs); exponential
/// bracketing on the increasing branch of n/(log n)^(4/alpha), then integer
/// bisection. A nonpositive right-hand side collapses to the floor n = 3.
template <typename Scalar>
long long sample_size(Scalar epsilon, Scalar delta, const SampleSizeParams<Scalar>& params) {
  if (!(epsilon > Scalar(0))) throw ConfigError("sample_size: epsilon must be positive");
  if (!(delta > Scalar(0)) || !(delta < Scalar(1))) {
    throw ConfigError("sample_size: delta must be in (0,1)");
  }
  if (!(params.rho > Scalar(0))) throw ConfigError("sample_size: rho must be positive");
  if (!(params.alpha > Scalar(0))) throw ConfigError("sample_size: alpha must be positive");
  const Scalar psi = params.psi(delta);
  if (!(psi > Scalar(0))) throw ConfigError("sample_size: psi(delta) must be positive");

  const long double e4a = std::isinf(static_cast<long double>(params.alpha))
                              ? 0.0L
                              : 4.0L / static_cast<long double>(params.alpha);
  const long double neg_log_delta = -std::log(static_cast<long double>(delta));
  const long double rhs = static_cast<long double>(params.rho) /
                          (static_cast<long double>(epsilon) * static_cast<long double>(epsilon)) *
                          (std::pow(neg_log_delta, 1.0L + e4a) -
                           std::log(static_cast<long double>(psi)));

  const auto f = [e4a](long long n) {
    const long double ln = std::log(static_cast<long double>(n));
    return static_cast<long double>(n) / std::pow(ln, e4a);
  };

  if (rhs <= f(3)) return 3;

  // f decreases until n ~ e^(4/alpha), then increases without bound; the
  // answer lives on the increasing branch.
  long long lo = std::max<long long>(3, static_cast<long long>(std::ceil(std::exp(e4a))));
  long long hi = std::max<long long>(lo, 4);
  while (f(hi) < rhs) {
    if (hi > (1LL << 60)) throw ConfigError("sample_size: bound exceeds supported range");
    hi *= 2;
  }
  while (hi - lo > 1) {
    const long long mid = lo + (hi - lo) / 2;
    if (f(mid) >= rhs) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return hi;
}

/// Monte Carlo surrogate for the Gram lower-bound constant: simulates n_mc
/// noise-driven closed-loop paths x(t+1) = D x(t) + w(t+1) from x(0) = 0,
/// normalizes each Gram matrix by its own trace, and returns the empirical
/// delta-quantile of the smallest eigenvalue. A diagnostic default for
/// SampleSizeParams, not the theory's normalization.
template <typename Scalar>
Scalar estimate_psi(const Matrix<Scalar>& D, const NoiseModel<Scalar>& noise, Scalar delta,
                    long n_steps, long n_mc, std::uint64_t seed, int workers = 0) {
  if (D.rows() != D.cols() || D.rows() == 0) {
    throw DimensionError("estimate_psi: D must be a nonempty square matrix");
  }
  if (noise.dim() != D.rows()) throw DimensionError("estimate_psi: noise dimension mismatch");
  if (!(delta > Scalar(0)) || !(delta < Scalar(1))) {
    throw ConfigError("estimate_psi: delta must be in (0,1)");
  }
  if (n_steps < 1) throw ConfigError("estimate_psi: n_steps must be positive");
  if (n_mc < 100) throw ConfigError("estimate_psi: n_mc must be at least 100");
  if (!spectral_report<Scalar>(D).regular) {
    throw ConfigError("estimate_psi: D must be regular");
  }

  const Eigen::Index p = D.rows();
  std::vector<Scalar> values(static_cast<std::size_t>(n_mc), Scalar(0));
  parallel_for(n_mc, workers, [&](long i) {
    rng::Stream<Scalar> stream(rng::derive_stream(seed, static_cast<std::uint64_t>(i)));
    Vector<Scalar> x = Vector<Scalar>::Zero(p);
    Matrix<Scalar> V = Matrix<Scalar>::Zero(p, p);
    for (long t = 0; t < n_steps; ++t) {
      V.noalias() += x * x.transpose();
      x = D * x + noise.sample(stream);
    }
    const Scalar tr = V.trace();
    if (!(tr > Scalar(0))) {
      values[static_cast<std::size_t>(i)] = Scalar(0);
      return;
    }
    const Vector<Scalar> eigs = symmetric_eigenvalues<Scalar>(symmetrized<Scalar>(V / tr));
    values[static_cast<std::size_t>(i)] = std::max(eigs.minCoeff(), Scalar(0));
  });

  std::sort(values.begin(), values.end());
  const long long k =
      std::max<long long>(1, static_cast<long long>(std::ceil(static_cast<long double>(delta) *
                                                              static_cast<long double>(n_mc))));
  const Scalar quantile = values[static_cast<std::size_t>(k - 1)];
  if (!(quantile > Scalar(0))) {
    throw EstimationError("estimate_psi: degenerate (all-zero) quantile");
  }
  return quantile;
}

}  // namespace lqstab

#endif  // LQSTAB_IDENTIFICATION_HPP
