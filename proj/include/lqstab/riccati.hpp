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
#ifndef LQSTAB_RICCATI_HPP
#define LQSTAB_RICCATI_HPP

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "lqstab/errors.hpp"
#include "lqstab/linalg.hpp"
#include "lqstab/parallel.hpp"
#include "lqstab/rng.hpp"
#include "lqstab/system.hpp"

namespace lqstab {

template <typename Scalar = double>
struct CostMatrices {
  Matrix<Scalar> Q;  // p x p, symmetric PD
  Matrix<Scalar> R;  // r x r, symmetric PD

  CostMatrices(Matrix<Scalar> q, Matrix<Scalar> r) : Q(std::move(q)), R(std::move(r)) {
    require_symmetric_positive_definite<Scalar>(Q, "Q");
    require_symmetric_positive_definite<Scalar>(R, "R");
  }
};

template <typename Scalar = double>
struct RiccatiSolution {
  Matrix<Scalar> K;  // symmetric PSD value matrix
  Matrix<Scalar> L;  // r x p feedback gain
  Scalar fixed_point_residual = Scalar(0);
  Scalar lyapunov_residual = Scalar(0);
  long iterations = 0;
  bool converged = false;
};

template <typename Scalar = double>
struct DareOptions {
  Scalar tol = Scalar(1e-12L);
  long max_iter = 100000;
};

/// Optimal gain for a given value matrix: L = -(B'KB + R)^{-1} B'KA.
template <typename Scalar>
Matrix<Scalar> gain_from_K(const SystemParams<Scalar>& theta, const Matrix<Scalar>& K,
                           const Matrix<Scalar>& R) {
  if (K.rows() != theta.p() || K.cols() != theta.p()) {
    throw DimensionError("gain_from_K: K must be p x p");
  }
  if (R.rows() != theta.r() || R.cols() != theta.r()) {
    throw DimensionError("gain_from_K: R must be r x r");
  }
  const Matrix<Scalar> G = symmetrized<Scalar>(theta.B.transpose() * K * theta.B + R);
  Eigen::LLT<Matrix<Scalar>> llt(G);
  if (llt.info() != Eigen::Success) {
    // cannot happen for symmetric PSD K and PD R
    throw ConfigError("gain_from_K: B'KB + R is not positive definite");
  }
  return -llt.solve(theta.B.transpose() * K * theta.A);
}

/// One value-iteration sweep of the Riccati recursion,
/// P <- Q + A'PA - A'PB (B'PB + R)^{-1} B'PA, symmetrized.
template <typename Scalar>
Matrix<Scalar> dare_step(const Matrix<Scalar>& P, const SystemParams<Scalar>& theta,
                         const CostMatrices<Scalar>& cost) {
  const Matrix<Scalar> G = symmetrized<Scalar>(theta.B.transpose() * P * theta.B + cost.R);
  Eigen::LLT<Matrix<Scalar>> llt(G);
  if (llt.info() != Eigen::Success) {
    throw ConfigError("dare_step: B'PB + R is not positive definite");
  }
  const Matrix<Scalar> APB = theta.A.transpose() * P * theta.B;
  const Matrix<Scalar> next =
      cost.Q + theta.A.transpose() * P * theta.A - APB * llt.solve(APB.transpose());
  return symmetrized<Scalar>(next);
}

/// Vertical stack [I_p; L], so that theta * extended_gain(L) = A + B L.
template <typename Scalar>
Matrix<Scalar> extended_gain(const Matrix<Scalar>& L) {
  const Eigen::Index p = L.cols();
  const Eigen::Index r = L.rows();
  Matrix<Scalar> ext(p + r, p);
  ext.topRows(p) = Matrix<Scalar>::Identity(p, p);
  ext.bottomRows(r) = L;
  return ext;
}

/// Residual of the closed-loop Lyapunov identity K - D'KD = Q + L'RL,
/// D = A + BL, in operator norm.
template <typename Scalar>
Scalar lyapunov_residual(const Matrix<Scalar>& K, const Matrix<Scalar>& L,
                         const SystemParams<Scalar>& theta, const CostMatrices<Scalar>& cost) {
  const Matrix<Scalar> D = theta.A + theta.B * L;
  const Matrix<Scalar> res = K - D.transpose() * K * D - (cost.Q + L.transpose() * cost.R * L);
  return symmetric_spectral_norm<Scalar>(symmetrized<Scalar>(res));
}

/// Solves the Riccati fixed point by value iteration from P0 (zero by
/// default). Stops when consecutive iterates differ by at most tol in
/// operator norm. Non-convergence within max_iter throws and usually means
/// theta is not stabilizable.
template <typename Scalar>
RiccatiSolution<Scalar> solve_dare(const SystemParams<Scalar>& theta,
                                   const CostMatrices<Scalar>& cost,
                                   const DareOptions<Scalar>& opts = {},
                                   const std::optional<Matrix<Scalar>>& P0 = {}) {
  if (cost.Q.rows() != theta.p() || cost.R.rows() != theta.r()) {
    throw DimensionError("solve_dare: cost dimensions must match theta");
  }
  if (!(opts.tol > Scalar(0))) throw ConfigError("solve_dare: tol must be positive");

  Matrix<Scalar> P = P0 ? symmetrized<Scalar>(*P0) : Matrix<Scalar>::Zero(theta.p(), theta.p());
  if (P.rows() != theta.p() || P.cols() != theta.p()) {
    throw DimensionError("solve_dare: P0 must be p x p");
  }

  const Scalar explosion_cap = Scalar(1e100L);
  Scalar diff = std::numeric_limits<Scalar>::infinity();
  for (long iter = 1; iter <= opts.max_iter; ++iter) {
    const Matrix<Scalar> next = dare_step<Scalar>(P, theta, cost);
    diff = symmetric_spectral_norm<Scalar>(symmetrized<Scalar>(next - P));
    P = next;
    if (!P.allFinite() || P.cwiseAbs().maxCoeff() > explosion_cap) {
      throw NonConvergenceError("solve_dare: iteration diverged (theta likely not stabilizable)",
                                static_cast<double>(diff), iter);
    }
    if (diff <= opts.tol) {
      RiccatiSolution<Scalar> sol;
      sol.K = P;
      sol.L = gain_from_K<Scalar>(theta, P, cost.R);
      sol.iterations = iter;
      sol.converged = true;
      sol.fixed_point_residual =
          symmetric_spectral_norm<Scalar>(symmetrized<Scalar>(dare_step<Scalar>(P, theta, cost) - P));
      sol.lyapunov_residual = lyapunov_residual<Scalar>(P, sol.L, theta, cost);
      return sol;
    }
  }
  throw NonConvergenceError(
      "solve_dare: no convergence after " + std::to_string(opts.max_iter) +
          " iterations (theta likely not stabilizable); last step norm " +
          std::to_string(static_cast<double>(diff)),
      static_cast<double>(diff), opts.max_iter);
}

/// True iff spectral_radius(A + B L) < 1 - margin.
template <typename Scalar>
bool is_stabilizer(const SystemParams<Scalar>& theta, const Matrix<Scalar>& L,
                   Scalar margin = Scalar(0)) {
  if (L.rows() != theta.r() || L.cols() != theta.p()) {
    throw DimensionError("is_stabilizer: L must be r x p");
  }
  if (margin < Scalar(0)) throw ConfigError("is_stabilizer: margin must be nonnegative");
  return spectral_radius<Scalar>(theta.A + theta.B * L) < Scalar(1) - margin;
}

/// Long-run average cost of the optimal loop: tr(K C).
template <typename Scalar>
Scalar optimal_average_cost(const Matrix<Scalar>& K, const Matrix<Scalar>& C) {
  if (K.rows() != K.cols() || C.rows() != C.cols() || K.rows() != C.rows()) {
    throw DimensionError("optimal_average_cost: K and C must be square with equal size");
  }
  return (K * C).trace();
}

template <typename Scalar = double>
struct RadiusOptions {
  /// Initial probe radius; grows by doubling until a failure shows up.
  Scalar initial = Scalar(0);  // 0: derived from ||theta||
  int max_grow = 60;
  /// Bisection stops once (hi - lo) <= rel_tol * hi.
  Scalar rel_tol = Scalar(5e-3L);
  /// Solver policy for the perturbed design points. A probe whose Riccati
  /// iteration does not converge counts as a failed sample.
  DareOptions<Scalar> dare{Scalar(1e-9L), 20000};
  int workers = 0;
};

/// Sampled lower-bound estimate of the design-perturbation radius around
/// theta: the largest tested eps such that for n_samples random design
/// points theta' with ||theta' - theta||_2 = eps, the gain L(theta')
/// stabilizes theta every time. Directions are Gaussian on the matrix
/// sphere, rescaled so the spectral norm of the perturbation is exactly eps.
/// The result is probabilistic: it can exceed the true radius only by the
/// margin the sampling resolution allows.
template <typename Scalar>
Scalar estimate_stabilizing_radius(const SystemParams<Scalar>& theta,
                                   const CostMatrices<Scalar>& cost, long n_samples,
                                   std::uint64_t seed, const RadiusOptions<Scalar>& opts = {}) {
  if (n_samples <= 0) throw ConfigError("estimate_stabilizing_radius: n_samples must be positive");

  // propagate solver errors: theta itself must be stabilizable
  (void)solve_dare<Scalar>(theta, cost);

  const Eigen::Index p = theta.p();
  const Eigen::Index q = theta.q();
  const Matrix<Scalar> base = theta.theta();

  std::uint64_t batch = 0;
  auto all_samples_stable = [&](Scalar eps) {
    const std::uint64_t batch_seed = rng::derive_stream(seed, batch++);
    std::atomic<bool> failed{false};
    parallel_for(n_samples, opts.workers, [&](long i) {
      if (failed.load(std::memory_order_relaxed)) return;
      rng::Stream<Scalar> stream(rng::derive_stream(batch_seed, static_cast<std::uint64_t>(i)));
      Matrix<Scalar> dir(p, q);
      for (Eigen::Index c = 0; c < q; ++c) {
        for (Eigen::Index rr = 0; rr < p; ++rr) dir(rr, c) = stream.normal();
      }
      const Scalar norm = spectral_norm<Scalar>(dir);
      if (!(norm > Scalar(0))) return;  // measure-zero; skip the degenerate draw
      const SystemParams<Scalar> design =
          SystemParams<Scalar>::from_theta(base + dir * (eps / norm), p, theta.r());
      bool ok = false;
      try {
        const RiccatiSolution<Scalar> sol = solve_dare<Scalar>(design, cost, opts.dare);
        ok = spectral_radius<Scalar>(theta.A + theta.B * sol.L) < Scalar(1);
      } catch (const NonConvergenceError&) {
        ok = false;
      }
      if (!ok) failed.store(true, std::memory_order_relaxed);
    });
    return !failed.load();
  };

  Scalar hi = opts.initial > Scalar(0)
                  ? opts.initial
                  : Scalar(0.05L) * (Scalar(1) + spectral_norm<Scalar>(base));
  Scalar lo = Scalar(0);
  int grow = 0;
  while (all_samples_stable(hi)) {
    lo = hi;
    hi *= Scalar(2);
    if (++grow >= opts.max_grow) return lo;  // saturated; radius at least lo
  }
  for (int round = 0; round < 200 && (hi - lo) > opts.rel_tol * hi; ++round) {
    const Scalar mid = (lo + hi) / Scalar(2);
    if (all_samples_stable(mid)) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return lo;
}

}  // namespace lqstab

#endif  // LQSTAB_RICCATI_HPP
