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
#ifndef LQSTAB_STABILIZATION_HPP
#define LQSTAB_STABILIZATION_HPP

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lqstab/errors.hpp"
#include "lqstab/identification.hpp"
#include "lqstab/linalg.hpp"
#include "lqstab/riccati.hpp"
#include "lqstab/rng.hpp"
#include "lqstab/system.hpp"

namespace lqstab {

/// k = 1 + ceil(r/p) random feedbacks plus the stacked matrix
/// M = [[I_p ... I_p], [L_1 ... L_k]] and the precision scale
/// epsilon_tilde = (epsilon0 / 2k) sigma_min(M).
template <typename Scalar = double>
struct RandomFeedbackBundle {
  int k = 0;
  std::vector<Matrix<Scalar>> feedbacks;  // k gains, r x p
  Matrix<Scalar> M;                       // q x (k p)
  Scalar epsilon_tilde = Scalar(0);
  int redraws = 0;
};

template <typename Scalar>
Matrix<Scalar> stacked_feedback_matrix(const std::vector<Matrix<Scalar>>& feedbacks) {
  if (feedbacks.empty()) throw ConfigError("stacked_feedback_matrix: no feedbacks");
  const Eigen::Index r = feedbacks.front().rows();
  const Eigen::Index p = feedbacks.front().cols();
  const int k = static_cast<int>(feedbacks.size());
  Matrix<Scalar> M(p + r, static_cast<Eigen::Index>(k) * p);
  for (int i = 0; i < k; ++i) {
    if (feedbacks[static_cast<std::size_t>(i)].rows() != r ||
        feedbacks[static_cast<std::size_t>(i)].cols() != p) {
      throw DimensionError("stacked_feedback_matrix: feedback shapes differ");
    }
    M.block(0, static_cast<Eigen::Index>(i) * p, p, p) = Matrix<Scalar>::Identity(p, p);
    M.block(p, static_cast<Eigen::Index>(i) * p, r, p) = feedbacks[static_cast<std::size_t>(i)];
  }
  return M;
}

/// (epsilon0 / 2k) * sigma_min(M), where sigma_min is the q-th singular
/// value. Because M has full row rank almost surely, sigma_min(M) equals
/// inf over nonzero p x q matrices of ||theta M||_2 / ||theta||_2; the
/// infimum is attained by a rank-one theta aligned with the minimal left
/// singular direction. Rank-deficient M gives 0.
template <typename Scalar>
Scalar compute_epsilon_tilde(const Matrix<Scalar>& M, Scalar epsilon0, int k) {
  if (!(epsilon0 > Scalar(0))) throw ConfigError("compute_epsilon_tilde: epsilon0 must be positive");
  if (k < 1) throw ConfigError("compute_epsilon_tilde: k must be positive");
  if (M.rows() > M.cols()) return Scalar(0);
  const Vector<Scalar> sv = singular_values<Scalar>(M);
  const Scalar sigma_min = sv(M.rows() - 1);
  return epsilon0 / (Scalar(2) * Scalar(k)) * sigma_min;
}

/// Draws the k feedbacks column-by-column from N(0, I_r) and forms the
/// bundle. The whole bundle is redrawn (fresh sub-seed) while
/// epsilon_tilde <= eps_floor or M is numerically rank deficient, up to
/// max_redraws attempts.
template <typename Scalar>
RandomFeedbackBundle<Scalar> draw_feedbacks(Eigen::Index p, Eigen::Index r, std::uint64_t seed,
                                            Scalar eps_floor, Scalar epsilon0, int max_redraws) {
  if (p < 1 || r < 1) throw ConfigError("draw_feedbacks: p and r must be at least 1");
  if (!(epsilon0 > Scalar(0))) throw ConfigError("draw_feedbacks: epsilon0 must be positive");
  if (eps_floor < Scalar(0)) throw ConfigError("draw_feedbacks: eps_floor must be nonnegative");
  if (max_redraws < 1) throw ConfigError("draw_feedbacks: max_redraws must be at least 1");

  const int k = 1 + static_cast<int>((r + p - 1) / p);
  for (int attempt = 0; attempt < max_redraws; ++attempt) {
    rng::Stream<Scalar> stream(rng::derive_stream(seed, static_cast<std::uint64_t>(attempt)));
    std::vector<Matrix<Scalar>> feedbacks;
    feedbacks.reserve(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
      Matrix<Scalar> L(r, p);
      for (Eigen::Index col = 0; col < p; ++col) {
        for (Eigen::Index row = 0; row < r; ++row) L(row, col) = stream.normal();
      }
      feedbacks.push_back(std::move(L));
    }
    Matrix<Scalar> M = stacked_feedback_matrix<Scalar>(feedbacks);
    const Vector<Scalar> sv = singular_values<Scalar>(M);
    const bool full_rank = sv(M.rows() - 1) > Scalar(1e-10L) * sv(0);
    const Scalar eps_tilde = compute_epsilon_tilde<Scalar>(M, epsilon0, k);
    if (full_rank && eps_tilde > eps_floor) {
      RandomFeedbackBundle<Scalar> bundle;
      bundle.k = k;
      bundle.feedbacks = std::move(feedbacks);
      bundle.M = std::move(M);
      bundle.epsilon_tilde = eps_tilde;
      bundle.redraws = attempt;
      return bundle;
    }
  }
  throw DegenerateDrawError("draw_feedbacks: exhausted " + std::to_string(max_redraws) +
                            " redraws without clearing the epsilon_tilde floor");
}

/// Output of one adaptive stabilization run: episode estimates, the point
/// estimate theta_hat, and the membership flag of the intersected
/// confidence sets.
template <typename Scalar = double>
struct StabilizingSet {
  RandomFeedbackBundle<Scalar> bundle;
  std::vector<Matrix<Scalar>> estimates;  // D_hat per episode
  Scalar epsilon_tilde = Scalar(0);
  Scalar delta = Scalar(0);
  SystemParams<Scalar> theta_hat;
  std::vector<long long> episode_boundaries;  // tau_0 .. tau_k
  bool empty_intersection = false;
  bool used_override = false;
  std::uint64_t seed = 0;
};

template <typename Scalar = double>
struct StabilizationOptions {
  Scalar eps_floor = Scalar(0);
  int max_redraws = 64;
  /// Episodes run deliberately unstable loops whose states grow
  /// exponentially; the cap only guards against genuine scalar-range
  /// overflow.
  Scalar overflow_cap = std::numeric_limits<Scalar>::max() / Scalar(1e6L);
  EstimateOptions<Scalar> estimate{};
};

/// Runs the random-feedback stabilization loop: draws the bundle, plays
/// each feedback for its episode (state carries over, no reset), fits the
/// segment-local least squares, and extracts theta_hat as the stacked
/// minimizer of sum_i ||theta [I; L_i] - D_hat_i||_F^2. Episode lengths
/// come from sample_size(epsilon_tilde, delta/k) unless overridden.
template <typename Scalar>
StabilizingSet<Scalar> run_stabilization(const SystemParams<Scalar>& true_theta,
                                         const std::optional<NoiseModel<Scalar>>& noise,
                                         Scalar epsilon0, Scalar delta,
                                         const SampleSizeParams<Scalar>& sizing, std::uint64_t seed,
                                         const Vector<Scalar>& x0,
                                         std::optional<long long> episode_length_override = {},
                                         const StabilizationOptions<Scalar>& opts = {}) {
  const Eigen::Index p = true_theta.p();
  const Eigen::Index r = true_theta.r();
  if (x0.size() != p) throw DimensionError("run_stabilization: x0 must have length p");
  if (!(delta > Scalar(0)) || !(delta < Scalar(1))) {
    throw ConfigError("run_stabilization: delta must be in (0,1)");
  }
  if (noise && noise->dim() != p) {
    throw DimensionError("run_stabilization: noise dimension must equal p");
  }
  if (episode_length_override && *episode_length_override < 1) {
    throw ConfigError("run_stabilization: episode_length_override must be positive");
  }

  RandomFeedbackBundle<Scalar> bundle = draw_feedbacks<Scalar>(
      p, r, rng::derive_stream(seed, 0), opts.eps_floor, epsilon0, opts.max_redraws);
  const int k = bundle.k;

  const long long episode_length =
      episode_length_override
          ? *episode_length_override
          : sample_size<Scalar>(bundle.epsilon_tilde, delta / Scalar(k), sizing);

  StabilizingSet<Scalar> set{.bundle = bundle,
                             .estimates = {},
                             .epsilon_tilde = bundle.epsilon_tilde,
                             .delta = delta,
                             .theta_hat = true_theta,  // placeholder until solved below
                             .episode_boundaries = {0},
                             .empty_intersection = false,
                             .used_override = episode_length_override.has_value(),
                             .seed = seed};

  rng::Stream<Scalar> noise_stream(rng::derive_stream(seed, 1));
  Vector<Scalar> x = x0;
  long long global_step = 0;
  for (int i = 0; i < k; ++i) {
    const Matrix<Scalar>& L = bundle.feedbacks[static_cast<std::size_t>(i)];
    Trajectory<Scalar> segment;
    segment.seed = seed;
    segment.feedback = L;
    segment.states.reserve(static_cast<std::size_t>(episode_length) + 1);
    segment.states.push_back(x);
    for (long long t = 0; t < episode_length; ++t) {
      const Vector<Scalar> u = L * x;
      Vector<Scalar> next = true_theta.A * x + true_theta.B * u;
      if (noise) next += noise->sample(noise_stream);
      ++global_step;
      if (!next.allFinite() || next.cwiseAbs().maxCoeff() > opts.overflow_cap) {
        throw OverflowError("run_stabilization: state overflow at step " +
                                std::to_string(global_step) + " (episode " + std::to_string(i + 1) +
                                ")",
                            static_cast<long>(global_step));
      }
      segment.inputs.push_back(u);
      segment.states.push_back(next);
      x = std::move(next);
    }
    try {
      set.estimates.push_back(estimate_closed_loop<Scalar>(segment, opts.estimate).D_hat);
    } catch (const SingularGramError& e) {
      throw SingularGramError(std::string(e.what()) + " (episode " + std::to_string(i + 1) + ")",
                              e.min_eigenvalue(), i + 1);
    }
    set.episode_boundaries.push_back(global_step);
  }

  // theta_hat: exact minimizer of the stacked Frobenius loss. Stacking the
  // per-episode blocks gives theta * M ~ [D_hat_1 ... D_hat_k], solved
  // through an orthogonal factorization of M'.
  Matrix<Scalar> D_stack(p, static_cast<Eigen::Index>(k) * p);
  for (int i = 0; i < k; ++i) {
    D_stack.block(0, static_cast<Eigen::Index>(i) * p, p, p) =
        set.estimates[static_cast<std::size_t>(i)];
  }
  const Matrix<Scalar> theta_hat_t =
      bundle.M.transpose().colPivHouseholderQr().solve(D_stack.transpose());
  set.theta_hat = SystemParams<Scalar>::from_theta(theta_hat_t.transpose(), p, r);

  for (int i = 0; i < k; ++i) {
    const Matrix<Scalar> residual =
        set.theta_hat.theta() * extended_gain<Scalar>(bundle.feedbacks[static_cast<std::size_t>(i)]) -
        set.estimates[static_cast<std::size_t>(i)];
    if (spectral_norm<Scalar>(residual) > set.epsilon_tilde) {
      set.empty_intersection = true;
      break;
    }
  }
  return set;
}

/// True iff theta lies in every per-episode confidence set:
/// ||theta [I; L_i] - D_hat_i||_2 <= epsilon_tilde for all i.
template <typename Scalar>
bool membership(const SystemParams<Scalar>& theta, const StabilizingSet<Scalar>& set) {
  if (theta.p() != set.theta_hat.p() || theta.r() != set.theta_hat.r()) {
    throw DimensionError("membership: theta dimensions do not match the set");
  }
  for (std::size_t i = 0; i < set.estimates.size(); ++i) {
    const Matrix<Scalar> residual =
        theta.theta() * extended_gain<Scalar>(set.bundle.feedbacks[i]) - set.estimates[i];
    if (spectral_norm<Scalar>(residual) > set.epsilon_tilde) return false;
  }
  return true;
}

template <typename Scalar = double>
struct CertificationResult {
  bool certified = false;
  Scalar closed_loop_radius = std::numeric_limits<Scalar>::quiet_NaN();
  std::string diagnostic;  // nonempty when the design solve failed
};

/// Solves the Riccati gain at design_theta and reports whether it
/// stabilizes true_theta: spectral_radius(A0 + B0 L(design)) < 1.
template <typename Scalar>
CertificationResult<Scalar> certify(const SystemParams<Scalar>& true_theta,
                                    const SystemParams<Scalar>& design_theta,
                                    const CostMatrices<Scalar>& cost,
                                    const DareOptions<Scalar>& opts = {}) {
  if (true_theta.p() != design_theta.p() || true_theta.r() != design_theta.r()) {
    throw DimensionError("certify: dimensions of true and design systems differ");
  }
  CertificationResult<Scalar> result;
  Matrix<Scalar> gain;
  try {
    gain = solve_dare<Scalar>(design_theta, cost, opts).L;
  } catch (const NonConvergenceError& e) {
    result.diagnostic = std::string("design solve did not converge: ") + e.what();
    return result;
  }
  result.closed_loop_radius = spectral_radius<Scalar>(true_theta.A + true_theta.B * gain);
  result.certified = result.closed_loop_radius < Scalar(1);
  return result;
}

namespace detail {

template <typename Scalar>
nlohmann::json matrix_to_json(const Matrix<Scalar>& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(static_cast<double>(m(i, j)));
    rows.push_back(std::move(row));
  }
  return rows;
}

template <typename Scalar>
Matrix<Scalar> matrix_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.empty()) throw IoError("matrix: expected nonempty array of rows");
  const std::size_t rows = j.size();
  const std::size_t cols = j.front().size();
  Matrix<Scalar> m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < rows; ++i) {
    if (!j[i].is_array() || j[i].size() != cols) throw IoError("matrix: ragged rows");
    for (std::size_t c = 0; c < cols; ++c) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) =
          static_cast<Scalar>(j[i][c].get<double>());
    }
  }
  return m;
}

}  // namespace detail

/// Versioned JSON form of a stabilizing set. Numeric fields are stored as
/// doubles; extreme-magnitude state data never appears here (only gains,
/// estimates and bounds, all O(1)).
template <typename Scalar>
nlohmann::json stabilizing_set_to_json(const StabilizingSet<Scalar>& set) {
  nlohmann::json j;
  j["format"] = "lqstab-set";
  j["version"] = 1;
  j["p"] = set.theta_hat.p();
  j["r"] = set.theta_hat.r();
  j["seed"] = set.seed;
  j["k"] = set.bundle.k;
  j["redraws"] = set.bundle.redraws;
  j["epsilon_tilde"] = static_cast<double>(set.epsilon_tilde);
  j["delta"] = static_cast<double>(set.delta);
  j["episode_boundaries"] = set.episode_boundaries;
  j["used_override"] = set.used_override;
  j["empty_intersection"] = set.empty_intersection;
  nlohmann::json feedbacks = nlohmann::json::array();
  for (const auto& L : set.bundle.feedbacks) feedbacks.push_back(detail::matrix_to_json(L));
  j["feedbacks"] = std::move(feedbacks);
  nlohmann::json estimates = nlohmann::json::array();
  for (const auto& D : set.estimates) estimates.push_back(detail::matrix_to_json(D));
  j["estimates"] = std::move(estimates);
  j["theta_hat"] = {{"A", detail::matrix_to_json(set.theta_hat.A)},
                    {"B", detail::matrix_to_json(set.theta_hat.B)}};
  return j;
}

template <typename Scalar>
void write_stabilizing_set(const StabilizingSet<Scalar>& set, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open for writing: " + path);
  f << stabilizing_set_to_json(set).dump(2) << "\n";
  if (!f.good()) throw IoError("write failed: " + path);
}

}  // namespace lqstab

#endif  // LQSTAB_STABILIZATION_HPP
