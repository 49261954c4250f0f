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
#ifndef LQSTAB_SYSTEM_HPP
#define LQSTAB_SYSTEM_HPP

#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "lqstab/errors.hpp"
#include "lqstab/linalg.hpp"
#include "lqstab/rng.hpp"

namespace lqstab {

/// The dynamics pair theta = [A, B]: x(t+1) = A x(t) + B u(t) + w(t+1).
template <typename Scalar = double>
struct SystemParams {
  Matrix<Scalar> A;  // p x p state transition
  Matrix<Scalar> B;  // p x r input matrix

  SystemParams(Matrix<Scalar> a, Matrix<Scalar> b) : A(std::move(a)), B(std::move(b)) {
    if (A.rows() == 0 || A.rows() != A.cols()) {
      throw DimensionError("SystemParams: A must be a nonempty square matrix");
    }
    if (B.rows() != A.rows() || B.cols() == 0) {
      throw DimensionError("SystemParams: B must have p rows and at least one column");
    }
    if (!A.allFinite() || !B.allFinite()) {
      throw ConfigError("SystemParams: entries must be finite");
    }
  }

  Eigen::Index p() const { return A.rows(); }
  Eigen::Index r() const { return B.cols(); }
  Eigen::Index q() const { return p() + r(); }

  /// theta viewed as the p x q block matrix [A B].
  Matrix<Scalar> theta() const {
    Matrix<Scalar> th(p(), q());
    th << A, B;
    return th;
  }

  static SystemParams from_theta(const Matrix<Scalar>& theta, Eigen::Index p, Eigen::Index r) {
    if (theta.rows() != p || theta.cols() != p + r) {
      throw DimensionError("SystemParams::from_theta: theta must be p x (p+r)");
    }
    return SystemParams(theta.leftCols(p), theta.rightCols(r));
  }
};

enum class NoiseKind { gaussian, symmetric_weibull, uniform_bounded };

inline const char* to_string(NoiseKind k) {
  switch (k) {
    case NoiseKind::gaussian: return "gaussian";
    case NoiseKind::symmetric_weibull: return "symmetric_weibull";
    case NoiseKind::uniform_bounded: return "uniform_bounded";
  }
  return "?";
}

/// Sub-Weibull disturbance model. Coordinates are drawn i.i.d. from the base
/// distribution of the chosen kind, then shaped by the lower Cholesky factor
/// of C. The default base scale normalizes each kind to unit variance so the
/// shaped vector has mean zero and covariance exactly C.
///
/// Base draws (per coordinate, in draw order):
///   gaussian          scale * N(0,1)                       (2 words)
///   symmetric_weibull sign * scale * E^(1/alpha), E~Exp(1) (2 words)
///   uniform_bounded   uniform on [-scale, scale]           (1 word)
///
/// (b1, b2) are valid tail-bound constants for every shaped coordinate:
/// P(|w_i| > y) <= b1 exp(-y^alpha / b2).
template <typename Scalar = double>
class NoiseModel {
 public:
  static NoiseModel gaussian(Matrix<Scalar> C) {
    return NoiseModel(NoiseKind::gaussian, Scalar(2), Scalar(1), std::move(C));
  }

  /// Unit-variance base scale 1/sqrt(Gamma(1 + 2/alpha)).
  static NoiseModel symmetric_weibull(Scalar alpha, Matrix<Scalar> C) {
    if (!(alpha > Scalar(0))) throw ConfigError("NoiseModel: alpha must be positive");
    const Scalar var = static_cast<Scalar>(
        std::tgamma(1.0L + 2.0L / static_cast<long double>(alpha)));
    return NoiseModel(NoiseKind::symmetric_weibull, alpha, Scalar(1) / std::sqrt(var),
                      std::move(C));
  }

  static NoiseModel symmetric_weibull(Scalar alpha, Matrix<Scalar> C, Scalar scale) {
    if (!(alpha > Scalar(0))) throw ConfigError("NoiseModel: alpha must be positive");
    if (!(scale > Scalar(0))) throw ConfigError("NoiseModel: scale must be positive");
    return NoiseModel(NoiseKind::symmetric_weibull, alpha, scale, std::move(C));
  }

  /// Unit-variance half width sqrt(3); represents the alpha -> infinity limit.
  static NoiseModel uniform_bounded(Matrix<Scalar> C) {
    return uniform_bounded(std::move(C), std::sqrt(Scalar(3)));
  }

  static NoiseModel uniform_bounded(Matrix<Scalar> C, Scalar half_width) {
    if (!(half_width > Scalar(0))) throw ConfigError("NoiseModel: half_width must be positive");
    return NoiseModel(NoiseKind::uniform_bounded, std::numeric_limits<Scalar>::infinity(),
                      half_width, std::move(C));
  }

  NoiseKind kind() const { return kind_; }
  Scalar alpha() const { return alpha_; }
  Scalar b1() const { return b1_; }
  Scalar b2() const { return b2_; }
  Scalar scale() const { return scale_; }
  const Matrix<Scalar>& C() const { return C_; }
  const Matrix<Scalar>& cholesky_factor() const { return chol_; }
  Eigen::Index dim() const { return C_.rows(); }

  /// Overrides the derived tail constants with user-supplied ones.
  void set_tail_constants(Scalar b1, Scalar b2) {
    if (!(b1 > Scalar(0)) || !(b2 > Scalar(0))) {
      throw ConfigError("NoiseModel: tail constants must be positive");
    }
    b1_ = b1;
    b2_ = b2;
  }

  /// Valid upper bound for P(|w_i| > y), any coordinate i of the shaped draw.
  Scalar tail_bound(Scalar y) const {
    if (y <= Scalar(0)) return Scalar(1);
    if (kind_ == NoiseKind::uniform_bounded) {
      return y >= support_bound() ? Scalar(0) : Scalar(1);
    }
    const Scalar v = b1_ * std::exp(-std::pow(y, alpha_) / b2_);
    return std::min(v, Scalar(1));
  }

  /// Hard support bound per coordinate (+inf unless uniform_bounded).
  Scalar support_bound() const {
    if (kind_ != NoiseKind::uniform_bounded) return std::numeric_limits<Scalar>::infinity();
    return scale_ * max_row_l1_;
  }

  /// One shaped draw. Consumes a fixed number of stream words per coordinate.
  Vector<Scalar> sample(rng::Stream<Scalar>& stream) const {
    const Eigen::Index p = dim();
    Vector<Scalar> z(p);
    switch (kind_) {
      case NoiseKind::gaussian:
        for (Eigen::Index i = 0; i < p; ++i) z(i) = scale_ * stream.normal();
        break;
      case NoiseKind::symmetric_weibull:
        for (Eigen::Index i = 0; i < p; ++i) {
          const Scalar s = stream.sign();
          const Scalar e = stream.exponential();
          z(i) = s * scale_ * std::pow(e, Scalar(1) / alpha_);
        }
        break;
      case NoiseKind::uniform_bounded:
        for (Eigen::Index i = 0; i < p; ++i) {
          z(i) = scale_ * (Scalar(2) * stream.uniform01() - Scalar(1));
        }
        break;
    }
    return chol_ * z;
  }

 private:
  NoiseModel(NoiseKind kind, Scalar alpha, Scalar scale, Matrix<Scalar> C)
      : kind_(kind), alpha_(alpha), scale_(scale), C_(std::move(C)) {
    chol_ = cholesky_lower<Scalar>(C_, "noise covariance C");
    max_row_l1_ = chol_.cwiseAbs().rowwise().sum().maxCoeff();
    derive_tail_constants();
  }

  void derive_tail_constants() {
    const Scalar p = static_cast<Scalar>(dim());
    switch (kind_) {
      case NoiseKind::gaussian: {
        // w_i ~ N(0, C_ii): P(|w_i| > y) <= exp(-y^2 / (2 C_ii)).
        b1_ = Scalar(1);
        b2_ = Scalar(2) * std::max(C_.diagonal().maxCoeff(), Scalar(0)) * scale_ * scale_;
        break;
      }
      case NoiseKind::symmetric_weibull: {
        // |w_i| <= max_j |z_j| * l1(row i of chol); union bound over j.
        b1_ = p;
        b2_ = std::pow(scale_ * max_row_l1_, alpha_);
        break;
      }
      case NoiseKind::uniform_bounded: {
        b1_ = Scalar(1);
        b2_ = Scalar(1);  // unused: tail_bound() is the support indicator
        break;
      }
    }
  }

  NoiseKind kind_;
  Scalar alpha_;
  Scalar scale_;
  Scalar b1_ = Scalar(1);
  Scalar b2_ = Scalar(1);
  Matrix<Scalar> C_;
  Matrix<Scalar> chol_;
  Scalar max_row_l1_ = Scalar(0);
};

/// i.i.d. draws w(1)..w(count) from one stream.
template <typename Scalar>
std::vector<Vector<Scalar>> sample_noise(const NoiseModel<Scalar>& noise, std::uint64_t seed,
                                         std::size_t count) {
  rng::Stream<Scalar> stream(seed);
  std::vector<Vector<Scalar>> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(noise.sample(stream));
  return out;
}

/// One simulated path: states x(0)..x(n), inputs u(0)..u(n-1).
template <typename Scalar = double>
struct Trajectory {
  std::vector<Vector<Scalar>> states;
  std::vector<Vector<Scalar>> inputs;
  std::uint64_t seed = 0;
  /// Gain used by simulate(); defines the trailing input u(n) = L x(n) in
  /// average_cost. Hand-built trajectories may leave it empty (u(n) = 0).
  std::optional<Matrix<Scalar>> feedback;

  Eigen::Index p() const { return states.empty() ? 0 : states.front().size(); }
  Eigen::Index r() const { return inputs.empty() ? 0 : inputs.front().size(); }
  long steps() const { return static_cast<long>(inputs.size()); }
};

template <typename Scalar = double>
struct SimulateOptions {
  /// Simulation aborts once any |x_i(t)| exceeds this. Unstable open-loop
  /// runs grow exponentially and must fail loudly.
  Scalar overflow_cap = Scalar(1e300L);
};

/// Simulates x(t+1) = A x(t) + B u(t) + w(t+1) with u(t) = feedback * x(t).
/// Equal (inputs, seed) give a bit-identical trajectory.
template <typename Scalar>
Trajectory<Scalar> simulate(const SystemParams<Scalar>& theta, const Matrix<Scalar>& feedback,
                            const Vector<Scalar>& x0, long n,
                            const std::optional<NoiseModel<Scalar>>& noise, std::uint64_t seed,
                            const SimulateOptions<Scalar>& opts = {}) {
  const Eigen::Index p = theta.p();
  const Eigen::Index r = theta.r();
  if (feedback.rows() != r || feedback.cols() != p) {
    throw DimensionError("simulate: feedback must be r x p");
  }
  if (x0.size() != p) throw DimensionError("simulate: x0 must have length p");
  if (n < 1) throw ConfigError("simulate: step count must be at least 1");
  if (noise && noise->dim() != p) {
    throw DimensionError("simulate: noise dimension must equal p");
  }
  if (!x0.allFinite() || !feedback.allFinite()) {
    throw ConfigError("simulate: inputs must be finite");
  }

  rng::Stream<Scalar> stream(seed);
  Trajectory<Scalar> traj;
  traj.seed = seed;
  traj.feedback = feedback;
  traj.states.reserve(static_cast<std::size_t>(n) + 1);
  traj.inputs.reserve(static_cast<std::size_t>(n));
  traj.states.push_back(x0);

  Vector<Scalar> x = x0;
  for (long t = 0; t < n; ++t) {
    const Vector<Scalar> u = feedback * x;
    Vector<Scalar> next = theta.A * x + theta.B * u;
    if (noise) next += noise->sample(stream);
    if (!next.allFinite() || next.cwiseAbs().maxCoeff() > opts.overflow_cap) {
      throw OverflowError("simulate: state overflow at step " + std::to_string(t + 1), t + 1);
    }
    traj.inputs.push_back(u);
    traj.states.push_back(next);
    x = std::move(next);
  }
  return traj;
}

/// Closed-loop convenience: x(t+1) = D x(t) + w(t+1), packaged through a
/// zero input channel so Trajectory invariants hold.
template <typename Scalar>
Trajectory<Scalar> simulate_autonomous(const Matrix<Scalar>& D, const Vector<Scalar>& x0, long n,
                                       const std::optional<NoiseModel<Scalar>>& noise,
                                       std::uint64_t seed, const SimulateOptions<Scalar>& opts = {}) {
  if (D.rows() != D.cols()) throw DimensionError("simulate_autonomous: D must be square");
  SystemParams<Scalar> sys(D, Matrix<Scalar>::Zero(D.rows(), 1));
  return simulate<Scalar>(sys, Matrix<Scalar>::Zero(1, D.rows()), x0, n, noise, seed, opts);
}

/// Time-average quadratic cost (1/T) sum_{t=1..T} [x(t)'Q x(t) + u(t)'R u(t)]
/// over the T = steps() transitions. The trailing input u(T) is L x(T) when
/// the trajectory records its feedback, zero otherwise.
template <typename Scalar>
Scalar average_cost(const Trajectory<Scalar>& traj, const Matrix<Scalar>& Q,
                    const Matrix<Scalar>& R) {
  const long T = traj.steps();
  if (T < 1 || traj.states.size() != static_cast<std::size_t>(T) + 1) {
    throw ConfigError("average_cost: trajectory must hold n+1 states and n inputs, n >= 1");
  }
  require_symmetric_positive_definite<Scalar>(Q, "Q");
  require_symmetric_positive_definite<Scalar>(R, "R");
  if (Q.rows() != traj.p() || R.rows() != traj.r()) {
    throw DimensionError("average_cost: Q/R dimensions must match the trajectory");
  }
  Scalar total = Scalar(0);
  for (long t = 1; t <= T; ++t) {
    const Vector<Scalar>& x = traj.states[static_cast<std::size_t>(t)];
    total += x.dot(Q * x);
    if (t < T) {
      const Vector<Scalar>& u = traj.inputs[static_cast<std::size_t>(t)];
      total += u.dot(R * u);
    } else if (traj.feedback) {
      const Vector<Scalar> u = (*traj.feedback) * x;
      total += u.dot(R * u);
    }
  }
  return total / Scalar(T);
}

namespace detail {

template <typename Scalar>
std::string format_scalar(Scalar v) {
  std::ostringstream os;
  os.precision(std::numeric_limits<Scalar>::max_digits10);
  os << v;
  return os.str();
}

}  // namespace detail

/// CSV schema: header `t,x_1..x_p,u_1..u_r`; one row per state; input
/// columns are empty on the last row.
template <typename Scalar>
void write_trajectory_csv(const Trajectory<Scalar>& traj, std::ostream& os) {
  const Eigen::Index p = traj.p();
  const Eigen::Index r = traj.r();
  os << "t";
  for (Eigen::Index i = 1; i <= p; ++i) os << ",x_" << i;
  for (Eigen::Index i = 1; i <= r; ++i) os << ",u_" << i;
  os << "\n";
  for (std::size_t t = 0; t < traj.states.size(); ++t) {
    os << t;
    for (Eigen::Index i = 0; i < p; ++i) {
      os << "," << detail::format_scalar<Scalar>(traj.states[t](i));
    }
    const bool last = (t + 1 == traj.states.size());
    for (Eigen::Index i = 0; i < r; ++i) {
      os << ",";
      if (!last) os << detail::format_scalar<Scalar>(traj.inputs[t](i));
    }
    os << "\n";
  }
}

template <typename Scalar>
void write_trajectory_csv(const Trajectory<Scalar>& traj, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open for writing: " + path);
  write_trajectory_csv(traj, f);
  if (!f.good()) throw IoError("write failed: " + path);
}

/// Parses the CSV schema written by write_trajectory_csv. The recorded
/// feedback is not part of the schema, so it comes back empty.
template <typename Scalar = double>
Trajectory<Scalar> read_trajectory_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw IoError("trajectory CSV: missing header");
  Eigen::Index p = 0, r = 0;
  {
    std::stringstream header(line);
    std::string col;
    bool first = true;
    while (std::getline(header, col, ',')) {
      if (first) {
        if (col != "t") throw IoError("trajectory CSV: first column must be t");
        first = false;
      } else if (col.rfind("x_", 0) == 0) {
        ++p;
      } else if (col.rfind("u_", 0) == 0) {
        ++r;
      } else {
        throw IoError("trajectory CSV: unexpected column " + col);
      }
    }
  }
  if (p == 0) throw IoError("trajectory CSV: no state columns");

  Trajectory<Scalar> traj;
  std::vector<std::vector<std::string>> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::vector<std::string> cells;
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    // a trailing empty input cell is dropped by getline; restore it
    while (cells.size() < static_cast<std::size_t>(1 + p + r)) cells.emplace_back();
    rows.push_back(std::move(cells));
  }
  if (rows.empty()) throw IoError("trajectory CSV: no data rows");

  for (std::size_t t = 0; t < rows.size(); ++t) {
    Vector<Scalar> x(p);
    for (Eigen::Index i = 0; i < p; ++i) {
      x(i) = static_cast<Scalar>(std::strtold(rows[t][static_cast<std::size_t>(1 + i)].c_str(), nullptr));
    }
    traj.states.push_back(std::move(x));
    if (t + 1 < rows.size() && r > 0) {
      Vector<Scalar> u(r);
      for (Eigen::Index i = 0; i < r; ++i) {
        u(i) = static_cast<Scalar>(
            std::strtold(rows[t][static_cast<std::size_t>(1 + p + i)].c_str(), nullptr));
      }
      traj.inputs.push_back(std::move(u));
    }
  }
  return traj;
}

template <typename Scalar = double>
Trajectory<Scalar> read_trajectory_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open for reading: " + path);
  return read_trajectory_csv<Scalar>(f);
}

}  // namespace lqstab

#endif  // LQSTAB_SYSTEM_HPP
