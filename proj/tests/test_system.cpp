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
#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "lqstab/system.hpp"
#include "test_helpers.hpp"

using namespace lqstab;
using Catch::Approx;

namespace {

Matrix<double> m1(double v) {
  Matrix<double> m(1, 1);
  m(0, 0) = v;
  return m;
}

Vector<double> v1(double v) {
  Vector<double> x(1);
  x(0) = v;
  return x;
}

}  // namespace

TEST_CASE("nilpotent one-step: A=0, B=0 zeroes the state") {
  SystemParams<double> sys(Matrix<double>::Zero(3, 3), Matrix<double>::Zero(3, 2));
  Vector<double> x0(3);
  x0 << 1.0, -2.0, 0.5;
  const auto traj = simulate<double>(sys, Matrix<double>::Zero(2, 3), x0, 5, std::nullopt, 1);
  for (std::size_t t = 1; t < traj.states.size(); ++t) {
    REQUIRE(traj.states[t].norm() == 0.0);
  }
}

TEST_CASE("identity dynamics hold the state") {
  SystemParams<double> sys(Matrix<double>::Identity(2, 2), Matrix<double>::Zero(2, 1));
  Vector<double> x0(2);
  x0 << 0.3, -1.7;
  const auto traj = simulate<double>(sys, Matrix<double>::Zero(1, 2), x0, 7, std::nullopt, 1);
  for (const auto& x : traj.states) REQUIRE((x - x0).norm() == 0.0);
}

TEST_CASE("scalar closed loop decays geometrically") {
  SystemParams<double> sys(m1(2.0), m1(1.0));
  const auto traj = simulate<double>(sys, m1(-1.5), v1(1.0), 3, std::nullopt, 1);
  // closed loop 0.5: x(3) = 0.125
  REQUIRE(traj.states[3](0) == Approx(0.125).margin(1e-15));
  REQUIRE(traj.inputs[0](0) == Approx(-1.5).margin(1e-15));
}

TEST_CASE("closed-loop linearity: noise-free simulate iterates A+BL") {
  rng::Stream<double> s(99);
  const Matrix<double> A = test_helpers::random_matrix<double>(3, 3, s);
  const Matrix<double> B = test_helpers::random_matrix<double>(3, 2, s);
  const Matrix<double> L = test_helpers::random_matrix<double>(2, 3, s) * 0.3;
  SystemParams<double> sys(A, B);
  Vector<double> x0(3);
  x0 << 1.0, 0.5, -0.25;
  SimulateOptions<double> opts;
  opts.overflow_cap = 1e30;  // random loops may be unstable over 6 steps
  const auto traj = simulate<double>(sys, L, x0, 6, std::nullopt, 1, opts);
  const Matrix<double> D = A + B * L;
  Vector<double> x = x0;
  for (long t = 1; t <= 6; ++t) {
    x = D * x;
    REQUIRE((traj.states[static_cast<std::size_t>(t)] - x).norm() <= 1e-12 * (1.0 + x.norm()));
  }
}

TEST_CASE("determinism: same seed gives byte-identical CSV") {
  SystemParams<double> sys(m1(0.9), m1(0.4));
  const auto noise = NoiseModel<double>::gaussian(m1(1.0));
  const auto a = simulate<double>(sys, m1(-0.2), v1(1.0), 50, noise, 1234);
  const auto b = simulate<double>(sys, m1(-0.2), v1(1.0), 50, noise, 1234);
  std::ostringstream sa, sb;
  write_trajectory_csv(a, sa);
  write_trajectory_csv(b, sb);
  REQUIRE(sa.str() == sb.str());
  const auto c = simulate<double>(sys, m1(-0.2), v1(1.0), 50, noise, 1235);
  std::ostringstream sc;
  write_trajectory_csv(c, sc);
  REQUIRE(sa.str() != sc.str());
}

TEST_CASE("overflow aborts with the step index") {
  SystemParams<double> sys(m1(3.0), m1(0.0));
  SimulateOptions<double> opts;
  opts.overflow_cap = 100.0;
  try {
    simulate<double>(sys, m1(0.0), v1(1.0), 50, std::nullopt, 1, opts);
    FAIL("expected OverflowError");
  } catch (const OverflowError& e) {
    // 3^t exceeds 100 first at t=5 (243)
    REQUIRE(e.step() == 5);
  }
}

TEST_CASE("dimension mismatches are configuration errors") {
  SystemParams<double> sys(Matrix<double>::Identity(2, 2), Matrix<double>::Zero(2, 1));
  REQUIRE_THROWS_AS(simulate<double>(sys, Matrix<double>::Zero(1, 3), Vector<double>::Zero(2), 3,
                                     std::nullopt, 1),
                    DimensionError);
  REQUIRE_THROWS_AS(simulate<double>(sys, Matrix<double>::Zero(1, 2), Vector<double>::Zero(3), 3,
                                     std::nullopt, 1),
                    DimensionError);
  REQUIRE_THROWS_AS(simulate<double>(sys, Matrix<double>::Zero(1, 2), Vector<double>::Zero(2), 0,
                                     std::nullopt, 1),
                    ConfigError);
  REQUIRE_THROWS_AS(SystemParams<double>(Matrix<double>::Zero(2, 3), Matrix<double>::Zero(2, 1)),
                    DimensionError);
}

TEST_CASE("non-positive-definite covariance is rejected") {
  Matrix<double> C(2, 2);
  C << 1.0, 2.0, 2.0, 1.0;  // indefinite
  REQUIRE_THROWS_AS(NoiseModel<double>::gaussian(C), ConfigError);
  REQUIRE_THROWS_AS(NoiseModel<double>::gaussian(Matrix<double>::Zero(2, 2)), ConfigError);
}

TEST_CASE("noise moments match the requested covariance") {
  Matrix<double> C(2, 2);
  C << 1.0, 0.3, 0.3, 0.5;
  const int n = 60000;

  const auto check_moments = [&](const NoiseModel<double>& model) {
    const auto draws = sample_noise<double>(model, 2024, n);
    Vector<double> mean = Vector<double>::Zero(2);
    for (const auto& w : draws) mean += w;
    mean /= n;
    Matrix<double> cov = Matrix<double>::Zero(2, 2);
    for (const auto& w : draws) cov += (w - mean) * (w - mean).transpose();
    cov /= n - 1;
    for (int i = 0; i < 2; ++i) {
      for (int j = 0; j < 2; ++j) {
        // 5 Monte Carlo standard errors, entrywise
        double se = 0;
        for (const auto& w : draws) {
          const double prod = (w(i) - mean(i)) * (w(j) - mean(j));
          se += (prod - cov(i, j)) * (prod - cov(i, j));
        }
        se = std::sqrt(se / (static_cast<double>(n) - 1)) / std::sqrt(static_cast<double>(n));
        REQUIRE(std::abs(mean(i)) <= 5.0 * std::sqrt(cov(i, i) / n));
        REQUIRE(std::abs(cov(i, j) - C(i, j)) <= 5.0 * se);
      }
    }
  };

  check_moments(NoiseModel<double>::gaussian(C));
  check_moments(NoiseModel<double>::symmetric_weibull(1.0, C));
  check_moments(NoiseModel<double>::uniform_bounded(C));
}

TEST_CASE("gaussian tail frequency matches the quadrature oracle") {
  const auto model = NoiseModel<double>::gaussian(m1(1.0));
  const int n = 1000000;
  const auto draws = sample_noise<double>(model, 31337, n);
  long exceed = 0;
  for (const auto& w : draws) {
    if (std::abs(w(0)) > 3.0) ++exceed;
  }
  const double freq = static_cast<double>(exceed) / n;
  const double oracle = test_helpers::normal_two_sided_tail(3.0);  // ~0.0027
  REQUIRE(oracle == Approx(0.0026998).epsilon(1e-3));
  const double se = std::sqrt(oracle * (1.0 - oracle) / n);
  REQUIRE(std::abs(freq - oracle) <= 3.0 * se);
}

TEST_CASE("weibull absolute moment matches the quadrature oracle") {
  // alpha = 1/2, unit scale: E|w| = Gamma(1 + 1/alpha) = Gamma(3) = 2
  const auto model = NoiseModel<double>::symmetric_weibull(0.5, m1(1.0), 1.0);
  const double oracle = test_helpers::weibull_abs_moment(0.5);
  REQUIRE(oracle == Approx(2.0).epsilon(1e-4));
  const int n = 1000000;
  const auto draws = sample_noise<double>(model, 4242, n);
  double sum = 0, sum2 = 0;
  for (const auto& w : draws) {
    sum += std::abs(w(0));
    sum2 += w(0) * w(0);
  }
  const double mean = sum / n;
  const double var = sum2 / n - mean * mean;
  const double se = std::sqrt(var / n);
  REQUIRE(std::abs(mean - oracle) <= 5.0 * se);
}

TEST_CASE("uniform-bounded noise respects the post-transform support bound") {
  Matrix<double> C(2, 2);
  C << 1.0, -0.4, -0.4, 2.0;
  const auto model = NoiseModel<double>::uniform_bounded(C);
  const auto draws = sample_noise<double>(model, 5150, 20000);
  const double bound = model.support_bound();
  REQUIRE(bound < std::numeric_limits<double>::infinity());
  for (const auto& w : draws) {
    REQUIRE(w.cwiseAbs().maxCoeff() <= bound + 1e-12);
  }
}

TEST_CASE("tail bounds hold empirically for every kind") {
  Matrix<double> C(2, 2);
  C << 1.0, 0.2, 0.2, 0.8;
  const int n = 200000;
  const std::vector<NoiseModel<double>> models = {
      NoiseModel<double>::gaussian(C),
      NoiseModel<double>::symmetric_weibull(0.8, C),
      NoiseModel<double>::uniform_bounded(C),
  };
  std::uint64_t seed = 777;
  for (const auto& model : models) {
    const auto draws = sample_noise<double>(model, seed++, n);
    for (double y : {0.5, 1.0, 1.5, 2.5, 4.0}) {
      long exceed = 0;
      for (const auto& w : draws) {
        if (std::abs(w(0)) > y) ++exceed;
      }
      const double freq = static_cast<double>(exceed) / n;
      const double bound = model.tail_bound(y);
      const double se = std::sqrt(std::max(freq, 1e-8) * (1.0 - std::min(freq, 1.0 - 1e-8)) / n);
      REQUIRE(freq <= bound + 3.0 * se);
    }
  }
}

TEST_CASE("average cost: zero trajectory and single-term examples") {
  Trajectory<double> zero;
  zero.states = {Vector<double>::Zero(1), Vector<double>::Zero(1), Vector<double>::Zero(1)};
  zero.inputs = {Vector<double>::Zero(1), Vector<double>::Zero(1)};
  REQUIRE(average_cost<double>(zero, m1(1.0), m1(1.0)) == 0.0);

  Trajectory<double> single;
  single.states = {v1(1.0), v1(1.0)};
  single.inputs = {v1(0.0)};
  // c_1 = x(1)'Qx(1) + u(1)'Ru(1); no feedback recorded, so u(1) = 0
  REQUIRE(average_cost<double>(single, m1(1.0), m1(1.0)) == Approx(1.0));

  REQUIRE_THROWS_AS(average_cost<double>(single, Matrix<double>::Identity(2, 2), m1(1.0)),
                    DimensionError);
}

TEST_CASE("trajectory CSV round trip") {
  SystemParams<double> sys(m1(0.7), m1(1.0));
  const auto noise = NoiseModel<double>::gaussian(m1(1.0));
  const auto traj = simulate<double>(sys, m1(-0.3), v1(2.0), 12, noise, 88);
  std::ostringstream os;
  write_trajectory_csv(traj, os);
  const std::string text = os.str();
  REQUIRE(text.rfind("t,x_1,u_1\n", 0) == 0);
  // last row's input cell is empty
  const auto last_newline = text.find_last_of('\n', text.size() - 2);
  REQUIRE(text[text.size() - 2] == ',');

  std::istringstream is(text);
  const auto back = read_trajectory_csv<double>(is);
  REQUIRE(back.states.size() == traj.states.size());
  REQUIRE(back.inputs.size() == traj.inputs.size());
  for (std::size_t t = 0; t < traj.states.size(); ++t) {
    REQUIRE(back.states[t](0) == Approx(traj.states[t](0)).margin(0.0));
  }
}
