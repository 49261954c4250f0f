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
#include <set>

#include "lqstab/rng.hpp"

using lqstab::rng::derive_stream;
using lqstab::rng::SplitMix64;
using lqstab::rng::Stream;

TEST_CASE("splitmix64 is deterministic and seed-sensitive") {
  SplitMix64 a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) {
    const auto va = a.next();
    REQUIRE(va == b.next());
  }
  bool differs = false;
  SplitMix64 a2(42);
  for (int i = 0; i < 10; ++i) differs |= (a2.next() != c.next());
  REQUIRE(differs);
}

TEST_CASE("derived streams are distinct per index and master") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t master = 0; master < 8; ++master) {
    for (std::uint64_t idx = 0; idx < 64; ++idx) {
      seen.insert(derive_stream(master, idx));
    }
  }
  REQUIRE(seen.size() == 8 * 64);
}

TEST_CASE("uniform01 stays in [0,1) with the right mean") {
  Stream<double> s(7);
  double sum = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double u = s.uniform01();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  REQUIRE(std::abs(sum / n - 0.5) < 0.005);
}

TEST_CASE("normal draws have unit variance") {
  Stream<double> s(11);
  const int n = 200000;
  double sum = 0, sum2 = 0;
  for (int i = 0; i < n; ++i) {
    const double z = s.normal();
    sum += z;
    sum2 += z * z;
  }
  const double mean = sum / n;
  const double var = sum2 / n - mean * mean;
  REQUIRE(std::abs(mean) < 0.01);
  REQUIRE(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("exponential draws have unit mean") {
  Stream<long double> s(13);
  const int n = 200000;
  long double sum = 0;
  for (int i = 0; i < n; ++i) {
    const long double e = s.exponential();
    REQUIRE(e >= 0.0L);
    sum += e;
  }
  REQUIRE(std::abs(static_cast<double>(sum / n) - 1.0) < 0.01);
}
