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
#ifndef LQSTAB_RNG_HPP
#define LQSTAB_RNG_HPP

#include <cmath>
#include <cstdint>
#include <numbers>

namespace lqstab::rng {

/// SplitMix64 (Steele/Lea/Flood splittable generator). The state walks a
/// Weyl sequence with the golden-ratio increment and every output is a
/// bijective finalizer of the counter, so the generator is counter-based:
/// output i is a pure function of (seed, i).
class SplitMix64 {
 public:
  explicit constexpr SplitMix64(std::uint64_t seed) : state_(seed) {}

  constexpr std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  /// The SplitMix64 output finalizer as a standalone 64-bit mixer.
  static constexpr std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_;
};

/// Seed of the sub-stream `index` of `master`. Replicates, episodes and
/// perturbation samples each own a derived stream, so results do not depend
/// on scheduling or worker count.
inline constexpr std::uint64_t derive_stream(std::uint64_t master, std::uint64_t index) {
  return SplitMix64::mix(master ^ SplitMix64::mix(0xA0761D6478BD642Full + index));
}

/// Typed draw helpers over one SplitMix64 stream. Draw order is fixed:
/// every distribution consumes a documented number of raw 64-bit words
/// (uniform: 1, sign: 1, normal: 2, exponential: 1).
template <typename Scalar = double>
class Stream {
 public:
  explicit Stream(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t raw() { return gen_.next(); }

  /// Uniform on [0, 1) with 53-bit resolution.
  Scalar uniform01() {
    return static_cast<Scalar>(gen_.next() >> 11) * kInv53;
  }

  /// Uniform on (0, 1]; safe as a log/exp argument.
  Scalar uniform01_positive() {
    return static_cast<Scalar>((gen_.next() >> 11) + 1) * kInv53;
  }

  /// Standard normal via Box-Muller (cosine branch only, two words).
  Scalar normal() {
    const Scalar u1 = uniform01_positive();
    const Scalar u2 = uniform01();
    return std::sqrt(Scalar(-2) * std::log(u1)) * std::cos(kTwoPi * u2);
  }

  /// Unit-rate exponential.
  Scalar exponential() { return -std::log(uniform01_positive()); }

  /// Fair sign, +1 or -1.
  Scalar sign() { return (gen_.next() >> 63) ? Scalar(-1) : Scalar(1); }

 private:
  static constexpr Scalar kInv53 = Scalar(1) / Scalar(9007199254740992.0L);  // 2^-53
  static constexpr Scalar kTwoPi = Scalar(2) * std::numbers::pi_v<long double>;

  SplitMix64 gen_;
};

}  // namespace lqstab::rng

#endif  // LQSTAB_RNG_HPP
