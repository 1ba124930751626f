#pragma once

#include <cmath>
#include <cstdint>

namespace skl {

// PCG32 (XSH RR 64/32, O'Neill, pcg-random.org). A fixed, documented
// generator so runs reproduce across platforms and standard libraries;
// std::normal_distribution and friends are not portable bit-for-bit.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0)
      : state_(0), inc_((stream << 1u) | 1u) {
    next_u32();
    state_ += seed;
    next_u32();
  }

  std::uint32_t next_u32() {
    const std::uint64_t old = state_;
    state_ = old * 6364136223846793005ULL + inc_;
    const auto xorshifted =
        static_cast<std::uint32_t>(((old >> 18u) ^ old) >> 27u);
    const auto rot = static_cast<std::uint32_t>(old >> 59u);
    return (xorshifted >> rot) | (xorshifted << ((32u - rot) & 31u));
  }

  // Uniform integer in [0, bound), bound > 0. Multiply-shift mapping.
  std::uint32_t uniform_below(std::uint32_t bound) {
    return static_cast<std::uint32_t>(
        (static_cast<std::uint64_t>(next_u32()) * bound) >> 32);
  }

  // Uniform double in [0, 1).
  double uniform01() { return next_u32() * (1.0 / 4294967296.0); }

  // Standard normal via Box-Muller; consumes exactly two draws per call.
  float gaussian() {
    const double u1 = (next_u32() + 1.0) * (1.0 / 4294967296.0);  // (0, 1]
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return static_cast<float>(r * std::cos(6.283185307179586 * u2));
  }

 private:
  std::uint64_t state_;
  std::uint64_t inc_;
};

}  // namespace skl
