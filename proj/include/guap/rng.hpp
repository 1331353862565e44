#pragma once

// Counter-based random numbers. Every draw is a pure function of
// (seed, stream, index...), so results never depend on evaluation order.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

namespace guap::rng {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t mix(std::uint64_t seed) { return splitmix64(seed); }

template <typename... Rest>
constexpr std::uint64_t mix(std::uint64_t seed, std::uint64_t next, Rest... rest) {
  return mix(splitmix64(seed) ^ next, rest...);
}

/// Uniform double in the open interval (0, 1).
template <typename... Keys>
double uniform(std::uint64_t seed, Keys... keys) {
  const std::uint64_t bits = mix(seed, static_cast<std::uint64_t>(keys)...);
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

/// Standard normal via Box-Muller on two keyed uniforms.
template <typename... Keys>
double normal(std::uint64_t seed, Keys... keys) {
  const double u1 = uniform(seed, static_cast<std::uint64_t>(keys)..., 0ULL);
  const double u2 = uniform(seed, static_cast<std::uint64_t>(keys)..., 1ULL);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

/// Sequential stream over the counter generator; satisfies
/// UniformRandomBitGenerator.
class Stream {
 public:
  using result_type = std::uint64_t;

  explicit Stream(std::uint64_t key) : key_(key) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }

  result_type operator()() { return mix(key_, counter_++); }

  /// Unbiased integer in [0, bound) by rejection. bound > 0.
  std::uint64_t below(std::uint64_t bound) {
    const std::uint64_t limit = max() - max() % bound;
    std::uint64_t x;
    do {
      x = (*this)();
    } while (x >= limit);
    return x % bound;
  }

  double uniform01() { return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// Fisher-Yates with the portable stream (std::shuffle is not specified
/// bit-for-bit across standard libraries).
template <typename T>
void shuffle(std::span<T> items, Stream& stream) {
  for (std::size_t k = items.size(); k > 1; --k) {
    const std::size_t j = stream.below(k);
    std::swap(items[k - 1], items[j]);
  }
}

}  // namespace guap::rng
