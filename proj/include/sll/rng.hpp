#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

#include "sll/errors.hpp"

namespace sll {

// Counter-based random stream. Every draw is a pure function of
// (seed, counter), so any stochastic site can be replayed by restoring the
// counter, and forked sub-streams are addressable by label. No hidden state
// beyond the two fields; identical (seed, counter) gives identical draws on
// every platform (the core is integer-only).
class RngStream {
 public:
  RngStream() = default;
  explicit RngStream(uint64_t seed, uint64_t counter = 0) : seed_(seed), counter_(counter) {}

  uint64_t seed() const { return seed_; }
  uint64_t counter() const { return counter_; }
  void set_counter(uint64_t c) { counter_ = c; }

  uint64_t next_u64() {
    counter_ += 1;
    return mix(seed_ + 0x9E3779B97F4A7C15ULL * counter_);
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n).
  uint64_t uniform_int(uint64_t n) {
    if (n == 0) throw ParameterError("uniform_int: n must be positive");
    // Rejection sampling keeps the distribution exact for any n.
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
  }

  // Standard normal via Box-Muller (consumes exactly two draws).
  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  // Derived stream addressable by label; independent of this stream's cursor.
  RngStream fork(std::string_view label) const {
    uint64_t h = 0xCBF29CE484222325ULL;  // FNV-1a
    for (char c : label) {
      h ^= static_cast<uint8_t>(c);
      h *= 0x100000001B3ULL;
    }
    return RngStream(mix(seed_ ^ h));
  }

  RngStream fork(std::string_view label, uint64_t index) const {
    RngStream base = fork(label);
    return RngStream(mix(base.seed_ + 0x9E3779B97F4A7C15ULL * (index + 1)));
  }

  static uint64_t mix(uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  uint64_t seed_ = 0;
  uint64_t counter_ = 0;
};

}  // namespace sll
