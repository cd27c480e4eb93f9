#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

namespace qkdlink {

constexpr std::uint64_t splitmix64_mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Counter-based random stream. The sequence drawn for a (key, counter) pair
// depends on nothing else, so pulse i of a run gets the same numbers no matter
// which worker simulates it or in which order batches are processed.
//
// Distributions are implemented here rather than through <random> because the
// standard distributions are implementation-defined and would break
// bit-identical output across standard libraries.
class StreamRng {
 public:
  using result_type = std::uint64_t;

  StreamRng(std::uint64_t key, std::uint64_t counter)
      : state_(splitmix64_mix(key + kGamma) ^ splitmix64_mix(counter * kGamma + 0x632BE59BD9B4E019ULL)) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    state_ += kGamma;
    return splitmix64_mix(state_);
  }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return uniform() < p; }

  double exponential(double mean) { return -mean * std::log1p(-uniform()); }

  // Box-Muller; one variate per call keeps the stream position predictable.
  double normal() {
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;
  std::uint64_t state_;
};

}  // namespace qkdlink
