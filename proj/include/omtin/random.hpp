#pragma once

// Counter-based random streams.
//
// Each stream is keyed by (seed, stream id); the n-th draw of a stream is a
// pure function of (key, n), the SplitMix64 output function applied to
// key + n * golden_gamma. Streams for different ids never share state, so the
// draws of one mode do not depend on which other modes are simulated.

#include <cmath>
#include <cstdint>
#include <string_view>

#include "omtin/core.hpp"

namespace omtin {

inline constexpr std::uint64_t splitmix64_mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// FNV-1a; stable across platforms, used to turn labels into stream ids.
inline constexpr std::uint64_t stream_id(std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

class CounterStream {
 public:
  static constexpr std::uint64_t golden_gamma = 0x9e3779b97f4a7c15ULL;

  CounterStream(std::uint64_t seed, std::uint64_t stream)
      : key_(splitmix64_mix(seed ^ splitmix64_mix(stream + golden_gamma))) {}
  CounterStream(std::uint64_t seed, std::string_view stream_name)
      : CounterStream(seed, stream_id(stream_name)) {}

  std::uint64_t at(std::uint64_t counter) const {
    return splitmix64_mix(key_ + (counter + 1) * golden_gamma);
  }

  std::uint64_t next_u64() { return at(counter_++); }

  /// Uniform in (0, 1].
  double uniform() { return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53; }

  /// Standard normal via Box-Muller; consumes two counters per pair.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = two_pi * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace omtin
