#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace omtin {

inline constexpr double two_pi = 2.0 * std::numbers::pi;

namespace constants {
inline constexpr double boltzmann = 1.380649e-23;   // J/K
inline constexpr double hbar = 1.054571817e-34;     // J s
}  // namespace constants

/// Bad arguments, preconditions and configuration problems.
class invalid_input : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Non-convergence, non-finite intermediate results.
class numeric_failure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File access and file-format errors.
class io_failure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw invalid_input(message);
}

/// Uniformly sampled real record starting at t = 0.
struct TimeTrace {
  std::vector<double> samples;
  double sample_rate = 1.0;  // Hz
  std::string unit;

  TimeTrace() = default;
  TimeTrace(std::vector<double> values, double rate, std::string unit_tag)
      : samples(std::move(values)), sample_rate(rate), unit(std::move(unit_tag)) {}

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  double dt() const { return 1.0 / sample_rate; }
  double time(std::size_t i) const { return static_cast<double>(i) / sample_rate; }
  double duration() const { return static_cast<double>(samples.size()) / sample_rate; }
  double operator[](std::size_t i) const { return samples[i]; }
  double& operator[](std::size_t i) { return samples[i]; }
  std::span<const double> view() const { return samples; }
};

inline double mean(std::span<const double> v) {
  if (v.empty()) return 0.0;
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc / static_cast<double>(v.size());
}

inline double variance(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return acc / static_cast<double>(v.size());
}

inline bool all_finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

inline double sign_of(double x) { return x < 0.0 ? -1.0 : 1.0; }

inline bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

}  // namespace omtin
