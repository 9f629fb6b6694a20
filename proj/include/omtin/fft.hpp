#pragma once

// Thin RAII layer over FFTW's real-to-complex transforms. Plan creation is
// not thread-safe in FFTW, so it is serialized; execution is.

#include <fftw3.h>

#include <complex>
#include <cstddef>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include "omtin/core.hpp"

namespace omtin::fft {

namespace detail {

inline std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};

}  // namespace detail

/// Forward real transform of fixed length n; output has n / 2 + 1 bins.
class RealForward {
 public:
  explicit RealForward(std::size_t n)
      : n_(n),
        in_(static_cast<double*>(fftw_malloc(sizeof(double) * n))),
        out_(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * (n / 2 + 1)))) {
    std::lock_guard lock(detail::planner_mutex());
    plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), in_.get(), out_.get(), FFTW_ESTIMATE);
    if (plan_ == nullptr) throw numeric_failure("fft: could not create plan");
  }
  ~RealForward() {
    std::lock_guard lock(detail::planner_mutex());
    fftw_destroy_plan(plan_);
  }
  RealForward(const RealForward&) = delete;
  RealForward& operator=(const RealForward&) = delete;

  std::size_t size() const { return n_; }
  std::span<double> input() { return {in_.get(), n_}; }
  std::span<const std::complex<double>> output() const {
    return {reinterpret_cast<const std::complex<double>*>(out_.get()), n_ / 2 + 1};
  }
  void execute() { fftw_execute(plan_); }

 private:
  std::size_t n_;
  std::unique_ptr<double, detail::FftwFree> in_;
  std::unique_ptr<fftw_complex, detail::FftwFree> out_;
  fftw_plan plan_ = nullptr;
};

/// Unnormalized inverse real transform of length n.
class RealInverse {
 public:
  explicit RealInverse(std::size_t n)
      : n_(n),
        in_(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * (n / 2 + 1)))),
        out_(static_cast<double*>(fftw_malloc(sizeof(double) * n))) {
    std::lock_guard lock(detail::planner_mutex());
    plan_ = fftw_plan_dft_c2r_1d(static_cast<int>(n), in_.get(), out_.get(), FFTW_ESTIMATE);
    if (plan_ == nullptr) throw numeric_failure("fft: could not create plan");
  }
  ~RealInverse() {
    std::lock_guard lock(detail::planner_mutex());
    fftw_destroy_plan(plan_);
  }
  RealInverse(const RealInverse&) = delete;
  RealInverse& operator=(const RealInverse&) = delete;

  std::span<std::complex<double>> input() {
    return {reinterpret_cast<std::complex<double>*>(in_.get()), n_ / 2 + 1};
  }
  std::span<const double> output() const { return {out_.get(), n_}; }
  void execute() { fftw_execute(plan_); }

 private:
  std::size_t n_;
  std::unique_ptr<fftw_complex, detail::FftwFree> in_;
  std::unique_ptr<double, detail::FftwFree> out_;
  fftw_plan plan_ = nullptr;
};

inline std::size_t next_power_of_two(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

/// Full linear convolution, length a.size() + b.size() - 1.
inline std::vector<double> convolve(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) return {};
  const std::size_t out_len = a.size() + b.size() - 1;
  const std::size_t n = next_power_of_two(out_len);
  RealForward fa(n), fb(n);
  std::fill(fa.input().begin(), fa.input().end(), 0.0);
  std::fill(fb.input().begin(), fb.input().end(), 0.0);
  std::copy(a.begin(), a.end(), fa.input().begin());
  std::copy(b.begin(), b.end(), fb.input().begin());
  fa.execute();
  fb.execute();
  RealInverse inv(n);
  auto spec = inv.input();
  for (std::size_t k = 0; k < spec.size(); ++k) spec[k] = fa.output()[k] * fb.output()[k];
  inv.execute();
  std::vector<double> out(out_len);
  const double scale = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < out_len; ++i) out[i] = inv.output()[i] * scale;
  return out;
}

/// c[k] = sum_i a[i] b[i + k] for k = 0 .. b.size() - 1.
inline std::vector<double> correlate(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) return {};
  std::vector<double> reversed(a.rbegin(), a.rend());
  auto full = convolve(reversed, b);
  return std::vector<double>(full.begin() + static_cast<std::ptrdiff_t>(a.size() - 1),
                             full.begin() + static_cast<std::ptrdiff_t>(a.size() - 1 + b.size()));
}

}  // namespace omtin::fft
