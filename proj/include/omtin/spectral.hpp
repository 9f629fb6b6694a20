#pragma once

// Welch PSD estimation, band statistics and the intermodulation proxy spectra.

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "omtin/core.hpp"
#include "omtin/fft.hpp"

namespace omtin {

enum class Window { hann, rectangular };

inline const char* to_string(Window w) { return w == Window::hann ? "hann" : "rect"; }

inline Window parse_window(const std::string& name) {
  if (name == "hann") return Window::hann;
  if (name == "rect" || name == "rectangular") return Window::rectangular;
  throw invalid_input("unknown window '" + name + "' (expected hann or rect)");
}

/// Single-sided PSD on a uniform grid starting at 0 Hz.
struct Spectrum {
  std::vector<double> frequencies;  // Hz
  std::vector<double> values;
  std::string unit;
  double df = 0.0;
  std::string window = "none";
  double overlap = 0.0;
  std::size_t segments = 0;

  std::size_t size() const { return values.size(); }

  static Spectrum on_grid(std::size_t n, double df, std::string unit) {
    Spectrum s;
    s.df = df;
    s.unit = std::move(unit);
    s.frequencies.resize(n);
    for (std::size_t k = 0; k < n; ++k) s.frequencies[k] = static_cast<double>(k) * df;
    s.values.assign(n, 0.0);
    return s;
  }

  /// Index of the bin nearest to f.
  std::size_t bin(double f) const {
    const auto k = static_cast<long long>(std::llround(f / df));
    return static_cast<std::size_t>(std::clamp<long long>(k, 0, static_cast<long long>(size()) - 1));
  }
};

struct WelchOptions {
  std::size_t segment_length = 4096;
  double overlap = 0.5;
  Window window = Window::hann;
};

namespace detail {

inline std::vector<double> make_window(Window w, std::size_t n) {
  std::vector<double> out(n, 1.0);
  if (w == Window::hann) {
    // periodic Hann, the usual choice for spectral averaging
    for (std::size_t i = 0; i < n; ++i)
      out[i] = 0.5 - 0.5 * std::cos(two_pi * static_cast<double>(i) / static_cast<double>(n));
  }
  return out;
}

}  // namespace detail

/// Averaged, window-power-corrected periodogram. The trace mean is removed
/// first; segments are averaged in index order.
inline Spectrum welch_psd(const TimeTrace& trace, const WelchOptions& opt = {}) {
  const std::size_t seg = opt.segment_length;
  require(is_power_of_two(seg) && seg >= 2, "welch: segment length must be a power of two >= 2");
  require(opt.overlap >= 0.0 && opt.overlap < 1.0, "welch: overlap must lie in [0, 1)");
  require(trace.size() >= seg, "welch: trace shorter than one segment");
  require(trace.sample_rate > 0.0, "welch: sample rate must be > 0");

  const auto hop = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(static_cast<double>(seg) * (1.0 - opt.overlap))));
  const std::size_t n_segments = 1 + (trace.size() - seg) / hop;
  const auto window = detail::make_window(opt.window, seg);
  double window_power = 0.0;
  for (double w : window) window_power += w * w;

  const double m = mean(trace.view());
  fft::RealForward fft(seg);
  const std::size_t n_bins = seg / 2 + 1;
  std::vector<double> acc(n_bins, 0.0);
  for (std::size_t s = 0; s < n_segments; ++s) {
    auto in = fft.input();
    const std::size_t start = s * hop;
    for (std::size_t i = 0; i < seg; ++i) in[i] = (trace[start + i] - m) * window[i];
    fft.execute();
    const auto out = fft.output();
    for (std::size_t k = 0; k < n_bins; ++k) acc[k] += std::norm(out[k]);
  }

  Spectrum s = Spectrum::on_grid(n_bins, trace.sample_rate / static_cast<double>(seg),
                                 trace.unit + "^2/Hz");
  const double scale = 1.0 / (trace.sample_rate * window_power * static_cast<double>(n_segments));
  for (std::size_t k = 0; k < n_bins; ++k) {
    const bool edge = (k == 0 || k == n_bins - 1);
    s.values[k] = acc[k] * scale * (edge ? 1.0 : 2.0);
  }
  s.window = to_string(opt.window);
  s.overlap = opt.overlap;
  s.segments = n_segments;
  return s;
}

/// Welch PSD of I / mean(I) - 1.
inline Spectrum rin_spectrum(const TimeTrace& photocurrent, const WelchOptions& opt = {}) {
  const double m = mean(photocurrent.view());
  require(m != 0.0 && std::isfinite(m), "rin: photocurrent mean must be non-zero");
  TimeTrace rel(std::vector<double>(photocurrent.size()), photocurrent.sample_rate, "1");
  for (std::size_t i = 0; i < rel.size(); ++i) rel[i] = photocurrent[i] / m - 1.0;
  Spectrum s = welch_psd(rel, opt);
  s.unit = "1/Hz";
  return s;
}

/// Integral of the piecewise-linear PSD over [f_lo, f_hi].
inline double band_power(const Spectrum& s, double f_lo, double f_hi) {
  require(s.size() >= 2 && s.df > 0.0, "band: spectrum needs at least two bins");
  const double f_max = s.frequencies.back();
  require(f_lo >= 0.0 && f_lo < f_hi && f_hi <= f_max * (1.0 + 1e-12),
          "band: need 0 <= f_lo < f_hi <= max frequency");
  f_hi = std::min(f_hi, f_max);
  auto value_at = [&](double f) {
    const double pos = f / s.df;
    const auto k = std::min(static_cast<std::size_t>(pos), s.size() - 2);
    const double frac = pos - static_cast<double>(k);
    return s.values[k] * (1.0 - frac) + s.values[k + 1] * frac;
  };
  const auto first = static_cast<std::size_t>(std::ceil(f_lo / s.df));
  const auto last = static_cast<std::size_t>(std::floor(f_hi / s.df));
  double acc = 0.0;
  double prev_f = f_lo;
  double prev_v = value_at(f_lo);
  for (std::size_t k = first; k <= last && k < s.size(); ++k) {
    const double f = s.frequencies[k];
    if (f <= prev_f) continue;
    acc += 0.5 * (prev_v + s.values[k]) * (f - prev_f);
    prev_f = f;
    prev_v = s.values[k];
  }
  if (f_hi > prev_f) acc += 0.5 * (prev_v + value_at(f_hi)) * (f_hi - prev_f);
  return acc;
}

inline double band_rms(const Spectrum& s, double f_lo, double f_hi) {
  return std::sqrt(std::max(0.0, band_power(s, f_lo, f_hi)));
}

/// Ratio of signal-band power to the noise-band density scaled to the signal
/// bandwidth, in dB.
inline double snr_db(const Spectrum& s, std::pair<double, double> signal,
                     std::pair<double, double> noise) {
  require(signal.first < signal.second && noise.first < noise.second, "snr: empty band");
  require(signal.second <= noise.first || noise.second <= signal.first,
          "snr: signal and noise bands must be disjoint");
  const double p_signal = band_power(s, signal.first, signal.second);
  const double p_noise = band_power(s, noise.first, noise.second);
  if (!(p_noise > 0.0)) throw invalid_input("snr: zero noise power");
  const double density = p_noise / (noise.second - noise.first);
  return 10.0 * std::log10(p_signal / (density * (signal.second - signal.first)));
}

struct Tin2Proxies {
  Spectrum s_plus;
  Spectrum s_minus;
};

struct Tin3Proxies {
  Spectrum s_pp;
  Spectrum s_pm;
  Spectrum s_mm;
};

namespace detail {

inline std::vector<double> without_dc(const Spectrum& s) {
  std::vector<double> v = s.values;
  if (!v.empty()) v[0] = 0.0;
  return v;
}

inline Spectrum proxy_like(const Spectrum& s, std::vector<double> values, const std::string& unit) {
  Spectrum out = Spectrum::on_grid(s.size(), s.df, unit);
  out.frequencies = s.frequencies;
  for (std::size_t k = 0; k < out.size(); ++k) out.values[k] = std::max(0.0, values[k]);
  out.window = s.window;
  out.overlap = s.overlap;
  out.segments = s.segments;
  return out;
}

}  // namespace detail

/// Second-order intermodulation proxies on the input grid, DC bin excluded:
///   S+(k) = df sum_i S(i) S(k - i),   S-(k) = df sum_i S(i) S(i + k).
inline Tin2Proxies tin2_proxies(const Spectrum& s) {
  const auto v = detail::without_dc(s);
  auto sum = fft::convolve(v, v);
  auto diff = fft::correlate(v, v);
  for (auto& x : sum) x *= s.df;
  for (auto& x : diff) x *= s.df;
  const std::string unit = "(" + s.unit + ")^2*Hz";
  return {detail::proxy_like(s, std::move(sum), unit), detail::proxy_like(s, std::move(diff), unit)};
}

/// Third-order proxies (Riemann measure df^2) via a pair convolution
/// P = S * S:
///   S++(k) = (P * S)(k),  S+-(k) = sum_i S(i) P(k + i),  S--(k) = sum_m P(m) S(k + m).
inline Tin3Proxies tin3_proxies(const Spectrum& s) {
  const auto v = detail::without_dc(s);
  const auto pair = fft::convolve(v, v);
  auto pp = fft::convolve(pair, v);
  auto pm = fft::correlate(v, pair);
  auto mm = fft::correlate(pair, v);
  const double measure = s.df * s.df;
  for (auto& x : pp) x *= measure;
  for (auto& x : pm) x *= measure;
  for (auto& x : mm) x *= measure;
  const std::string unit = "(" + s.unit + ")^3*Hz^2";
  return {detail::proxy_like(s, std::move(pp), unit), detail::proxy_like(s, std::move(pm), unit),
          detail::proxy_like(s, std::move(mm), unit)};
}

/// Divides by the maximum over [f_lo, f_hi].
inline Spectrum normalize_max(Spectrum s, double f_lo, double f_hi) {
  require(f_lo < f_hi, "normalize: empty span");
  double peak = 0.0;
  for (std::size_t k = 0; k < s.size(); ++k)
    if (s.frequencies[k] >= f_lo && s.frequencies[k] <= f_hi) peak = std::max(peak, s.values[k]);
  if (peak > 0.0)
    for (auto& x : s.values) x /= peak;
  s.unit = "normalized";
  return s;
}

/// Local maxima standing above `threshold` times the median of the spectrum.
inline std::vector<std::size_t> find_peaks(const Spectrum& s, double threshold, double f_lo = 0.0,
                                           double f_hi = INFINITY) {
  std::vector<double> sorted = s.values;
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(sorted.size() / 2),
                   sorted.end());
  const double floor = sorted[sorted.size() / 2];
  std::vector<std::size_t> out;
  for (std::size_t k = 1; k + 1 < s.size(); ++k) {
    if (s.frequencies[k] < f_lo || s.frequencies[k] > f_hi) continue;
    if (s.values[k] > s.values[k - 1] && s.values[k] >= s.values[k + 1] &&
        s.values[k] > threshold * floor)
      out.push_back(k);
  }
  return out;
}

}  // namespace omtin
