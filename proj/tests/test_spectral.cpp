#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "omtin/random.hpp"
#include "omtin/spectral.hpp"

using namespace omtin;

namespace {

TimeTrace white(std::size_t n, double fs, double sigma, std::uint64_t seed) {
  CounterStream r(seed, "white");
  std::vector<double> v(n);
  for (auto& x : v) x = sigma * r.normal();
  return TimeTrace(v, fs, "V");
}

Spectrum from_values(std::vector<double> v, double df) {
  Spectrum s = Spectrum::on_grid(v.size(), df, "V^2/Hz");
  s.values = std::move(v);
  return s;
}

// Brute-force sums over the grid with the DC bin left out.
struct Direct {
  const std::vector<double>& s;
  double df;
  double at(long long k) const {
    return (k <= 0 || k >= static_cast<long long>(s.size())) ? 0.0 : s[static_cast<std::size_t>(k)];
  }
  long long n() const { return static_cast<long long>(s.size()); }

  double plus(long long k) const {
    double acc = 0;
    for (long long i = 1; i < k; ++i) acc += at(i) * at(k - i);
    return df * acc;
  }
  double minus(long long k) const {
    double acc = 0;
    for (long long i = 1; i < n(); ++i) acc += at(i) * at(i + k);
    return df * acc;
  }
  double plus_plus(long long k) const {
    double acc = 0;
    for (long long i = 1; i <= k; ++i)
      for (long long j = 1; j <= k - i; ++j) acc += at(i) * at(j) * at(k - i - j);
    return df * df * acc;
  }
  double plus_minus(long long k) const {
    double acc = 0;
    for (long long i = 1; i < n(); ++i)
      for (long long j = 1; j <= k + i; ++j) acc += at(i) * at(j) * at(k + i - j);
    return df * df * acc;
  }
  double minus_minus(long long k) const {
    double acc = 0;
    for (long long i = 1; i < n(); ++i)
      for (long long j = 1; j < n(); ++j) acc += at(i) * at(j) * at(k + i + j);
    return df * df * acc;
  }
};

std::size_t argmax(const Spectrum& s, std::size_t from = 1) {
  return static_cast<std::size_t>(std::max_element(s.values.begin() + static_cast<std::ptrdiff_t>(from), s.values.end()) -
                                  s.values.begin());
}

}  // namespace

TEST(Welch, WhiteNoiseLevel) {
  const double fs = 1e4;
  const auto s = welch_psd(white(1 << 20, fs, 1.0, 1), {1024, 0.5, Window::hann});
  double avg = 0;
  for (std::size_t k = 1; k + 1 < s.size(); ++k) avg += s.values[k];
  avg /= static_cast<double>(s.size() - 2);
  EXPECT_NEAR(avg / (2.0 / fs), 1.0, 0.05);
  EXPECT_EQ(s.unit, "V^2/Hz");
  EXPECT_DOUBLE_EQ(s.df, fs / 1024);
}

TEST(Welch, ParsevalRectangular) {
  const auto t = white(1 << 16, 1e3, 2.0, 2);
  const auto s = welch_psd(t, {4096, 0.0, Window::rectangular});
  double total = 0;
  for (double v : s.values) total += v * s.df;
  EXPECT_NEAR(total / variance(t.view()), 1.0, 0.01);
}

TEST(Welch, ToneAtBinCentre) {
  const double fs = 1024.0, a = 3.0;
  std::vector<double> v(1 << 15);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a * std::cos(two_pi * 100.0 * i / fs + 0.3);
  const auto s = welch_psd(TimeTrace(v, fs, "V"), {1024, 0.5, Window::hann});
  double p = 0;
  for (std::size_t k = 95; k <= 105; ++k) p += s.values[k] * s.df;
  EXPECT_NEAR(p / (a * a / 2), 1.0, 0.01);
}

TEST(Welch, Preconditions) {
  const auto t = white(1000, 1.0, 1.0, 1);
  EXPECT_THROW(welch_psd(t, {1000, 0.5, Window::hann}), invalid_input);
  EXPECT_THROW(welch_psd(t, {2048, 0.5, Window::hann}), invalid_input);
  EXPECT_THROW(welch_psd(t, {256, 1.0, Window::hann}), invalid_input);
}

TEST(Welch, Deterministic) {
  const auto t = white(1 << 14, 1.0, 1.0, 4);
  EXPECT_EQ(welch_psd(t).values, welch_psd(t).values);
}

TEST(Rin, ConstantGivesZero) {
  const auto s = rin_spectrum(TimeTrace(std::vector<double>(4096, 2.0), 1.0, "A"), {256, 0.5, Window::hann});
  for (double v : s.values) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(s.unit, "1/Hz");
  EXPECT_THROW(rin_spectrum(TimeTrace(std::vector<double>(4096, 0.0), 1.0, "A")), invalid_input);
}

TEST(Rin, OnePercentFluctuation) {
  auto t = white(1 << 18, 1e4, 0.01, 5);
  for (auto& x : t.samples) x += 1.0;
  const auto s = rin_spectrum(t, {1024, 0.5, Window::hann});
  EXPECT_NEAR(band_power(s, 0.0, 5e3) / 1e-4, 1.0, 0.05);
}

TEST(Band, ZeroAndFlat) {
  EXPECT_EQ(band_rms(from_values(std::vector<double>(100, 0.0), 1.0), 10, 20), 0.0);
  EXPECT_NEAR(band_rms(from_values(std::vector<double>(100, 3.0), 0.5), 10.2, 20.7), std::sqrt(3.0 * 10.5), 1e-12);
  EXPECT_THROW(band_rms(from_values(std::vector<double>(100, 3.0), 1.0), 20, 10), invalid_input);
  EXPECT_THROW(band_rms(from_values(std::vector<double>(100, 3.0), 1.0), 10, 200), invalid_input);
}

TEST(Band, TonePower) {
  const double fs = 1e4, p = 0.5 * 0.2 * 0.2;
  std::vector<double> v(1 << 16);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = 0.2 * std::cos(two_pi * 1234.5 * i / fs);
  const auto s = welch_psd(TimeTrace(v, fs, "V"), {4096, 0.5, Window::hann});
  EXPECT_NEAR(band_rms(s, 1100, 1400) / std::sqrt(p), 1.0, 0.02);
}

TEST(Snr, FlatAndTenfold) {
  std::vector<double> v(200, 1.0);
  EXPECT_NEAR(snr_db(from_values(v, 1.0), {10, 20}, {50, 90}), 0.0, 1e-12);
  for (std::size_t k = 5; k <= 25; ++k) v[k] = 10.0;
  EXPECT_NEAR(snr_db(from_values(v, 1.0), {10, 20}, {50, 90}), 10.0, 1e-12);
  EXPECT_THROW(snr_db(from_values(v, 1.0), {10, 20}, {15, 30}), invalid_input);
  EXPECT_THROW(snr_db(from_values(std::vector<double>(200, 0.0), 1.0), {10, 20}, {50, 90}), invalid_input);
}

TEST(Snr, ModeOverFloorMatchesHandIntegral) {
  // Lorentzian line over a flat floor, integrated by an independent
  // fine-step trapezoid of the same piecewise-linear interpolant.
  std::vector<double> v(400);
  for (std::size_t k = 0; k < v.size(); ++k) {
    const double u = (k - 200.0) / 3.0;
    v[k] = 1e-3 + 1.0 / (1 + u * u);
  }
  const auto s = from_values(v, 2.0);
  auto interp = [&](double f) {
    const double pos = f / 2.0;
    const auto k = static_cast<std::size_t>(pos);
    return v[k] + (v[k + 1] - v[k]) * (pos - k);
  };
  auto integral = [&](double a, double b) {
    const int n = 200000;
    double acc = 0;
    for (int i = 0; i < n; ++i) {
      const double f0 = a + (b - a) * i / n, f1 = a + (b - a) * (i + 1) / n;
      acc += 0.5 * (interp(f0) + interp(f1)) * (f1 - f0);
    }
    return acc;
  };
  const double expected = 10 * std::log10(integral(380, 420) / (integral(600, 700) / 100 * 40));
  EXPECT_NEAR(snr_db(s, {380, 420}, {600, 700}), expected, 0.1);
}

TEST(Tin2, SingleToneDoubles) {
  std::vector<double> v(128, 0.0);
  v[10] = 1.0;
  const auto p = tin2_proxies(from_values(v, 1.0));
  EXPECT_EQ(argmax(p.s_plus), 20u);
  for (std::size_t k = 0; k < 128; ++k) {
    if (k != 20) {
      EXPECT_NEAR(p.s_plus.values[k], 0.0, 1e-12);
    }
  }
}

TEST(Tin2, TwoTones) {
  std::vector<double> v(256, 0.0);
  v[20] = 1.0;
  v[50] = 1.0;
  const auto p = tin2_proxies(from_values(v, 1.0));
  EXPECT_NEAR(p.s_plus.values[70], 2.0, 1e-12);
  EXPECT_NEAR(p.s_plus.values[40], 1.0, 1e-12);
  EXPECT_NEAR(p.s_plus.values[100], 1.0, 1e-12);
  EXPECT_EQ(argmax(p.s_plus), 70u);
  EXPECT_EQ(argmax(p.s_minus), 30u);
}

TEST(Tin2, MatchesDirectSums) {
  CounterStream r(7, "spectrum");
  std::vector<double> v(200);
  for (auto& x : v) x = r.uniform();
  const auto s = from_values(v, 0.7);
  const auto p = tin2_proxies(s);
  const Direct d{v, 0.7};
  for (long long k = 0; k < 200; ++k) {
    EXPECT_NEAR(p.s_plus.values[k], d.plus(k), 1e-10 * std::max(1.0, d.plus(k)));
    EXPECT_NEAR(p.s_minus.values[k], d.minus(k), 1e-10 * std::max(1.0, d.minus(k)));
  }
}

TEST(Tin3, MatchesDirectSums) {
  CounterStream r(8, "spectrum");
  std::vector<double> v(256);
  for (auto& x : v) x = r.uniform() * r.uniform();
  const auto s = from_values(v, 1.3);
  const auto p = tin3_proxies(s);
  const Direct d{v, 1.3};
  // relative to the largest value of each proxy; tails run to exact zeros
  double top_pp = 0, top_pm = 0, top_mm = 0;
  for (long long k = 0; k < 256; ++k) {
    top_pp = std::max(top_pp, d.plus_plus(k));
    top_pm = std::max(top_pm, d.plus_minus(k));
    top_mm = std::max(top_mm, d.minus_minus(k));
  }
  double worst = 0;
  for (long long k = 0; k < 256; ++k) {
    worst = std::max(worst, std::abs(p.s_pp.values[k] - d.plus_plus(k)) / top_pp);
    worst = std::max(worst, std::abs(p.s_pm.values[k] - d.plus_minus(k)) / top_pm);
    worst = std::max(worst, std::abs(p.s_mm.values[k] - d.minus_minus(k)) / top_mm);
  }
  EXPECT_LT(worst, 1e-10);
}

TEST(Tin3, SingleTone) {
  std::vector<double> v(128, 0.0);
  v[12] = 1.0;
  const auto p = tin3_proxies(from_values(v, 1.0));
  EXPECT_EQ(argmax(p.s_pp), 36u);
  EXPECT_EQ(argmax(p.s_pm), 12u);
}

TEST(Tin3, ThreeTonesSumPeak) {
  const double df = 1e3;
  std::vector<double> v(2048, 1e-6);
  v[103] = v[296] = v[652] = 1.0;
  const auto p = tin3_proxies(from_values(v, df));
  EXPECT_EQ(argmax(p.s_pp, 700), 1051u);
}

TEST(Proxies, ZeroSpectrumGivesZero) {
  const auto s = from_values(std::vector<double>(64, 0.0), 1.0);
  const auto a = tin2_proxies(s);
  const auto b = tin3_proxies(s);
  for (const auto* x : {&a.s_plus, &a.s_minus, &b.s_pp, &b.s_pm, &b.s_mm})
    for (double v : x->values) EXPECT_EQ(v, 0.0);
}

TEST(Proxies, ZeroPaddingInvariant) {
  CounterStream r(9, "pad");
  std::vector<double> v(100);
  for (auto& x : v) x = r.uniform();
  auto padded = v;
  padded.resize(180, 0.0);
  const auto a = tin3_proxies(from_values(v, 1.0));
  const auto b = tin3_proxies(from_values(padded, 1.0));
  const auto c = tin2_proxies(from_values(v, 1.0));
  const auto d = tin2_proxies(from_values(padded, 1.0));
  for (std::size_t k = 0; k < 100; ++k) {
    // S++ and S+ only see lower frequencies; the others see the same nonzero bins
    EXPECT_NEAR(a.s_pp.values[k], b.s_pp.values[k], 1e-12 * std::max(1.0, a.s_pp.values[k]));
    EXPECT_NEAR(a.s_mm.values[k], b.s_mm.values[k], 1e-12 * std::max(1.0, a.s_mm.values[k]));
    EXPECT_NEAR(c.s_plus.values[k], d.s_plus.values[k], 1e-12 * std::max(1.0, c.s_plus.values[k]));
    EXPECT_NEAR(c.s_minus.values[k], d.s_minus.values[k], 1e-12 * std::max(1.0, c.s_minus.values[k]));
  }
}

TEST(Proxies, NormalizeMax) {
  std::vector<double> v = {0, 1, 4, 2, 8, 1};
  const auto n = normalize_max(from_values(v, 1.0), 0.0, 3.0);
  EXPECT_DOUBLE_EQ(n.values[2], 1.0);
  EXPECT_DOUBLE_EQ(n.values[4], 2.0);
}
