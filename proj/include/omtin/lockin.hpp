#pragma once

// Software lock-in demodulation and the third-order mixing test.
//
// Quadratures follow I(t) ~ X(t) cos(w t) + Y(t) sin(w t): the record is
// mixed with 2 cos and 2 sin, low-passed by a zero-phase windowed-sinc FIR
// and decimated to about eight samples per bandwidth.

#include <algorithm>
#include <cmath>
#include <vector>

#include "omtin/core.hpp"

namespace omtin {

struct QuadratureTrace {
  TimeTrace x;
  TimeTrace y;
  double carrier = 0.0;    // Hz
  double bandwidth = 0.0;  // Hz
};

struct TlsResult {
  double beta = 0.0;
  double sigma = 0.0;
};

struct CorrelationReport {
  double pearson_x = 0.0;
  double pearson_y = 0.0;
  TlsResult beta_x;
  TlsResult beta_y;
  std::size_t n_samples = 0;
};

/// Hann-windowed sinc low-pass, odd length ceil(4 fs / bandwidth), unit DC gain.
inline std::vector<double> lowpass_taps(double sample_rate, double bandwidth) {
  auto len = static_cast<std::size_t>(std::ceil(4.0 * sample_rate / bandwidth));
  if (len % 2 == 0) ++len;
  const double half = static_cast<double>(len - 1) / 2.0;
  const double fc = bandwidth / sample_rate;
  std::vector<double> h(len);
  double sum = 0.0;
  for (std::size_t i = 0; i < len; ++i) {
    const double m = static_cast<double>(i) - half;
    const double arg = two_pi * fc * m;
    const double sinc = m == 0.0 ? 1.0 : std::sin(arg) / arg;
    const double w = len == 1 ? 1.0 : 0.5 - 0.5 * std::cos(two_pi * static_cast<double>(i) /
                                                           static_cast<double>(len - 1));
    h[i] = sinc * w;
    sum += h[i];
  }
  for (auto& x : h) x /= sum;
  return h;
}

inline std::size_t decimation_factor(double sample_rate, double bandwidth) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(sample_rate / (8.0 * bandwidth)));
}

inline QuadratureTrace demodulate(const TimeTrace& trace, double carrier, double bandwidth) {
  const double nyquist = trace.sample_rate / 2.0;
  require(bandwidth > 0.0 && bandwidth < carrier && carrier < nyquist,
          "demodulate: need 0 < bandwidth < carrier < Nyquist");
  const auto taps = lowpass_taps(trace.sample_rate, bandwidth);
  const std::size_t decim = decimation_factor(trace.sample_rate, bandwidth);
  const auto half = static_cast<std::ptrdiff_t>(taps.size() / 2);
  const std::size_t n = trace.size();

  std::vector<double> mixed_c(n), mixed_s(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double cycles = std::fmod(carrier * static_cast<double>(i) / trace.sample_rate, 1.0);
    const double phase = two_pi * cycles;
    mixed_c[i] = 2.0 * trace[i] * std::cos(phase);
    mixed_s[i] = 2.0 * trace[i] * std::sin(phase);
  }

  const std::size_t n_out = (n + decim - 1) / decim;
  std::vector<double> xs(n_out), ys(n_out);
  for (std::size_t j = 0; j < n_out; ++j) {
    const auto centre = static_cast<std::ptrdiff_t>(j * decim);
    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, centre - half);
    const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(n) - 1, centre + half);
    double ax = 0.0, ay = 0.0;
    for (std::ptrdiff_t i = lo; i <= hi; ++i) {
      const double h = taps[static_cast<std::size_t>(i - centre + half)];
      ax += h * mixed_c[static_cast<std::size_t>(i)];
      ay += h * mixed_s[static_cast<std::size_t>(i)];
    }
    xs[j] = ax;
    ys[j] = ay;
  }
  const double out_rate = trace.sample_rate / static_cast<double>(decim);
  return {TimeTrace(std::move(xs), out_rate, trace.unit), TimeTrace(std::move(ys), out_rate, trace.unit),
          carrier, bandwidth};
}

/// Drops the first and last 5 / bandwidth seconds (filter transients).
inline QuadratureTrace discard_settling(const QuadratureTrace& q) {
  const auto skip = static_cast<std::size_t>(std::ceil(5.0 / q.bandwidth * q.x.sample_rate));
  require(q.x.size() > 2 * skip + 2, "quadrature trace too short to discard filter settling");
  auto cut = [&](const TimeTrace& t) {
    return TimeTrace(std::vector<double>(t.samples.begin() + static_cast<std::ptrdiff_t>(skip),
                                         t.samples.end() - static_cast<std::ptrdiff_t>(skip)),
                     t.sample_rate, t.unit);
  };
  return {cut(q.x), cut(q.y), q.carrier, q.bandwidth};
}

/// Unscaled third-order prediction at the sum of the three carriers.
inline QuadratureTrace predict_third_order(const QuadratureTrace& q1, const QuadratureTrace& q2,
                                           const QuadratureTrace& q3) {
  const std::size_t n = q1.x.size();
  require(q2.x.size() == n && q3.x.size() == n && q1.y.size() == n && q2.y.size() == n &&
              q3.y.size() == n,
          "predict_third_order: quadrature traces must share one time grid");
  require(q1.x.sample_rate == q2.x.sample_rate && q1.x.sample_rate == q3.x.sample_rate,
          "predict_third_order: quadrature traces must share one time grid");
  std::vector<double> x(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x1 = q1.x[i], x2 = q2.x[i], x3 = q3.x[i];
    const double y1 = q1.y[i], y2 = q2.y[i], y3 = q3.y[i];
    x[i] = x1 * x2 * x3 - x1 * y2 * y3 - x2 * y1 * y3 - x3 * y1 * y2;
    y[i] = x1 * x2 * y3 + x1 * x3 * y2 + x2 * x3 * y1 - y1 * y2 * y3;
  }
  const double rate = q1.x.sample_rate;
  return {TimeTrace(std::move(x), rate, "pred"), TimeTrace(std::move(y), rate, "pred"),
          q1.carrier + q2.carrier + q3.carrier, std::min({q1.bandwidth, q2.bandwidth, q3.bandwidth})};
}

inline double pearson(const TimeTrace& a, const TimeTrace& b) {
  require(a.size() == b.size() && a.size() >= 2, "pearson: need two equal-length traces of >= 2 samples");
  const double ma = mean(a.view()), mb = mean(b.view());
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  require(saa > 0.0 && sbb > 0.0, "pearson: constant input");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

/// Orthogonal-regression slope of meas against pred after mean removal, from
/// the minor eigenvector of the 2x2 covariance matrix. The uncertainty uses
/// the large-sample errors-in-variables variance for equal error variances,
/// evaluated with `effective_samples` independent samples (0: all of them).
inline TlsResult tls_fit(const TimeTrace& pred, const TimeTrace& meas, double effective_samples = 0.0) {
  require(pred.size() == meas.size() && pred.size() >= 3, "tls: need two equal-length traces of >= 3 samples");
  const std::size_t n = pred.size();
  const double mp = mean(pred.view()), mm = mean(meas.view());
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = pred[i] - mp, dy = meas[i] - mm;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  const double nn = static_cast<double>(n);
  sxx /= nn;
  syy /= nn;
  sxy /= nn;
  require(sxx > 0.0 && syy > 0.0, "tls: degenerate (zero-variance) input");
  if (sxy == 0.0) throw numeric_failure("tls: uncorrelated inputs, slope undefined");

  const double half_diff = 0.5 * (syy - sxx);
  const double root = std::hypot(half_diff, sxy);
  const double lambda_max = 0.5 * (sxx + syy) + root;
  const double lambda_min = std::max(0.0, 0.5 * (sxx + syy) - root);
  // Major eigenvector (sxy, lambda_max - sxx) gives the line direction.
  const double beta = (lambda_max - sxx) / sxy;
  const double b2 = 1.0 + beta * beta;
  const double signal = lambda_max - lambda_min;
  const double n_eff = effective_samples > 0.0 ? std::min(effective_samples, nn) : nn;
  require(n_eff > 1.0, "tls: need more than one independent sample");
  const double var = (lambda_min * b2 * b2 / signal + lambda_min * lambda_min * b2 * b2 * b2 / (signal * signal)) /
                     (n_eff - 1.0);
  return {beta, std::sqrt(std::max(0.0, var))};
}

/// Pearson and TLS statistics of measured vs predicted quadratures, after
/// discarding filter settling from both. Quadratures band-limited to B carry
/// about 2B independent samples per second, which sets the TLS uncertainty.
inline CorrelationReport correlate_quadratures(const QuadratureTrace& predicted,
                                               const QuadratureTrace& measured) {
  const auto p = discard_settling(predicted);
  const auto m = discard_settling(measured);
  const double bandwidth = std::min(p.bandwidth, m.bandwidth);
  const double n_eff = static_cast<double>(p.x.size()) * std::min(1.0, 2.0 * bandwidth / p.x.sample_rate);
  CorrelationReport r;
  r.pearson_x = pearson(p.x, m.x);
  r.pearson_y = pearson(p.y, m.y);
  r.beta_x = tls_fit(p.x, m.x, n_eff);
  r.beta_y = tls_fit(p.y, m.y, n_eff);
  r.n_samples = p.x.size();
  return r;
}

/// Demodulates the three parent tones and the candidate product at f4 and
/// compares the product quadratures with the cubic-mixing prediction.
inline CorrelationReport third_order_correlation(const TimeTrace& trace, double f1, double f2,
                                                 double f3, double f4, double bandwidth) {
  const auto q1 = demodulate(trace, f1, bandwidth);
  const auto q2 = demodulate(trace, f2, bandwidth);
  const auto q3 = demodulate(trace, f3, bandwidth);
  const auto q4 = demodulate(trace, f4, bandwidth);
  return correlate_quadratures(predict_third_order(q1, q2, q3), q4);
}

}  // namespace omtin
