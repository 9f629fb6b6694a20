#pragma once

// Characterization fits: optical spring, nonlinear-damping ringdown,
// modulated resonance scans with g0 extraction, the analytic direct-detection
// PSD model and a Lorentzian peak locator.

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "omtin/core.hpp"
#include "omtin/dynamics.hpp"
#include "omtin/fft.hpp"
#include "omtin/optimize.hpp"
#include "omtin/params.hpp"
#include "omtin/spectral.hpp"

namespace omtin {

// ---------------------------------------------------------------- optical spring

struct SpringEntry {
  double power_ratio = 1.0;  // P_i / P_1
  double omega_eff = 0.0;    // rad/s
  double sigma_omega = 1.0;  // rad/s
};

struct SpringSeries {
  std::vector<SpringEntry> entries;

  void validate() const {
    require(entries.size() >= 3, "spring fit: need at least three entries");
    require(entries.front().power_ratio == 1.0, "spring fit: first power ratio must be 1");
    for (const auto& e : entries) {
      require(e.power_ratio > 0.0, "spring fit: power ratios must be > 0");
      require(e.sigma_omega > 0.0, "spring fit: frequency uncertainties must be > 0");
    }
  }
};

/// Omega_m + gamma_m C nu / (1 + nu^2).
inline double spring_frequency(double omega_m, double gamma_m, double c, double nu) {
  return omega_m + gamma_m * c * nu / (1.0 + nu * nu);
}

/// Detunings at constant intracavity power: 1 + nu_i^2 = (1 + nu_1^2) P_i / P_1.
/// Returns nullopt when some ratio needs 1 + nu^2 < 1.
inline std::optional<std::vector<double>> spring_detunings(double nu_1, const std::vector<double>& ratios) {
  std::vector<double> nu(ratios.size());
  const double base = 1.0 + nu_1 * nu_1;
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    const double arg = base * ratios[i] - 1.0;
    if (arg < 0.0) return std::nullopt;
    nu[i] = i == 0 ? nu_1 : sign_of(nu_1) * std::sqrt(arg);
  }
  return nu;
}

struct SpringFitOptions {
  bool fix_omega_m = false;
};

inline FitResult fit_optical_spring(const SpringSeries& series, double gamma_m, double omega_m_guess,
                                    const SpringFitOptions& opt = {}) {
  series.validate();
  require(gamma_m > 0.0 && omega_m_guess > 0.0, "spring fit: gamma_m and omega_m must be > 0");
  const auto& e = series.entries;
  std::vector<double> ratios;
  for (const auto& x : e) ratios.push_back(x.power_ratio);

  // For fixed nu_1 the model is linear in (omega_m, gamma_m C): scan nu_1 for
  // a starting point, solving the weighted linear problem at each candidate.
  double best_cost = INFINITY, best_nu = 0.0, best_c = 0.0, best_omega = omega_m_guess;
  for (int s = -1; s <= 1; s += 2) {
    for (int k = 0; k <= 400; ++k) {
      const double nu_1 = s * std::pow(10.0, -2.0 + 4.0 * k / 400.0);
      const auto nus = spring_detunings(nu_1, ratios);
      if (!nus) continue;
      Eigen::MatrixXd a(static_cast<Eigen::Index>(e.size()), opt.fix_omega_m ? 1 : 2);
      Eigen::VectorXd b(static_cast<Eigen::Index>(e.size()));
      for (std::size_t i = 0; i < e.size(); ++i) {
        const double w = 1.0 / e[i].sigma_omega;
        const double x = (*nus)[i] / (1.0 + (*nus)[i] * (*nus)[i]);
        const auto row = static_cast<Eigen::Index>(i);
        if (opt.fix_omega_m) {
          a(row, 0) = w * gamma_m * x;
          b(row) = w * (e[i].omega_eff - omega_m_guess);
        } else {
          a(row, 0) = w;
          a(row, 1) = w * gamma_m * x;
          b(row) = w * e[i].omega_eff;
        }
      }
      const Eigen::VectorXd sol = a.colPivHouseholderQr().solve(b);
      const double cost = (a * sol - b).squaredNorm();
      const double c = opt.fix_omega_m ? sol(0) : sol(1);
      if (c > 0.0 && cost < best_cost) {
        best_cost = cost;
        best_nu = nu_1;
        best_c = c;
        best_omega = opt.fix_omega_m ? omega_m_guess : sol(0);
      }
    }
  }
  if (!std::isfinite(best_cost)) throw invalid_input("spring fit: no detuning keeps the extrapolation argument >= 0");

  const double sign = sign_of(best_nu);
  ResidualFn f = [&](const Eigen::VectorXd& p) -> std::optional<Eigen::VectorXd> {
    const double c = p[0], nu_1 = p[1];
    const double omega_m = opt.fix_omega_m ? omega_m_guess : p[2];
    if (nu_1 * sign <= 0.0) return std::nullopt;
    const auto nus = spring_detunings(nu_1, ratios);
    if (!nus) return std::nullopt;
    Eigen::VectorXd r(static_cast<Eigen::Index>(e.size()));
    for (std::size_t i = 0; i < e.size(); ++i)
      r(static_cast<Eigen::Index>(i)) =
          (spring_frequency(omega_m, gamma_m, c, (*nus)[i]) - e[i].omega_eff) / e[i].sigma_omega;
    return r;
  };
  Eigen::VectorXd x0(opt.fix_omega_m ? 2 : 3), scale(x0.size());
  x0[0] = best_c;
  x0[1] = best_nu;
  scale[0] = std::abs(best_c);
  scale[1] = 1e-3;
  if (!opt.fix_omega_m) {
    x0[2] = best_omega;
    scale[2] = std::abs(best_omega) * 1e-6;
  }
  const auto lm = levenberg_marquardt(f, x0, scale);
  if (!spring_detunings(lm.params[1], ratios))
    throw invalid_input("spring fit: extrapolated detuning argument < 0");
  const auto sig = sigmas_from(lm);

  FitResult out;
  out.add("C", lm.params[0], sig[0]);
  out.add("nu_1", lm.params[1], sig[1]);
  if (opt.fix_omega_m)
    out.add("omega_m", omega_m_guess, 0.0);
  else
    out.add("omega_m", lm.params[2], sig[2]);
  out.residual_norm = lm.residual_norm;
  out.converged = lm.converged;
  out.n_iter = lm.iterations;
  return out;
}

// ---------------------------------------------------------------- ringdown

struct RingdownFitOptions {
  std::optional<double> omega_m;  // rad/s; adds Q to the result when set
};

inline FitResult fit_ringdown(const TimeTrace& energy, const RingdownFitOptions& opt = {}) {
  const std::size_t n = energy.size();
  require(n >= 8, "ringdown fit: need at least 8 samples");
  require(all_finite(energy.view()), "ringdown fit: non-finite samples");

  // Starting point: offset from the tail, then the local decay rate of
  // ln(E - offset) in blocks regressed against the block energy, since
  // -d ln(E) / dt = gamma_m + beta E.
  const std::size_t tail = std::max<std::size_t>(1, n / 20);
  double offset0 = mean(std::span(energy.samples).last(tail));
  const double e_start = mean(std::span(energy.samples).first(std::max<std::size_t>(1, n / 200)));
  double e0 = e_start - offset0;
  require(e0 > 0.0, "ringdown fit: trace does not decay");
  if (offset0 < 0.0) offset0 = 0.0;

  std::vector<double> block_rate, block_energy;
  const std::size_t n_blocks = 40;
  const std::size_t block = std::max<std::size_t>(4, n / n_blocks);
  for (std::size_t b0 = 0; b0 + block <= n; b0 += block) {
    double st = 0, sl = 0, stt = 0, stl = 0, se = 0;
    std::size_t cnt = 0;
    for (std::size_t i = b0; i < b0 + block; ++i) {
      const double v = energy[i] - offset0;
      if (v <= 0.05 * e0) continue;
      const double t = energy.time(i), l = std::log(v);
      st += t;
      sl += l;
      stt += t * t;
      stl += t * l;
      se += v;
      ++cnt;
    }
    if (cnt < 4) continue;
    const double c = static_cast<double>(cnt);
    const double denom = c * stt - st * st;
    if (denom <= 0.0) continue;
    block_rate.push_back(-(c * stl - st * sl) / denom);
    block_energy.push_back(se / c);
  }
  double gamma0 = 0.0, beta0 = 0.0;
  if (block_rate.size() >= 2) {
    const double me = mean(block_energy), mr = mean(block_rate);
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < block_rate.size(); ++i) {
      sxy += (block_energy[i] - me) * (block_rate[i] - mr);
      sxx += (block_energy[i] - me) * (block_energy[i] - me);
    }
    beta0 = sxx > 0.0 ? sxy / sxx : 0.0;
    gamma0 = mr - beta0 * me;
    if (gamma0 <= 0.0) {
      gamma0 = std::max(mr, 1e-12);
      beta0 = 0.0;
    }
  } else {
    gamma0 = 1.0 / energy.duration();
  }

  const double t_end = energy.time(n - 1);
  double floor = 0.0;
  for (double v : energy.samples) floor = std::max(floor, std::abs(v));
  floor *= 1e-6;
  ResidualFn f = [&](const Eigen::VectorXd& p) -> std::optional<Eigen::VectorXd> {
    const double gamma = p[0], beta = p[1], amp = p[2], off = p[3];
    if (gamma <= 0.0 || amp <= 0.0) return std::nullopt;
    if ((gamma + beta * amp) * std::exp(gamma * t_end) - beta * amp <= 0.0) return std::nullopt;
    Eigen::VectorXd r(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
      const double model = ringdown_energy(energy.time(i), amp, gamma, beta, off);
      r(static_cast<Eigen::Index>(i)) = (model - energy[i]) / std::max(std::abs(energy[i]), floor);
    }
    return r;
  };
  Eigen::VectorXd x0(4), scale(4);
  x0 << gamma0, beta0, e0, offset0;
  scale << gamma0, gamma0 / e0, e0, std::max(std::abs(offset0), 1e-3 * e0);
  auto lm = levenberg_marquardt(f, x0, scale);
  // A second pass from a pure exponential guards against a poor block estimate.
  x0 << lm.params[0] + lm.params[1] * lm.params[2], 0.0, lm.params[2], lm.params[3];
  if (f(x0)) {
    auto alt = levenberg_marquardt(f, x0, scale);
    if (alt.residual_norm < lm.residual_norm) lm = alt;
  }
  const auto sig = sigmas_from(lm);

  FitResult out;
  out.add("gamma_m", lm.params[0], sig[0]);
  out.add("beta_nl", lm.params[1], sig[1]);
  out.add("E0", lm.params[2], sig[2]);
  out.add("offset", lm.params[3], sig[3]);
  if (opt.omega_m) {
    const double q = *opt.omega_m / lm.params[0];
    out.add("Q", q, q * sig[0] / lm.params[0]);
  }
  out.residual_norm = lm.residual_norm;
  out.converged = lm.converged;
  out.n_iter = lm.iterations;
  return out;
}

// ---------------------------------------------------------------- modulated scans

struct ScanModulation {
  double alpha = 0.0;  // amplitude in nu
  double omega = 0.0;  // rad/s
  double phi = 0.0;    // rad
};

struct ScanParams {
  double kappa = 0.0;  // rad/s
  double t0 = 0.0;     // s, time of resonance crossing
  double i_max = 1.0;
  double i_bg = 0.0;
  std::vector<ScanModulation> modulations;

  /// nu(t) = (4 pi rate / kappa) (t - t0).
  double ramp(double t, double scan_rate) const { return 2.0 * two_pi * scan_rate / kappa * (t - t0); }
  double nu_offset(double scan_rate) const { return ramp(0.0, scan_rate); }
};

inline double scan_model(const ScanParams& p, double t, double scan_rate) {
  double nu = p.ramp(t, scan_rate);
  for (const auto& m : p.modulations) nu += m.alpha * std::cos(m.omega * t + m.phi);
  return p.i_bg + (p.i_max - p.i_bg) / (1.0 + nu * nu);
}

/// Transmission of a linear laser sweep across the resonance, distorted by
/// sinusoidal detuning modulations.
inline TimeTrace scan_trace(const ScanParams& p, double scan_rate, double duration, double sample_rate) {
  detail::check_sampling(duration, sample_rate);
  require(p.kappa > 0.0 && scan_rate != 0.0, "scan: kappa and scan rate must be non-zero");
  const std::size_t n = detail::sample_count(duration, sample_rate);
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = scan_model(p, static_cast<double>(i) / sample_rate, scan_rate);
  return TimeTrace(std::move(v), sample_rate, "A");
}

struct ScanFitResult {
  FitResult fit;
  ScanParams params;
  std::vector<std::string> warnings;
};

namespace detail {

inline Eigen::VectorXd pack_scan(const ScanParams& p) {
  Eigen::VectorXd x(4 + 3 * static_cast<Eigen::Index>(p.modulations.size()));
  x << p.kappa, p.t0, p.i_max, p.i_bg, Eigen::VectorXd::Zero(x.size() - 4);
  for (std::size_t i = 0; i < p.modulations.size(); ++i) {
    const auto b = 4 + 3 * static_cast<Eigen::Index>(i);
    x[b] = p.modulations[i].alpha;
    x[b + 1] = p.modulations[i].omega;
    x[b + 2] = p.modulations[i].phi;
  }
  return x;
}

inline ScanParams unpack_scan(const Eigen::VectorXd& x, std::size_t n_modes) {
  ScanParams p;
  p.kappa = x[0];
  p.t0 = x[1];
  p.i_max = x[2];
  p.i_bg = x[3];
  for (std::size_t i = 0; i < n_modes; ++i) {
    const auto b = 4 + 3 * static_cast<Eigen::Index>(i);
    p.modulations.push_back({x[b], x[b + 1], x[b + 2]});
  }
  return p;
}

inline LmResult fit_scan_params(const TimeTrace& tr, double scan_rate, const ScanParams& start) {
  const std::size_t n_modes = start.modulations.size();
  const double span = std::abs(start.i_max - start.i_bg);
  ResidualFn f = [&](const Eigen::VectorXd& x) -> std::optional<Eigen::VectorXd> {
    if (x[0] <= 0.0) return std::nullopt;
    const ScanParams p = unpack_scan(x, n_modes);
    Eigen::VectorXd r(static_cast<Eigen::Index>(tr.size()));
    for (std::size_t i = 0; i < tr.size(); ++i)
      r(static_cast<Eigen::Index>(i)) = (scan_model(p, tr.time(i), scan_rate) - tr[i]) / span;
    return r;
  };
  Eigen::VectorXd scale = pack_scan(start).cwiseAbs();
  scale[1] = tr.duration();
  scale[2] = span;
  scale[3] = span;
  for (std::size_t i = 0; i < n_modes; ++i) {
    const auto b = 4 + 3 * static_cast<Eigen::Index>(i);
    scale[b] = std::max(std::abs(start.modulations[i].alpha), 1e-3);
    scale[b + 1] = std::max(start.modulations[i].omega, 1.0 / tr.duration());
    scale[b + 2] = 1.0;
  }
  return levenberg_marquardt(f, pack_scan(start), scale);
}

inline double wrap_phase(double phi) {
  phi = std::fmod(phi, two_pi);
  if (phi < 0.0) phi += two_pi;
  return phi;
}

}  // namespace detail

/// Fits kappa, the crossing time, the calibration levels and n_modes
/// sinusoidal modulations. Modulation frequencies are seeded by a matched
/// filter on the residual of a plain Lorentzian fit; each modulation is then
/// refined from 8 uniformly spaced starting phases, keeping the lowest
/// residual (ties go to the lowest start index).
inline ScanFitResult fit_scan(const TimeTrace& transmission, double scan_rate, std::size_t n_modes) {
  const std::size_t n = transmission.size();
  require(n >= 16, "scan fit: trace too short");
  require(scan_rate != 0.0, "scan fit: scan rate must be non-zero");
  require(all_finite(transmission.view()), "scan fit: non-finite samples");

  // Plain Lorentzian start.
  const auto [min_it, max_it] = std::minmax_element(transmission.samples.begin(), transmission.samples.end());
  ScanParams start;
  start.i_bg = *min_it;
  start.i_max = *max_it;
  const double half = 0.5 * (start.i_bg + start.i_max);
  std::size_t first = n, last = 0;
  double weight = 0.0, centroid = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (transmission[i] > half) {
      first = std::min(first, i);
      last = std::max(last, i);
    }
    const double w = transmission[i] - start.i_bg;
    weight += w * w;
    centroid += w * w * transmission.time(i);
  }
  require(first < last, "scan fit: the scan does not cross the resonance");
  start.t0 = centroid / weight;
  const double fwhm_time = transmission.time(last) - transmission.time(first);
  start.kappa = two_pi * std::abs(scan_rate) * fwhm_time;
  auto lm = detail::fit_scan_params(transmission, scan_rate, start);
  ScanParams current = detail::unpack_scan(lm.params, 0);

  const double transit = current.kappa / (two_pi * std::abs(scan_rate));
  ScanFitResult result;

  for (std::size_t mode = 0; mode < n_modes; ++mode) {
    // Matched filter: residual ~ dT/dnu (a cos wt + b sin wt).
    std::vector<double> resid(n), slope(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double t = transmission.time(i);
      resid[i] = transmission[i] - scan_model(current, t, scan_rate);
      ScanParams bare = current;
      bare.modulations.clear();
      double nu = bare.ramp(t, scan_rate);
      for (const auto& m : current.modulations) nu += m.alpha * std::cos(m.omega * t + m.phi);
      slope[i] = (current.i_max - current.i_bg) * lorentzian_slope(nu);
    }
    auto score = [&](double omega, double& a_out, double& b_out) {
      double cc = 0, ss = 0, cs = 0, rc = 0, rs = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const double t = transmission.time(i);
        const double c = slope[i] * std::cos(omega * t), s = slope[i] * std::sin(omega * t);
        cc += c * c;
        ss += s * s;
        cs += c * s;
        rc += resid[i] * c;
        rs += resid[i] * s;
      }
      const double det = cc * ss - cs * cs;
      if (det <= 0.0) return 0.0;
      a_out = (rc * ss - rs * cs) / det;
      b_out = (rs * cc - rc * cs) / det;
      return a_out * rc + b_out * rs;
    };
    // Coarse search on a 4x zero-padded periodogram of resid * slope, then
    // golden-section refinement of the exact two-quadrature score.
    const std::size_t n_fft = fft::next_power_of_two(4 * n);
    fft::RealForward spectrum(n_fft);
    auto in = spectrum.input();
    std::fill(in.begin(), in.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) in[i] = resid[i] * slope[i];
    spectrum.execute();
    const double df = transmission.sample_rate / static_cast<double>(n_fft);
    const double f_lo = 1.0 / transmission.duration();
    double best_power = -1.0, best_f = f_lo, a = 0.0, b = 0.0;
    for (std::size_t k = 1; k < n_fft / 2; ++k) {
      const double fr = static_cast<double>(k) * df;
      if (fr < f_lo) continue;
      bool known = false;
      for (const auto& m : current.modulations)
        if (std::abs(two_pi * fr - m.omega) < two_pi * 8.0 * df) known = true;
      const double power = std::norm(spectrum.output()[k]);
      if (!known && power > best_power) {
        best_power = power;
        best_f = fr;
      }
    }
    double lo = best_f - df, hi = best_f + df;
    const double g = 0.5 * (std::sqrt(5.0) - 1.0);
    for (int it = 0; it < 40; ++it) {
      const double m1 = hi - g * (hi - lo), m2 = lo + g * (hi - lo);
      double ta, tb;
      if (score(two_pi * m1, ta, tb) > score(two_pi * m2, ta, tb))
        hi = m2;
      else
        lo = m1;
    }
    best_f = 0.5 * (lo + hi);
    score(two_pi * best_f, a, b);
    if (1.0 / best_f > transit)
      result.warnings.push_back("modulation period " + std::to_string(1.0 / best_f) +
                                " s exceeds the transit time through the linewidth");

    double best_cost = INFINITY;
    LmResult best;
    for (int s = 0; s < 8; ++s) {
      ScanParams trial = current;
      trial.modulations.push_back({std::hypot(a, b), two_pi * best_f, two_pi * s / 8.0});
      LmResult fitted;
      try {
        fitted = detail::fit_scan_params(transmission, scan_rate, trial);
      } catch (const numeric_failure&) {
        continue;
      }
      if (fitted.residual_norm < best_cost) {
        best_cost = fitted.residual_norm;
        best = fitted;
      }
    }
    if (!std::isfinite(best_cost)) throw numeric_failure("scan fit: all phase starts failed");
    lm = best;
    current = detail::unpack_scan(lm.params, mode + 1);
  }

  // Canonical form: alpha >= 0, phi in [0, 2 pi).
  const auto sig = sigmas_from(lm);
  for (auto& m : current.modulations) {
    if (m.alpha < 0.0) {
      m.alpha = -m.alpha;
      m.phi += std::numbers::pi;
    }
    m.phi = detail::wrap_phase(m.phi);
  }
  FitResult& out = result.fit;
  out.add("kappa", current.kappa, sig[0]);
  out.add("nu_offset", current.nu_offset(scan_rate),
          std::hypot(sig[1] * 2.0 * two_pi * scan_rate / current.kappa,
                     current.nu_offset(scan_rate) * sig[0] / current.kappa));
  out.add("t0", current.t0, sig[1]);
  out.add("i_max", current.i_max, sig[2]);
  out.add("i_bg", current.i_bg, sig[3]);
  for (std::size_t i = 0; i < current.modulations.size(); ++i) {
    const std::size_t b = 4 + 3 * i;
    const std::string k = std::to_string(i + 1);
    out.add("alpha_" + k, current.modulations[i].alpha, sig[b]);
    out.add("omega_" + k, current.modulations[i].omega, sig[b + 1]);
    out.add("phi_" + k, current.modulations[i].phi, sig[b + 2]);
  }
  out.residual_norm = lm.residual_norm;
  out.converged = lm.converged;
  out.n_iter = lm.iterations;
  result.params = current;
  return result;
}

struct G0Estimate {
  double g0 = 0.0;     // rad/s
  double sigma = 0.0;  // rad/s
  double mean_alpha = 0.0;
};

/// g0 = kappa <alpha> / (2 sqrt(pi n_th)); the uncertainty is the Rayleigh
/// standard error of the mean, <alpha> sqrt((4 - pi) / pi) / sqrt(n).
inline G0Estimate estimate_g0(const std::vector<double>& alphas, double kappa, double n_th) {
  require(alphas.size() >= 2, "g0: need at least two amplitude samples");
  require(kappa > 0.0 && n_th > 0.0, "g0: kappa and n_th must be > 0");
  for (double a : alphas) require(a >= 0.0 && std::isfinite(a), "g0: amplitude samples must be >= 0");
  const double m = std::accumulate(alphas.begin(), alphas.end(), 0.0) / static_cast<double>(alphas.size());
  const double se = m * std::sqrt((4.0 - std::numbers::pi) / std::numbers::pi) /
                    std::sqrt(static_cast<double>(alphas.size()));
  const double k = kappa / (2.0 * std::sqrt(std::numbers::pi * n_th));
  return {k * m, k * se, m};
}

// ---------------------------------------------------------------- analytic PSD model

struct ModelPsdParams {
  double kappa_total = 0.0;  // rad/s
  double kappa_t = 0.0;      // transmission port, rad/s
  double kappa_other = 0.0;  // remaining ports, rad/s
  double detuning = 0.0;     // Delta, rad/s
  ModeParams mode;
  double n_c = 0.0;
  double s_delta = 0.0;            // double-sided detuning-noise PSD, rad^2/s^2/Hz
  double thermal_force_psd = 0.0;  // double-sided, N^2/Hz
  double eta_det = 1.0;

  void validate() const {
    require(kappa_total > 0.0 && kappa_t >= 0.0 && kappa_other >= 0.0, "model psd: rates must be >= 0");
    require(kappa_t + kappa_other <= kappa_total * (1.0 + 1e-12), "model psd: kappa_t + kappa_other > kappa");
    require(n_c >= 0.0 && s_delta >= 0.0 && thermal_force_psd >= 0.0, "model psd: noise levels must be >= 0");
    require(eta_det >= 0.0 && eta_det <= 1.0, "model psd: eta_det must lie in [0, 1]");
    mode.validate();
  }
};

/// Double-sided PSD of the transmitted amplitude quadrature at angular
/// frequency omega (unsymmetrized; vacuum level 1/2).
inline double transmitted_amplitude_psd(const ModelPsdParams& p, double omega) {
  using cd = std::complex<double>;
  const cd i(0.0, 1.0);
  const double kappa = p.kappa_total;
  const cd chi_c = 1.0 / (kappa / 2.0 - i * p.detuning - i * omega);
  const cd chi_c_conj_neg = std::conj(1.0 / (kappa / 2.0 - i * p.detuning + i * omega));
  const cd chi_x = i * (chi_c - chi_c_conj_neg) / std::sqrt(2.0);
  const auto& m = p.mode;
  const cd chi_m = 1.0 / (m.m_eff * (m.omega_m * m.omega_m - omega * omega - i * omega * m.gamma_m));
  const double g = m.cavity_pull();
  const cd loop = 1.0 - constants::hbar * g * g * p.n_c * std::sqrt(2.0) * chi_x * chi_m;
  const double loop2 = std::norm(loop);
  const double driven = std::norm(chi_x) * p.n_c * p.s_delta +
                        g * g * p.n_c * std::norm(chi_x * chi_m) * p.thermal_force_psd +
                        0.5 * (kappa - p.kappa_t) * std::norm(chi_c_conj_neg);
  const cd direct = (1.0 - p.kappa_t * chi_c_conj_neg / loop) / std::sqrt(2.0);
  return p.kappa_t * driven / loop2 + std::norm(direct);
}

/// Symmetrized photocurrent PSD in shot-noise units on omega_grid (rad/s,
/// uniform and starting at 0): 1 - eta + 2 eta (S(w) + S(-w)) / 2.
inline Spectrum model_psd(const ModelPsdParams& p, const std::vector<double>& omega_grid) {
  p.validate();
  require(omega_grid.size() >= 2 && omega_grid.front() == 0.0,
          "model psd: grid must be single-sided, uniform and start at 0");
  const double d_omega = omega_grid[1] - omega_grid[0];
  require(d_omega > 0.0, "model psd: grid must be increasing");
  for (std::size_t k = 1; k < omega_grid.size(); ++k)
    require(std::abs(omega_grid[k] - static_cast<double>(k) * d_omega) <= 1e-9 * omega_grid[k],
            "model psd: grid must be uniform");
  Spectrum s = Spectrum::on_grid(omega_grid.size(), d_omega / two_pi, "SNU");
  for (std::size_t k = 0; k < omega_grid.size(); ++k) {
    const double w = omega_grid[k];
    const double sym = 0.5 * (transmitted_amplitude_psd(p, w) + transmitted_amplitude_psd(p, -w));
    s.values[k] = 1.0 - p.eta_det + 2.0 * p.eta_det * sym;
  }
  s.window = "model";
  return s;
}

inline std::vector<double> uniform_grid(double max_value, std::size_t n) {
  std::vector<double> g(n);
  for (std::size_t k = 0; k < n; ++k) g[k] = max_value * static_cast<double>(k) / static_cast<double>(n - 1);
  return g;
}

// ---------------------------------------------------------------- peak location

struct PeakEstimate {
  double frequency = 0.0;  // Hz
  double sigma = 0.0;      // Hz
  double linewidth = 0.0;  // Hz, FWHM of the fitted Lorentzian
};

/// Lorentzian fit around the tallest bin in [band.first, band.second].
inline PeakEstimate peak_frequency(const Spectrum& s, std::pair<double, double> band) {
  require(band.first < band.second, "peak: empty band");
  std::size_t lo = s.size(), hi = 0;
  for (std::size_t k = 0; k < s.size(); ++k)
    if (s.frequencies[k] >= band.first && s.frequencies[k] <= band.second) {
      lo = std::min(lo, k);
      hi = std::max(hi, k);
    }
  require(lo < s.size() && hi > lo + 2, "peak: band covers fewer than four bins");
  std::vector<double> in_band(s.values.begin() + static_cast<std::ptrdiff_t>(lo),
                              s.values.begin() + static_cast<std::ptrdiff_t>(hi + 1));
  const auto top = static_cast<std::size_t>(std::max_element(in_band.begin(), in_band.end()) - in_band.begin()) + lo;
  std::nth_element(in_band.begin(), in_band.begin() + static_cast<std::ptrdiff_t>(in_band.size() / 2), in_band.end());
  const double median = in_band[in_band.size() / 2];
  const double peak = s.values[top];
  if (!(peak > median * std::pow(10.0, 0.6)))
    throw numeric_failure("peak: no peak 6 dB above the band median");

  // half-maximum extent around the top bin
  const double half = median + 0.5 * (peak - median);
  std::size_t left = top, right = top;
  while (left > lo && s.values[left - 1] > half) --left;
  while (right < hi && s.values[right + 1] > half) ++right;
  const std::size_t width = std::max<std::size_t>(right - left + 1, 1);
  const std::size_t reach = std::max<std::size_t>(3 * width, 4);
  const std::size_t a = top > lo + reach ? top - reach : lo;
  const std::size_t b = std::min(hi, top + reach);

  double guess_f = s.frequencies[top];
  if (top > 0 && top + 1 < s.size()) {
    const double y0 = s.values[top - 1], y1 = s.values[top], y2 = s.values[top + 1];
    const double d = y0 - 2.0 * y1 + y2;
    if (d < 0.0) guess_f += 0.5 * (y0 - y2) / d * s.df;
  }
  const double guess_w = std::max(0.5 * static_cast<double>(width) * s.df, 0.25 * s.df);

  ResidualFn f = [&](const Eigen::VectorXd& x) -> std::optional<Eigen::VectorXd> {
    if (x[2] <= 0.0) return std::nullopt;
    Eigen::VectorXd r(static_cast<Eigen::Index>(b - a + 1));
    for (std::size_t k = a; k <= b; ++k) {
      const double u = (s.frequencies[k] - x[0]) / x[2];
      r(static_cast<Eigen::Index>(k - a)) = (x[3] + x[1] / (1.0 + u * u) - s.values[k]) / peak;
    }
    return r;
  };
  Eigen::VectorXd x0(4), scale(4);
  x0 << guess_f, peak - median, guess_w, median;
  scale << s.df, peak, s.df, std::max(median, 1e-6 * peak);
  const auto lm = levenberg_marquardt(f, x0, scale);
  const auto sig = sigmas_from(lm);
  double f_peak = lm.params[0];
  if (!(f_peak >= s.frequencies[a] && f_peak <= s.frequencies[b]) || !std::isfinite(f_peak)) f_peak = guess_f;
  return {f_peak, sig[0], 2.0 * std::abs(lm.params[2])};
}

}  // namespace omtin
