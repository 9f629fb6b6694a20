#pragma once

// Multimode thermomechanical motion and the detuning trajectory it induces.
//
// Each mode is carried as a complex amplitude z = x - i v / omega_m, so that
// x = Re z and the energy is m omega_m^2 |z|^2 / 2. Free evolution plus the
// thermal bath is an exact Ornstein-Uhlenbeck step; radiation pressure and
// nonlinear damping are applied afterwards as a first-order (O(dt)) splitting
// step, which is why simulate_modes bounds dt by the fastest of those rates.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "omtin/core.hpp"
#include "omtin/params.hpp"
#include "omtin/random.hpp"
#include "omtin/transduction.hpp"

namespace omtin {

struct SimOutput {
  TimeTrace detuning;
  std::vector<TimeTrace> per_mode_displacement;
  bool radiation_pressure_enabled = false;
};

/// k_B T / (hbar omega_m).
inline double thermal_occupation(double omega_m, double temperature) {
  require(omega_m > 0.0, "thermal_occupation: omega_m must be > 0");
  require(temperature >= 0.0, "thermal_occupation: temperature must be >= 0");
  return constants::boltzmann * temperature / (constants::hbar * omega_m);
}

/// Mean intracavity photon number at the operating detuning.
inline double mean_photon_number(const CavityParams& cavity) {
  return cavity.n_c0 * lorentzian_response(cavity.nu0);
}

/// 4 g0^2 nbar / (kappa gamma_m).
inline double cooperativity(const ModeParams& mode, const CavityParams& cavity) {
  return 4.0 * mode.g0 * mode.g0 * mean_photon_number(cavity) / (cavity.kappa * mode.gamma_m);
}

/// Detuning nu(t) = nu0 - sum_k (2 G_k / kappa) x_k(t).
inline TimeTrace assemble_detuning(const std::vector<TimeTrace>& displacements,
                                   const std::vector<ModeParams>& modes, const CavityParams& cavity,
                                   double sample_rate, std::size_t n) {
  std::vector<double> nu(n, cavity.nu0);
  for (std::size_t k = 0; k < modes.size(); ++k) {
    const double coupling = 2.0 * modes[k].cavity_pull() / cavity.kappa;
    const auto& x = displacements[k].samples;
    for (std::size_t i = 0; i < n; ++i) nu[i] -= coupling * x[i];
  }
  return TimeTrace(std::move(nu), sample_rate, "nu");
}

namespace detail {

inline void check_sampling(double duration, double sample_rate) {
  require(std::isfinite(sample_rate) && sample_rate > 0.0, "sample rate must be > 0");
  require(std::isfinite(duration) && duration > 0.0, "duration must be > 0");
  require(duration * sample_rate >= 2.0, "duration * sample_rate must be >= 2");
}

inline std::size_t sample_count(double duration, double sample_rate) {
  return static_cast<std::size_t>(std::llround(duration * sample_rate));
}

}  // namespace detail

/// Simulates thermal motion of every mode and the resulting detuning trace.
///
/// With radiation_pressure set, each mode feels the force -hbar G_k n_c(t)
/// with n_c following |L(nu(t))|^2, referenced to its value at nu0 so the
/// operating point stays put (the static part is what a detuning lock
/// removes). The leading retardation correction of the intensity
/// (delay 4 / (kappa (1 + nu^2))) is included, which yields the optical
/// damping next to the optical spring, together with a white
/// quantum-backaction force surrogate.
inline SimOutput simulate_modes(const std::vector<ModeParams>& modes, const CavityParams& cavity,
                                const BathParams& bath, double duration, double sample_rate,
                                bool radiation_pressure) {
  detail::check_sampling(duration, sample_rate);
  cavity.validate();
  bath.validate();
  std::set<std::string> labels;
  for (const auto& m : modes) {
    m.validate();
    require(sample_rate > m.omega_m / std::numbers::pi,
            "sample rate violates Nyquist for mode '" + m.label + "'");
    require(labels.insert(m.label).second, "duplicate mode label '" + m.label + "'");
  }

  const std::size_t n = detail::sample_count(duration, sample_rate);
  const double dt = 1.0 / sample_rate;
  const std::size_t n_modes = modes.size();

  if (radiation_pressure) {
    for (const auto& m : modes) {
      if (m.gamma_m <= 0.0) continue;
      const double rate = std::max(m.gamma_m * cooperativity(m, cavity), 0.0);
      require(rate * dt <= 0.05,
              "time step too coarse for radiation pressure on mode '" + m.label +
                  "': need dt <= 0.05 / (gamma_m C)");
    }
  }
  for (const auto& m : modes) {
    if (m.beta_nl <= 0.0) continue;
    const double energy = constants::boltzmann * bath.temperature;
    require((m.gamma_m + m.beta_nl * energy) * dt <= 0.05,
            "time step too coarse for nonlinear damping on mode '" + m.label + "'");
  }

  struct ModeState {
    std::complex<double> z;
    std::complex<double> propagator;
    double kick_sigma;  // std of each real component of the OU increment
    double coupling;    // 2 G / kappa
    CounterStream noise;
  };

  std::vector<ModeState> state;
  state.reserve(n_modes);
  for (const auto& m : modes) {
    const double var = m.thermal_variance(bath.temperature);
    const std::complex<double> rate(-0.5 * m.gamma_m, m.omega_m);
    CounterStream noise(bath.seed, "mode." + m.label);
    const double z_re = std::sqrt(var) * noise.normal();
    const double z_im = std::sqrt(var) * noise.normal();
    state.push_back(ModeState{{z_re, z_im},
                              std::exp(rate * dt),
                              std::sqrt(var * -std::expm1(-m.gamma_m * dt)),
                              2.0 * m.cavity_pull() / cavity.kappa,
                              noise});
  }

  SimOutput out;
  out.radiation_pressure_enabled = radiation_pressure;
  out.per_mode_displacement.reserve(n_modes);
  for (std::size_t k = 0; k < n_modes; ++k)
    out.per_mode_displacement.emplace_back(std::vector<double>(n), sample_rate, "m");

  CounterStream detuning_noise(bath.seed, "detuning");
  CounterStream backaction_noise(bath.seed, "backaction");
  const double nu_noise_sigma = std::sqrt(bath.classical_detuning_noise_psd * sample_rate / 2.0);

  // White photon-number surrogate for quantum backaction: single-sided PSD
  // 8 nbar / (kappa (1 + nu0^2)), i.e. force PSD 8 hbar^2 G^2 nbar / (kappa (1 + nu0^2)).
  const double nbar = mean_photon_number(cavity);
  const double backaction_sigma =
      std::sqrt(8.0 * nbar / (cavity.kappa * (1.0 + cavity.nu0 * cavity.nu0)) * sample_rate / 2.0);
  const double reference_occupation = cavity.n_c0 * lorentzian_response(cavity.nu0);
  const bool coupled = radiation_pressure && cavity.n_c0 > 0.0;

  std::vector<double> nu(n, cavity.nu0);
  for (std::size_t i = 0; i < n; ++i) {
    double mech_nu = cavity.nu0;
    double nu_rate = 0.0;
    for (std::size_t k = 0; k < n_modes; ++k) {
      const auto& s = state[k];
      out.per_mode_displacement[k].samples[i] = s.z.real();
      mech_nu -= s.coupling * s.z.real();
      // v = -omega Im z
      nu_rate += s.coupling * modes[k].omega_m * s.z.imag();
    }
    const double noisy_nu =
        bath.classical_detuning_noise_psd > 0.0 ? mech_nu + nu_noise_sigma * detuning_noise.normal()
                                                : mech_nu;
    nu[i] = noisy_nu;

    double occupation_offset = 0.0;
    if (coupled) {
      const double delay = 4.0 / (cavity.kappa * (1.0 + noisy_nu * noisy_nu));
      occupation_offset = cavity.n_c0 * (lorentzian_response(noisy_nu) -
                                         delay * lorentzian_slope(noisy_nu) * nu_rate) -
                          reference_occupation;
      occupation_offset += backaction_sigma * backaction_noise.normal();
    }

    for (std::size_t k = 0; k < n_modes; ++k) {
      auto& s = state[k];
      const auto& m = modes[k];
      // Kick at the recorded position, then drift: a lagging kick would act
      // as a spurious damping of order 2 Omega_m delta_Omega dt.
      if (coupled) {
        const double force = -constants::hbar * m.cavity_pull() * occupation_offset;
        s.z += std::complex<double>(0.0, -force * dt / (m.m_eff * m.omega_m));
      }
      s.z = s.z * s.propagator;
      if (s.kick_sigma > 0.0) s.z += std::complex<double>(s.kick_sigma * s.noise.normal(),
                                                          s.kick_sigma * s.noise.normal());
      if (m.beta_nl > 0.0) {
        const double energy = 0.5 * m.m_eff * m.omega_m * m.omega_m * std::norm(s.z);
        s.z *= std::exp(-0.5 * m.beta_nl * energy * dt);
      }
    }
  }
  out.detuning = TimeTrace(std::move(nu), sample_rate, "nu");
  return out;
}

/// A sinusoidal detuning component with Wiener phase diffusion.
struct ToneParams {
  double frequency = 0.0;  // Hz
  double amplitude = 0.0;  // in nu
  double phase = 0.0;      // rad
  double linewidth = 0.0;  // Hz, FWHM of the resulting Lorentzian line
  std::string label = "tone";
};

/// nu(t) = nu0 + sum_k a_k cos(2 pi f_k t + phi_k + theta_k(t)).
inline TimeTrace tone_detuning(double nu0, const std::vector<ToneParams>& tones, double duration,
                               double sample_rate, std::uint64_t seed) {
  detail::check_sampling(duration, sample_rate);
  for (const auto& t : tones) {
    require(t.frequency > 0.0 && t.frequency < sample_rate / 2.0,
            "tone '" + t.label + "' must lie in (0, Nyquist)");
    require(t.linewidth >= 0.0, "tone '" + t.label + "': linewidth must be >= 0");
  }
  const std::size_t n = detail::sample_count(duration, sample_rate);
  std::vector<double> nu(n, nu0);
  for (const auto& t : tones) {
    CounterStream noise(seed, "tone." + t.label);
    const double step_sigma = std::sqrt(two_pi * t.linewidth / sample_rate);
    double theta = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double cycles = std::fmod(t.frequency * static_cast<double>(i) / sample_rate, 1.0);
      nu[i] += t.amplitude * std::cos(two_pi * cycles + t.phase + theta);
      if (step_sigma > 0.0) theta += step_sigma * noise.normal();
    }
  }
  return TimeTrace(std::move(nu), sample_rate, "nu");
}

/// Closed-form energy of dE/dt = -(gamma_m + beta E) E plus a constant offset.
inline double ringdown_energy(double t, double e0, double gamma_m, double beta_nl, double offset) {
  const double b = beta_nl * e0;
  const double denominator = (gamma_m + b) * std::exp(gamma_m * t) - b;
  return gamma_m * e0 / denominator + offset;
}

inline TimeTrace ringdown_trace(double e0, double gamma_m, double beta_nl, double duration,
                                double sample_rate, double offset) {
  detail::check_sampling(duration, sample_rate);
  require(e0 >= 0.0, "ringdown: E0 must be >= 0");
  require(gamma_m > 0.0, "ringdown: gamma_m must be > 0");
  const std::size_t n = detail::sample_count(duration, sample_rate);
  // The denominator equals gamma_m at t = 0 and is monotone, so checking the
  // far end covers the whole interval.
  const double t_end = static_cast<double>(n - 1) / sample_rate;
  const double b = beta_nl * e0;
  require((gamma_m + b) * std::exp(gamma_m * t_end) - b > 0.0,
          "ringdown: denominator becomes non-positive within the record");
  std::vector<double> e(n);
  for (std::size_t i = 0; i < n; ++i)
    e[i] = beta_nl == 0.0 ? e0 * std::exp(-gamma_m * static_cast<double>(i) / sample_rate) + offset
                          : ringdown_energy(static_cast<double>(i) / sample_rate, e0, gamma_m,
                                            beta_nl, offset);
  return TimeTrace(std::move(e), sample_rate, "J");
}

}  // namespace omtin
