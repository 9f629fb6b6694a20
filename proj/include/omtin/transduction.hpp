#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "omtin/core.hpp"
#include "omtin/params.hpp"
#include "omtin/random.hpp"

namespace omtin {

enum class ReadoutMethod { linear, nonlinear, general_dyne };

inline const char* to_string(ReadoutMethod m) {
  switch (m) {
    case ReadoutMethod::linear: return "linear";
    case ReadoutMethod::nonlinear: return "nonlinear";
    case ReadoutMethod::general_dyne: return "general-dyne";
  }
  return "?";
}

struct ReadoutResult {
  TimeTrace detuning_estimate;
  std::size_t clamp_count = 0;
  ReadoutMethod method = ReadoutMethod::linear;

  double clamp_fraction() const {
    return detuning_estimate.empty()
               ? 0.0
               : static_cast<double>(clamp_count) / static_cast<double>(detuning_estimate.size());
  }
};

/// |L(nu)|^2 = 1 / (1 + nu^2).
inline double lorentzian_response(double nu) { return 1.0 / (1.0 + nu * nu); }

/// d|L|^2 / dnu.
inline double lorentzian_slope(double nu) {
  const double d = 1.0 + nu * nu;
  return -2.0 * nu / (d * d);
}

/// arg L(nu) = arctan(nu).
inline double phase_response(double nu) { return std::atan(nu); }

/// Photocurrent i_bg + (i_max - i_bg) |L(nu)|^2, optionally with Gaussian shot
/// noise whose relative-intensity PSD at nu = 0 is 2 / photon_flux.
inline TimeTrace transduce(const TimeTrace& detuning, const DetectorParams& det, std::uint64_t seed) {
  require(all_finite(detuning.view()), "transduce: detuning trace must be finite");
  det.validate_calibration();
  if (det.shot_noise)
    require(std::isfinite(det.photon_flux) && det.photon_flux > 0.0,
            "transduce: photon_flux must be > 0 with shot noise");
  const double span = det.i_max - det.i_bg;
  const double sigma =
      det.shot_noise ? det.i_max * std::sqrt(detuning.sample_rate / det.photon_flux) : 0.0;
  CounterStream noise(seed, "shot");
  std::vector<double> current(detuning.size());
  for (std::size_t i = 0; i < current.size(); ++i) {
    current[i] = det.i_bg + span * lorentzian_response(detuning[i]);
    if (det.shot_noise) current[i] += sigma * noise.normal();
  }
  return TimeTrace(std::move(current), detuning.sample_rate, "A");
}

/// n_c / n_c0 = (I - i_bg) / (i_max - i_bg).
inline TimeTrace relative_occupation(const TimeTrace& photocurrent, const DetectorParams& det) {
  det.validate_calibration();
  const double span = det.i_max - det.i_bg;
  std::vector<double> r(photocurrent.size());
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = (photocurrent[i] - det.i_bg) / span;
  return TimeTrace(std::move(r), photocurrent.sample_rate, "1");
}

/// First-order readout: delta nu = (n_c / n_c0 - |L(nu0)|^2) / slope(nu0).
inline ReadoutResult linear_readout(const TimeTrace& photocurrent, const CavityParams& cavity,
                                    const DetectorParams& det) {
  det.validate_calibration();
  const double slope = lorentzian_slope(cavity.nu0);
  if (cavity.nu0 == 0.0 || slope == 0.0)
    throw invalid_input("linear readout: singular slope at nu0 = 0");
  const double level = lorentzian_response(cavity.nu0);
  const double span = det.i_max - det.i_bg;
  std::vector<double> dnu(photocurrent.size());
  for (std::size_t i = 0; i < dnu.size(); ++i)
    dnu[i] = ((photocurrent[i] - det.i_bg) / span - level) / slope;
  return {TimeTrace(std::move(dnu), photocurrent.sample_rate, "nu"), 0, ReadoutMethod::linear};
}

namespace detail {

// |nu| from the photocurrent; nu^2 = (i_max - I) / (I - i_bg) avoids the
// cancellation of 1 / r - 1 near resonance. Returns a negative value when the
// sample lies above i_max (clamped by the caller).
inline double abs_detuning(double current, const DetectorParams& det, std::size_t index) {
  const double above_bg = current - det.i_bg;
  if (!(above_bg > 0.0))
    throw numeric_failure("nonlinear readout: non-positive cavity occupation at sample " +
                          std::to_string(index));
  const double below_max = det.i_max - current;
  if (below_max < 0.0) return -1.0;
  return std::sqrt(below_max / above_bg);
}

}  // namespace detail

/// Exact inversion of the Lorentzian with the sign of nu0.
inline ReadoutResult nonlinear_readout(const TimeTrace& photocurrent, const CavityParams& cavity,
                                       const DetectorParams& det) {
  det.validate_calibration();
  if (cavity.nu0 == 0.0) throw invalid_input("nonlinear readout: nu0 = 0 leaves the sign undefined");
  const double sign = sign_of(cavity.nu0);
  ReadoutResult result{TimeTrace(std::vector<double>(photocurrent.size()),
                                 photocurrent.sample_rate, "nu"),
                       0, ReadoutMethod::nonlinear};
  for (std::size_t i = 0; i < photocurrent.size(); ++i) {
    const double a = detail::abs_detuning(photocurrent[i], det, i);
    if (a < 0.0) {
      result.detuning_estimate[i] = 0.0;
      ++result.clamp_count;
    } else {
      result.detuning_estimate[i] = sign * a;
    }
  }
  return result;
}

/// Exact inversion with the per-sample sign taken from a phase-sign trace.
inline ReadoutResult general_dyne_readout(const TimeTrace& photocurrent, const TimeTrace& phase_sign,
                                          const CavityParams& cavity, const DetectorParams& det) {
  (void)cavity;
  det.validate_calibration();
  require(photocurrent.size() == phase_sign.size(),
          "general-dyne readout: photocurrent and sign traces differ in length");
  ReadoutResult result{TimeTrace(std::vector<double>(photocurrent.size()),
                                 photocurrent.sample_rate, "nu"),
                       0, ReadoutMethod::general_dyne};
  for (std::size_t i = 0; i < photocurrent.size(); ++i) {
    const double s = phase_sign[i];
    require(s == 1.0 || s == -1.0, "general-dyne readout: sign trace must contain only -1 and +1");
    const double a = detail::abs_detuning(photocurrent[i], det, i);
    if (a < 0.0) {
      result.detuning_estimate[i] = 0.0;
      ++result.clamp_count;
    } else {
      result.detuning_estimate[i] = s * a;
    }
  }
  return result;
}

/// y(t) = -kappa x_zp nu(t) / (2 g0).
inline TimeTrace detuning_to_displacement(const TimeTrace& detuning, double kappa, double g0,
                                          double x_zp) {
  require(g0 > 0.0, "detuning_to_displacement: g0 must be > 0");
  const double scale = -kappa * x_zp / (2.0 * g0);
  std::vector<double> y(detuning.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = scale * detuning[i];
  return TimeTrace(std::move(y), detuning.sample_rate, "m");
}

inline TimeTrace detuning_to_displacement(const TimeTrace& detuning, const ModeParams& mode,
                                          const CavityParams& cavity) {
  return detuning_to_displacement(detuning, cavity.kappa, mode.g0, mode.zero_point_fluctuation());
}

struct FiguresOfMerit {
  double cooperativity = 0.0;         // C = 4 g0^2 nbar / (kappa gamma_m)
  double single_photon_cooperativity = 0.0;
  double thermal_occupation = 0.0;
  double backaction_force_psd = 0.0;  // N^2/Hz at omega_m
  double thermal_force_psd = 0.0;     // N^2/Hz at omega_m
  double sideband_limit = 0.0;        // kappa / (4 omega_m)
};

inline FiguresOfMerit figures_of_merit(const ModeParams& mode, const CavityParams& cavity,
                                       double n_c_bar, double temperature) {
  mode.validate();
  cavity.validate();
  require(mode.gamma_m > 0.0 && mode.g0 > 0.0, "figures_of_merit: rates must be positive");
  require(n_c_bar >= 0.0, "figures_of_merit: photon number must be >= 0");
  require(temperature >= 0.0, "figures_of_merit: temperature must be >= 0");
  const double hbar = constants::hbar;
  const double xzp2 = std::pow(mode.zero_point_fluctuation(), 2);
  FiguresOfMerit f;
  f.single_photon_cooperativity = 4.0 * mode.g0 * mode.g0 / (cavity.kappa * mode.gamma_m);
  f.cooperativity = f.single_photon_cooperativity * n_c_bar;
  f.thermal_occupation =
      constants::boltzmann * temperature / (constants::hbar * mode.omega_m);
  f.backaction_force_psd = 8.0 * hbar * hbar * mode.g0 * mode.g0 * n_c_bar / (xzp2 * cavity.kappa);
  f.thermal_force_psd = 2.0 * hbar * hbar * mode.gamma_m * f.thermal_occupation / xzp2;
  f.sideband_limit = cavity.kappa / (4.0 * mode.omega_m);
  return f;
}

}  // namespace omtin
