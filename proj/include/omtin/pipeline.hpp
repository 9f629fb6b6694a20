#pragma once

// Cooperativity sweep: for each target C of the first mode, the on-resonance
// photon number (and with it the detected photon flux) is rescaled, the
// modes are simulated with radiation pressure, the record is detected and
// the band RMS of the relative intensity noise is reported.

#include <vector>

#include "omtin/core.hpp"
#include "omtin/dynamics.hpp"
#include "omtin/params.hpp"
#include "omtin/spectral.hpp"
#include "omtin/transduction.hpp"

namespace omtin {

struct SweepSetup {
  std::vector<ModeParams> modes;  // modes[0] sets the cooperativity
  CavityParams cavity;            // n_c0 here is the reference for photon_flux
  BathParams bath;
  DetectorParams detector;
  double duration = 0.0;     // s
  double sample_rate = 0.0;  // Hz
  double band_lo = 0.0;      // Hz
  double band_hi = 0.0;      // Hz
  std::size_t segment = 4096;

  void validate() const {
    require(!modes.empty(), "sweep: at least one mode is required");
    require(modes.front().gamma_m > 0.0 && modes.front().g0 > 0.0,
            "sweep: the first mode needs gamma_m > 0 and g0 > 0");
    require(band_lo < band_hi, "sweep: band_lo must be < band_hi");
    if (detector.shot_noise) require(cavity.n_c0 > 0.0, "sweep: reference n_c0 must be > 0 to scale the photon flux");
  }
};

struct SweepRow {
  double cooperativity = 0.0;
  double c_over_nth = 0.0;
  double band_rms = 0.0;
};

/// On-resonance photon number giving cooperativity c for `mode` at nu0.
inline double photon_number_for(double c, const ModeParams& mode, const CavityParams& cavity) {
  return c * cavity.kappa * mode.gamma_m / (4.0 * mode.g0 * mode.g0 * lorentzian_response(cavity.nu0));
}

/// Cavity and detector of one sweep point.
inline std::pair<CavityParams, DetectorParams> sweep_operating_point(const SweepSetup& s, double c) {
  CavityParams cav = s.cavity;
  cav.n_c0 = photon_number_for(c, s.modes.front(), s.cavity);
  DetectorParams det = s.detector;
  if (s.cavity.n_c0 > 0.0) det.photon_flux = s.detector.photon_flux * cav.n_c0 / s.cavity.n_c0;
  return {cav, det};
}

inline double sweep_point(const SweepSetup& s, double c) {
  s.validate();
  require(c > 0.0, "sweep: cooperativity must be > 0");
  const auto [cav, det] = sweep_operating_point(s, c);
  const auto sim = simulate_modes(s.modes, cav, s.bath, s.duration, s.sample_rate, true);
  const auto current = transduce(sim.detuning, det, s.bath.seed);
  const auto rin = rin_spectrum(current, {s.segment, 0.5, Window::hann});
  return band_rms(rin, s.band_lo, s.band_hi);
}

inline std::vector<SweepRow> sweep(const SweepSetup& s, const std::vector<double>& cooperativities) {
  s.validate();
  const double n_th = thermal_occupation(s.modes.front().omega_m, s.bath.temperature);
  std::vector<SweepRow> rows;
  for (double c : cooperativities)
    rows.push_back({c, n_th > 0.0 ? c / n_th : 0.0, sweep_point(s, c)});
  return rows;
}

}  // namespace omtin
