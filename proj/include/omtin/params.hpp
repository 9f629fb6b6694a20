#pragma once

// Physical parameter records shared by the simulation and readout code.
// Rates are angular (rad/s) throughout; conversion from Hz happens at the
// configuration boundary.

#include <cmath>
#include <cstdint>
#include <string>

#include "omtin/core.hpp"

namespace omtin {

struct ModeParams {
  double omega_m = 0.0;  // rad/s
  double gamma_m = 0.0;  // energy damping, rad/s
  double g0 = 0.0;       // rad/s
  double m_eff = 0.0;    // kg
  double beta_nl = 0.0;  // 1/(J s)
  std::string label = "mode";

  double quality_factor() const { return gamma_m > 0.0 ? omega_m / gamma_m : INFINITY; }
  double zero_point_fluctuation() const {
    return std::sqrt(constants::hbar / (2.0 * m_eff * omega_m));
  }
  /// Cavity pull G = g0 / x_zp in rad/(s m).
  double cavity_pull() const { return g0 / zero_point_fluctuation(); }
  double thermal_variance(double temperature) const {
    return constants::boltzmann * temperature / (m_eff * omega_m * omega_m);
  }

  void validate() const {
    require(std::isfinite(omega_m) && omega_m > 0.0, "mode '" + label + "': omega_m must be > 0");
    require(std::isfinite(gamma_m) && gamma_m >= 0.0, "mode '" + label + "': gamma_m must be >= 0");
    require(std::isfinite(m_eff) && m_eff > 0.0, "mode '" + label + "': m_eff must be > 0");
    require(std::isfinite(g0) && g0 >= 0.0, "mode '" + label + "': g0 must be >= 0");
    require(std::isfinite(beta_nl) && beta_nl >= 0.0, "mode '" + label + "': beta_nl must be >= 0");
  }
};

struct CavityParams {
  double kappa = 0.0;  // total linewidth, rad/s
  double nu0 = 0.0;    // operating detuning 2 Delta / kappa
  double n_c0 = 0.0;   // on-resonance intracavity photon number
  double phi0 = 0.0;   // rad

  void validate() const {
    require(std::isfinite(kappa) && kappa > 0.0, "cavity kappa must be > 0");
    require(std::isfinite(nu0), "cavity nu0 must be finite");
    require(std::isfinite(n_c0) && n_c0 >= 0.0, "cavity n_c0 must be >= 0");
  }
};

struct BathParams {
  double temperature = 0.0;  // K
  std::uint64_t seed = 0;
  double classical_detuning_noise_psd = 0.0;  // single-sided, 1/Hz in units of nu^2

  void validate() const {
    require(std::isfinite(temperature) && temperature >= 0.0, "bath temperature must be >= 0");
    require(std::isfinite(classical_detuning_noise_psd) && classical_detuning_noise_psd >= 0.0,
            "classical detuning noise PSD must be >= 0");
  }
};

struct DetectorParams {
  double eta_det = 1.0;
  double photon_flux = 0.0;  // detected photons/s at nu = 0
  double i_max = 1.0;        // photocurrent at nu = 0
  double i_bg = 0.0;         // background photocurrent
  bool shot_noise = false;

  void validate_calibration() const {
    require(std::isfinite(i_max) && std::isfinite(i_bg) && i_max > i_bg,
            "calibration requires i_max > i_bg");
  }
  void validate() const {
    require(eta_det >= 0.0 && eta_det <= 1.0, "eta_det must lie in [0, 1]");
    validate_calibration();
  }
};

}  // namespace omtin
