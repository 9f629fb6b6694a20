#pragma once

// INI run configuration. Every dimensional value carries a unit suffix
// ("1.13 MHz", "2 ng", "300 K"); values are converted to SI, with
// frequencies given in Hz and stored internally as angular rates.
//
//   [run]        seed, duration, sample_rate, radiation_pressure
//   [cavity]     kappa, nu0, n_c0, phi0
//   [bath]       temperature, classical_detuning_noise_psd
//   [detector]   eta_det, photon_flux, i_max, i_bg, shot_noise
//   [mode.<id>]  frequency, quality_factor | gamma, g0, m_eff, beta_nl
//   [tone.<id>]  frequency, amplitude, phase, linewidth
//   [sweep]      cooperativities, band_lo, band_hi, segment, classical_detuning_noise_psd
//
// Unknown sections and keys are errors. Sections are optional; a present
// section must define all of its required keys.

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "omtin/core.hpp"
#include "omtin/dynamics.hpp"
#include "omtin/params.hpp"

namespace omtin {

enum class Dimension { none, frequency, time, temperature, mass, angle, psd, nonlinear_damping, rate, count };

namespace detail {

inline std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

inline const std::map<std::string, double>& unit_table(Dimension d) {
  static const std::map<Dimension, std::map<std::string, double>> tables = {
      {Dimension::none, {{"", 1.0}, {"ppm", 1e-6}, {"%", 1e-2}}},
      {Dimension::frequency, {{"hz", 1.0}, {"khz", 1e3}, {"mhz", 1e6}, {"ghz", 1e9}}},
      {Dimension::time, {{"s", 1.0}, {"ms", 1e-3}, {"us", 1e-6}, {"ns", 1e-9}}},
      {Dimension::temperature, {{"k", 1.0}, {"mk", 1e-3}}},
      {Dimension::mass, {{"kg", 1.0}, {"g", 1e-3}, {"mg", 1e-6}, {"ug", 1e-9}, {"ng", 1e-12}, {"pg", 1e-15}}},
      {Dimension::angle, {{"rad", 1.0}, {"mrad", 1e-3}}},
      {Dimension::psd, {{"1/hz", 1.0}}},
      {Dimension::nonlinear_damping, {{"1/js", 1.0}}},
      {Dimension::rate, {{"1/s", 1.0}}},
      {Dimension::count, {{"", 1.0}}},
  };
  return tables.at(d);
}

}  // namespace detail

/// Parses "<number> <suffix>" (whitespace optional, suffix case-insensitive).
inline double parse_quantity(const std::string& text, Dimension dim, const std::string& where) {
  std::size_t used = 0;
  double value = 0.0;
  try {
    value = std::stod(text, &used);
  } catch (const std::exception&) {
    throw invalid_input(where + ": '" + text + "' is not a number");
  }
  // the number ends at the first character stod did not consume, so "0 1/Hz"
  // is zero in 1/Hz rather than 01 in /Hz
  std::string suffix = detail::lower(text.substr(used));
  suffix.erase(std::remove_if(suffix.begin(), suffix.end(), [](unsigned char c) { return std::isspace(c); }),
               suffix.end());
  const auto& table = detail::unit_table(dim);
  const auto it = table.find(suffix);
  if (it == table.end()) {
    std::string allowed;
    for (const auto& [k, v] : table) allowed += (allowed.empty() ? "" : ", ") + (k.empty() ? "<none>" : k);
    throw invalid_input(where + ": unit '" + suffix + "' not accepted (expected " + allowed + ")");
  }
  if (!std::isfinite(value)) throw invalid_input(where + ": value must be finite");
  return value * it->second;
}

inline bool parse_flag(const std::string& text, const std::string& where) {
  const std::string s = detail::lower(text);
  if (s == "true" || s == "on" || s == "yes" || s == "1") return true;
  if (s == "false" || s == "off" || s == "no" || s == "0") return false;
  throw invalid_input(where + ": '" + text + "' is not a boolean");
}

struct SweepConfig {
  std::vector<double> cooperativities;
  double band_lo = 0.0;  // Hz
  double band_hi = 0.0;  // Hz
  std::size_t segment = 0;
  std::optional<double> classical_detuning_noise_psd;
};

struct RunConfig {
  std::optional<std::uint64_t> seed;
  std::optional<double> duration;     // s
  std::optional<double> sample_rate;  // Hz
  std::optional<bool> radiation_pressure;
  std::optional<CavityParams> cavity;
  std::optional<BathParams> bath;
  std::optional<DetectorParams> detector;
  std::vector<ModeParams> modes;
  std::vector<ToneParams> tones;
  std::optional<SweepConfig> sweep;

  /// Fully resolved values (SI, angular rates) as key=value pairs.
  std::vector<std::pair<std::string, std::string>> resolved;

  const CavityParams& need_cavity() const {
    if (!cavity) throw invalid_input("config: missing [cavity] section");
    return *cavity;
  }
  const BathParams& need_bath() const {
    if (!bath) throw invalid_input("config: missing [bath] section");
    return *bath;
  }
  const DetectorParams& need_detector() const {
    if (!detector) throw invalid_input("config: missing [detector] section");
    return *detector;
  }
  const SweepConfig& need_sweep() const {
    if (!sweep) throw invalid_input("config: missing [sweep] section");
    return *sweep;
  }
};

namespace detail {

class SectionReader {
 public:
  SectionReader(std::string name, const boost::property_tree::ptree& tree, RunConfig& cfg)
      : name_(std::move(name)), tree_(tree), cfg_(cfg) {
    for (const auto& [key, child] : tree_) {
      if (!child.empty()) throw invalid_input("config: nested key '" + key + "' in [" + name_ + "]");
      if (!values_.emplace(key, child.data()).second)
        throw invalid_input("config: duplicate key '" + key + "' in [" + name_ + "]");
    }
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  double quantity(const std::string& key, Dimension dim) {
    return record(key, parse_quantity(raw(key), dim, where(key)));
  }
  std::optional<double> optional_quantity(const std::string& key, Dimension dim) {
    if (!has(key)) return std::nullopt;
    return quantity(key, dim);
  }
  bool flag(const std::string& key) {
    const bool v = parse_flag(raw(key), where(key));
    cfg_.resolved.emplace_back(name_ + "." + key, v ? "true" : "false");
    return v;
  }
  std::uint64_t integer(const std::string& key) {
    const std::string s(raw(key));
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      if (!s.empty() && s.front() == '-') throw std::invalid_argument("negative");
      v = std::stoull(s, &used, 10);
    } catch (const std::exception&) {
      throw invalid_input(where(key) + ": '" + s + "' is not a non-negative integer");
    }
    if (used != s.size()) throw invalid_input(where(key) + ": '" + s + "' is not a non-negative integer");
    cfg_.resolved.emplace_back(name_ + "." + key, std::to_string(v));
    return v;
  }
  std::vector<double> list(const std::string& key, Dimension dim) {
    std::vector<double> out;
    std::string text = raw(key), resolved;
    std::size_t start = 0;
    while (start <= text.size()) {
      const auto pos = text.find(',', start);
      const std::string item = text.substr(start, pos == std::string::npos ? std::string::npos : pos - start);
      out.push_back(parse_quantity(item, dim, where(key)));
      resolved += (resolved.empty() ? "" : ",") + fmt::format("{:.17g}", out.back());
      if (pos == std::string::npos) break;
      start = pos + 1;
    }
    cfg_.resolved.emplace_back(name_ + "." + key, resolved);
    return out;
  }

  /// Every key must have been consumed.
  void finish() const {
    for (const auto& [key, v] : values_)
      if (!used_.count(key)) throw invalid_input("config: unknown key '" + key + "' in [" + name_ + "]");
  }

 private:
  std::string where(const std::string& key) const { return "config [" + name_ + "] " + key; }
  std::string raw(const std::string& key) {
    const auto it = values_.find(key);
    if (it == values_.end()) throw invalid_input("config: missing key '" + key + "' in [" + name_ + "]");
    used_.insert(key);
    return it->second;
  }
  double record(const std::string& key, double v) {
    cfg_.resolved.emplace_back(name_ + "." + key, fmt::format("{:.17g}", v));
    return v;
  }

  std::string name_;
  const boost::property_tree::ptree& tree_;
  RunConfig& cfg_;
  std::map<std::string, std::string> values_;
  std::set<std::string> used_;
};

}  // namespace detail

inline RunConfig parse_config(std::istream& in, const std::string& origin = "config") {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw invalid_input(origin + ": " + e.message() + " (line " + std::to_string(e.line()) + ")");
  }
  RunConfig cfg;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty())
      throw invalid_input(origin + ": key '" + section + "' outside of a section");
    detail::SectionReader r(section, body, cfg);
    if (section == "run") {
      if (r.has("seed")) cfg.seed = r.integer("seed");
      cfg.duration = r.optional_quantity("duration", Dimension::time);
      cfg.sample_rate = r.optional_quantity("sample_rate", Dimension::frequency);
      if (r.has("radiation_pressure")) cfg.radiation_pressure = r.flag("radiation_pressure");
    } else if (section == "cavity") {
      CavityParams c;
      c.kappa = two_pi * r.quantity("kappa", Dimension::frequency);
      c.nu0 = r.quantity("nu0", Dimension::none);
      c.n_c0 = r.quantity("n_c0", Dimension::none);
      c.phi0 = r.has("phi0") ? r.quantity("phi0", Dimension::angle) : 0.0;
      c.validate();
      cfg.cavity = c;
    } else if (section == "bath") {
      BathParams b;
      b.temperature = r.quantity("temperature", Dimension::temperature);
      b.classical_detuning_noise_psd = r.quantity("classical_detuning_noise_psd", Dimension::psd);
      b.validate();
      cfg.bath = b;
    } else if (section == "detector") {
      DetectorParams d;
      d.eta_det = r.quantity("eta_det", Dimension::none);
      d.photon_flux = r.quantity("photon_flux", Dimension::rate);
      d.i_max = r.quantity("i_max", Dimension::none);
      d.i_bg = r.quantity("i_bg", Dimension::none);
      d.shot_noise = r.flag("shot_noise");
      d.validate();
      cfg.detector = d;
    } else if (section.rfind("mode.", 0) == 0 && section.size() > 5) {
      ModeParams m;
      m.label = section.substr(5);
      m.omega_m = two_pi * r.quantity("frequency", Dimension::frequency);
      const bool has_q = r.has("quality_factor"), has_gamma = r.has("gamma");
      if (has_q == has_gamma)
        throw invalid_input("config [" + section + "]: give exactly one of quality_factor or gamma");
      if (has_q) {
        const double q = r.quantity("quality_factor", Dimension::none);
        require(q > 0.0, "config [" + section + "] quality_factor must be > 0");
        m.gamma_m = m.omega_m / q;
      } else {
        m.gamma_m = r.quantity("gamma", Dimension::rate);
      }
      m.g0 = two_pi * r.quantity("g0", Dimension::frequency);
      m.m_eff = r.quantity("m_eff", Dimension::mass);
      m.beta_nl = r.quantity("beta_nl", Dimension::nonlinear_damping);
      m.validate();
      cfg.modes.push_back(m);
    } else if (section.rfind("tone.", 0) == 0 && section.size() > 5) {
      ToneParams t;
      t.label = section.substr(5);
      t.frequency = r.quantity("frequency", Dimension::frequency);
      t.amplitude = r.quantity("amplitude", Dimension::none);
      t.phase = r.quantity("phase", Dimension::angle);
      t.linewidth = r.quantity("linewidth", Dimension::frequency);
      cfg.tones.push_back(t);
    } else if (section == "sweep") {
      SweepConfig s;
      s.cooperativities = r.list("cooperativities", Dimension::none);
      s.band_lo = r.quantity("band_lo", Dimension::frequency);
      s.band_hi = r.quantity("band_hi", Dimension::frequency);
      s.segment = static_cast<std::size_t>(r.integer("segment"));
      s.classical_detuning_noise_psd = r.optional_quantity("classical_detuning_noise_psd", Dimension::psd);
      require(!s.cooperativities.empty(), "config [sweep]: cooperativities must not be empty");
      for (double c : s.cooperativities) require(c > 0.0, "config [sweep]: cooperativities must be > 0");
      require(s.band_lo < s.band_hi, "config [sweep]: band_lo must be < band_hi");
      cfg.sweep = s;
    } else {
      throw invalid_input(origin + ": unknown section [" + section + "]");
    }
    r.finish();
  }
  return cfg;
}

inline RunConfig parse_config_string(const std::string& text, const std::string& origin = "config") {
  std::istringstream in(text);
  return parse_config(in, origin);
}

/// Resolves a config path: as given if it exists, otherwise relative to
/// $OMTIN_CONFIG_DIR.
inline std::filesystem::path locate_config(const std::string& path) {
  std::filesystem::path p(path);
  if (std::filesystem::exists(p)) return p;
  if (p.is_relative()) {
    if (const char* dir = std::getenv("OMTIN_CONFIG_DIR")) {
      const auto alt = std::filesystem::path(dir) / p;
      if (std::filesystem::exists(alt)) return alt;
    }
  }
  throw io_failure("config file '" + path + "' not found");
}

inline RunConfig load_config(const std::string& path) {
  const auto p = locate_config(path);
  std::ifstream in(p);
  if (!in) throw io_failure("cannot open config '" + p.string() + "'");
  return parse_config(in, p.string());
}

}  // namespace omtin
