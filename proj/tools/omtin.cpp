// omtin: command-line front end for the optomechanical TIN toolkit.
//
// Output schema: results go to stdout as key=value lines, diagnostics and
// warnings to stderr. Every file written gets a <file>.meta sidecar with the
// library version, the command line and the resolved configuration.
//
// Exit codes: 0 success, 2 usage or configuration error, 3 numeric or
// convergence failure, 4 I/O failure.

#include <CLI11.hpp>
#include <fmt/format.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "omtin/config.hpp"
#include "omtin/core.hpp"
#include "omtin/dynamics.hpp"
#include "omtin/fits.hpp"
#include "omtin/io.hpp"
#include "omtin/lockin.hpp"
#include "omtin/pipeline.hpp"
#include "omtin/random.hpp"
#include "omtin/spectral.hpp"
#include "omtin/transduction.hpp"

#ifndef OMTIN_VERSION
#define OMTIN_VERSION "dev"
#endif

namespace {

using namespace omtin;
using Meta = std::vector<std::pair<std::string, std::string>>;

std::string g_command_line;

void emit(const std::string& key, double value) { fmt::print("{}={:.10g}\n", key, value); }
void emit(const std::string& key, const std::string& value) { fmt::print("{}={}\n", key, value); }

Meta base_meta(const RunConfig* cfg = nullptr) {
  Meta m{{"omtin_version", OMTIN_VERSION}, {"command", g_command_line}};
  if (cfg)
    for (const auto& [k, v] : cfg->resolved) m.emplace_back("config." + k, v);
  return m;
}

void save_trace(const std::string& path, const TimeTrace& t, const Meta& meta) {
  io::write_trace(path, t);
  io::write_meta(path, meta);
}

void save_spectrum(const std::string& path, const Spectrum& s, const Meta& meta) {
  io::write_spectrum(path, s);
  io::write_meta(path, meta);
}

void save_text(const std::string& path, const std::string& text, const Meta& meta) {
  io::detail::write_file(path, text);
  io::write_meta(path, meta);
}

std::pair<double, double> band_of(const std::vector<double>& v, const std::string& name) {
  if (v.size() != 2) throw invalid_input(name + " expects two values lo,hi");
  return {v[0], v[1]};
}

std::string sibling(const std::string& path, const std::string& tag) {
  std::filesystem::path p(path);
  auto out = p.parent_path() / (p.stem().string() + "." + tag + p.extension().string());
  return out.string();
}

bool is_trace_file(const std::string& path) {
  const auto data = io::detail::read_file(path);
  return data.size() >= 8 && data.compare(0, 8, std::string(io::trace_magic, 8)) == 0;
}

struct SpectralFlags {
  std::size_t segment = 4096;
  double overlap = 0.5;
  std::string window = "hann";
  bool rin = false;

  void add(CLI::App* c, bool with_rin) {
    c->add_option("--segment", segment, "Welch segment length (power of two)")->capture_default_str();
    c->add_option("--overlap", overlap, "Segment overlap fraction in [0, 1)")->capture_default_str();
    c->add_option("--window", window, "hann or rect")->capture_default_str();
    if (with_rin) c->add_flag("--rin", rin, "Treat a trace input as photocurrent and use its RIN");
  }
  WelchOptions options() const { return {segment, overlap, parse_window(window)}; }
};

/// A SpectrumFile, or a TraceFile turned into a Welch PSD.
Spectrum spectrum_input(const std::string& path, const SpectralFlags& f) {
  if (!is_trace_file(path)) return io::read_spectrum(path);
  const auto t = io::read_trace(path);
  return f.rin ? rin_spectrum(t, f.options()) : welch_psd(t, f.options());
}

template <typename T>
T need(const std::optional<T>& cli, const std::optional<T>& cfg, const std::string& what) {
  if (cli) return *cli;
  if (cfg) return *cfg;
  throw invalid_input("missing " + what + " (give it on the command line or in [run])");
}

void print_fit(const FitResult& r) {
  for (std::size_t i = 0; i < r.names.size(); ++i) {
    emit(r.names[i], r.params[i]);
    emit(r.names[i] + "_sigma", r.sigmas[i]);
  }
  emit("residual_norm", r.residual_norm);
  emit("converged", r.converged ? "true" : "false");
  emit("n_iter", std::to_string(r.n_iter));
}

std::string fit_csv(const FitResult& r) {
  std::string out = "parameter,value,sigma\n";
  for (std::size_t i = 0; i < r.names.size(); ++i)
    out += fmt::format("{},{:.17g},{:.17g}\n", r.names[i], r.params[i], r.sigmas[i]);
  return out;
}

void finish_fit(const FitResult& r, const std::string& out) {
  print_fit(r);
  if (!out.empty()) save_text(out, fit_csv(r), base_meta());
  if (!r.converged) throw numeric_failure("fit did not converge");
}

// ---------------------------------------------------------------- commands

struct SimulateCmd {
  std::string config, out;
  std::optional<std::uint64_t> seed;
  std::optional<double> duration, fs;
  bool radiation_pressure = false;

  void add(CLI::App& app, std::function<void()>& run) {
    auto* c = app.add_subcommand("simulate", "Simulate thermal motion and write the detuning trace");
    c->add_option("--config", config, "Run configuration")->required();
    c->add_option("--out", out, "Detuning TraceFile")->required();
    c->add_option("--seed", seed, "Random seed");
    c->add_option("--duration", duration, "Record length, s");
    c->add_option("--fs", fs, "Sample rate, Hz");
    c->add_flag("--radiation-pressure", radiation_pressure, "Enable the radiation-pressure force");
    c->callback([this, &run] { run = [this] { execute(); }; });
  }

  void execute() {
    auto cfg = load_config(config);
    if (cfg.modes.empty()) throw invalid_input("config: no [mode.*] section");
    BathParams bath = cfg.need_bath();
    bath.seed = need(seed, cfg.seed, "seed");
    const double d = need(duration, cfg.duration, "duration");
    const double rate = need(fs, cfg.sample_rate, "sample rate");
    const bool rp = radiation_pressure || cfg.radiation_pressure.value_or(false);
    const auto sim = simulate_modes(cfg.modes, cfg.need_cavity(), bath, d, rate, rp);
    Meta meta = base_meta(&cfg);
    meta.emplace_back("seed", std::to_string(bath.seed));
    meta.emplace_back("radiation_pressure", rp ? "true" : "false");
    save_trace(out, sim.detuning, meta);
    emit("samples", std::to_string(sim.detuning.size()));
    emit("detuning_mean", mean(sim.detuning.view()));
    emit("detuning_rms", std::sqrt(variance(sim.detuning.view())));
    for (std::size_t k = 0; k < cfg.modes.size(); ++k) {
      const auto path = sibling(out, "mode." + cfg.modes[k].label);
      save_trace(path, sim.per_mode_displacement[k], meta);
      const auto& x = sim.per_mode_displacement[k];
      emit("mode." + cfg.modes[k].label + ".displacement_rms", std::sqrt(variance(x.view())));
      emit("mode." + cfg.modes[k].label + ".expected_rms",
           std::sqrt(cfg.modes[k].thermal_variance(bath.temperature)));
    }
  }
};

struct TonesCmd {
  std::string config, out;
  std::optional<std::uint64_t> seed;
  std::optional<double> duration, fs;

  void add(CLI::App& app, std::function<void()>& run) {
    auto* c = app.add_subcommand("tones", "Write a detuning trace made of phase-diffusing tones");
    c->add_option("--config", config, "Run configuration with [cavity] and [tone.*]")->required();
    c->add_option("--out", out, "Detuning TraceFile")->required();
    c->add_option("--seed", seed, "Random seed");
    c->add_option("--duration", duration, "Record length, s");
    c->add_option("--fs", fs, "Sample rate, Hz");
    c->callback([this, &run] { run = [this] { execute(); }; });
  }

  void execute() {
    auto cfg = load_config(config);
    if (cfg.tones.empty()) throw invalid_input("config: no [tone.*] section");
    const auto s = need(seed, cfg.seed, "seed");
    const auto t = tone_detuning(cfg.need_cavity().nu0, cfg.tones, need(duration, cfg.duration, "duration"),
                                 need(fs, cfg.sample_rate, "sample rate"), s);
    Meta meta = base_meta(&cfg);
    meta.emplace_back("seed", std::to_string(s));
    save_trace(out, t, meta);
    emit("samples", std::to_string(t.size()));
    emit("detuning_rms", std::sqrt(variance(t.view())));
  }
};

struct TransduceCmd {
  std::string config, in, out;
  std::optional<std::uint64_t> seed;

  void add(CLI::App& app, std::function<void()>& run) {
    auto* c = app.add_subcommand("transduce", "Detect a detuning trace as photocurrent");
    c->add_option("--config", config, "Run configuration with [detector]")->required();
    c->add_option("--in", in, "Detuning TraceFile")->required();
    c->add_option("--out", out, "Photocurrent TraceFile")->required();
    c->add_option("--seed", seed, "Shot-noise seed");
    c->callback([this, &run] { run = [this] { execute(); }; });
  }

  void execute() {
    auto cfg = load_config(config);
    const auto det = cfg.need_detector();
    const auto s = need(seed, cfg.seed, "seed");
    const auto current = transduce(io::read_trace(in), det, s);
    Meta meta = base_meta(&cfg);
    meta.emplace_back("seed", std::to_string(s));
    save_trace(out, current, meta);
    emit("samples", std::to_string(current.size()));
    emit("current_mean", mean(current.view()));
  }
};

struct ReconstructCmd {
  std::string in, out, mode = "nonlinear", sign_trace;
  double nu0 = 0.0, imax = 0.0, ibg = 0.0;

  void add(CLI::App& app, std::function<void()>& run) {
    auto* c = app.add_subcommand("reconstruct", "Recover detuning from photocurrent");
    c->add_option("--in", in, "Photocurrent TraceFile")->required();
    c->add_option("--out", out, "Detuning TraceFile")->required();
    c->add_option("--mode", mode, "linear, nonlinear or general-dyne")->capture_default_str();
    c->add_option("--nu0", nu0, "Operating detuning")->required();
    c->add_option("--imax", imax, "Photocurrent on resonance")->required();
    c->add_option("--ibg", ibg, "Background photocurrent")->required();
    c->add_option("--sign-trace", sign_trace, "TraceFile of +-1 phase signs (general-dyne)");
    c->callback([this, &run] { run = [this] { execute(); }; });
  }

  void execute() {
    CavityParams cav;
    cav.nu0 = nu0;
    DetectorParams det;
    det.i_max = imax;
    det.i_bg = ibg;
    const auto current = io::read_trace(in);
    ReadoutResult r;
    if (mode == "linear") {
      r = linear_readout(current, cav, det);
    } else if (mode == "nonlinear") {
      r = nonlinear_readout(current, cav, det);
    } else if (mode == "general-dyne") {
      if (sign_trace.empty()) throw invalid_input("general-dyne readout needs --sign-trace");
      r = general_dyne_readout(current, io::read_trace(sign_trace), cav, det);
    } else {
      throw invalid_input("unknown readout mode '" + mode + "'");
    }
    Meta meta = base_meta();
    meta.emplace_back("readout", to_string(r.method));
    save_trace(out, r.detuning_estimate, meta);
    emit("samples", std::to_string(r.detuning_estimate.size()));
    emit("readout", to_string(r.method));
    fmt::print(stderr, "clamped={} clamp_fraction={:.6g}\n", r.clamp_count, r.clamp_fraction());
  }
};

struct PsdCmd {
  std::string name, in, out;
  SpectralFlags flags;

  void add(CLI::App& app, std::function<void()>& run, const std::string& cmd, const std::string& help) {
    name = cmd;
    auto* c = app.add_subcommand(cmd, help);
    c->add_option("--in", in, "TraceFile")->required();
    c->add_option("--out", out, "SpectrumFile")->required();
    flags.add(c, false);
    c->callback([this, &run] { run = [this] { execute(); }; });
  }

  void execute() {
    const auto t = io::read_trace(in);
    const auto s = name == "rin" ? rin_spectrum(t, flags.options()) : welch_psd(t, flags.options());
    save_spectrum(out, s, base_meta());
    emit("bins", std::to_string(s.size()));
    emit("df_hz", s.df);
    emit("segments", std::to_string(s.segments));
  }
};

double peak_frequency_of(const Spectrum& s) {
  std::size_t top = 1;
  for (std::size_t k = 1; k < s.size(); ++k)
    if (s.values[k] > s.values[top]) top = k;
  return s.frequencies[top];
}

struct TinCmd {
  std::string in, out;
  int order = 3;
  std::vector<double> normalize;
  SpectralFlags flags;

  void add(CLI::App& app, std::function<void()>& run) {
    auto* c = app.add_subcommand("tin", "Intermodulation proxy spectra");
    c->add_option("--in", in, "SpectrumFile, or TraceFile (Welch PSD taken first)")->required();
    c->add_option("--out", out, "Output prefix; writes <prefix>.<proxy>.csv")->required();
    c->add_option("--order", order, "2 or 3")->capture_default_str()->check(CLI::IsMember({2, 3}));
    c->add_option("--normalize-max", normalize, "Normalize to the maximum in lo,hi (Hz)")->delimiter(',');
    flags.add(c, true);
    c->callback([this, &run] { run = [this] { execute(); }; });
  }

  void execute() {
    const auto s = spectrum_input(in, flags);
    std::vector<std::pair<std::string, Spectrum>> proxies;
    if (order == 2) {
      auto p = tin2_proxies(s);
      proxies = {{"s_plus", std::move(p.s_plus)}, {"s_minus", std::move(p.s_minus)}};
    } else {
      auto p = tin3_proxies(s);
      proxies = {{"s_pp", std::move(p.s_pp)}, {"s_pm", std::move(p.s_pm)}, {"s_mm", std::move(p.s_mm)}};
    }
    for (auto& [tag, proxy] : proxies) {
      if (!normalize.empty()) {
        const auto [lo, hi] = band_of(normalize, "--normalize-max");
        proxy = normalize_max(proxy, lo, hi);
      }
      save_spectrum(out + "." + tag + ".csv", proxy, base_meta());
      emit(tag + ".peak_hz", peak_frequency_of(proxy));
    }
    emit("input_peak_hz", peak_frequency_of(s));
  }
};

struct BandRmsCmd {
  std::string in;
  std::vector<double> band;
  SpectralFlags flags;

  void add(CLI::App& app, std::function<void()>& run) {
    auto* c = app.add_subcommand("band-rms", "RMS of a PSD over a frequency band");
    c->add_option("--in", in, "SpectrumFile or TraceFile")->required();
    c->add_option("--band", band, "lo,hi in Hz")->delimiter(',')->required();
    flags.add(c, true);
    c->callback([this, &run] { run = [this] { execute(); }; });
  }

  void execute() {
    const auto [lo, hi] = band_of(band, "--band");
    emit("band_rms", band_rms(spectrum_input(in, flags), lo, hi));
  }
};

struct SnrCmd {
  std::string in;
  std::vector<double> signal, noise;
  SpectralFlags flags;

  void add(CLI::App& app, std::function<void()>& run) {
    auto* c = app.add_subcommand("snr", "Signal-to-noise ratio between two bands, dB");
    c->add_option("--in", in, "SpectrumFile or TraceFile")->required();
    c->add_option("--signal", signal, "Signal band lo,hi in Hz")->delimiter(',')->required();
    c->add_option("--noise", noise, "Noise band lo,hi in Hz")->delimiter(',')->required();
    flags.add(c, true);
    c->callback([this, &run] { run = [this] { execute(); }; });
  }

  void execute() {
    const double db = snr_db(spectrum_input(in, flags), band_of(signal, "--signal"), band_of(noise, "--noise"));
    fmt::print("snr_db={:.1f}\n", db);
  }
};

struct PeakCmd {
  std::string in;
  std::vector<double> band;
  SpectralFlags flags;

  void add(CLI::App& app, std::function<void()>& run) {
    auto* c = app.add_subcommand("peak", "Lorentzian peak location within a band");
    c->add_option("--in", in, "SpectrumFile or TraceFile")->required();
    c->add_option("--band", band, "lo,hi in Hz")->delimiter(',')->required();
    flags.add(c, true);
    c->callback([this, &run] { run = [this] { execute(); }; });
  }

  void execute() {
    const auto p = peak_frequency(spectrum_input(in, flags), band_of(band, "--band"));
    emit("peak_hz", p.frequency);
    emit("peak_sigma_hz", p.sigma);
    emit("linewidth_hz", p.linewidth);
  }
};

struct DemodCmd {
  std::string in, out;
  std::vector<double> freqs;
  double bw = 0.0;
  bool keep_settling = false;

  void add(CLI::App& app, std::function<void()>& run) {
    auto* c = app.add_subcommand("demod", "Quadratures X, Y at one or more carriers");
    c->add_option("--in", in, "TraceFile")->required();
    c->add_option("--out", out, "CSV of quadratures")->required();
    c->add_option("--freqs", freqs, "Carrier frequencies in Hz, comma separated")->delimiter(',')->required();
    c->add_option("--bw", bw, "Low-pass bandwidth, Hz")->required();
    c->add_flag("--keep-settling", keep_settling, "Keep the filter transients at both ends");
    c->callback([this, &run] { run = [this] { execute(); }; });
  }

  void execute() {
    const auto t = io::read_trace(in);
    io::Table table;
    table.columns.push_back("time_s");
    std::vector<QuadratureTrace> qs;
    for (std::size_t k = 0; k < freqs.size(); ++k) {
      auto q = demodulate(t, freqs[k], bw);
      qs.push_back(keep_settling ? q : discard_settling(q));
      table.columns.push_back(fmt::format("x_{}", k + 1));
      table.columns.push_back(fmt::format("y_{}", k + 1));
    }
    const auto& first = qs.front().x;
    const double t0 = keep_settling ? 0.0 : std::ceil(5.0 / bw * first.sample_rate) / first.sample_rate;
    for (std::size_t i = 0; i < first.size(); ++i) {
      std::vector<double> row{t0 + first.time(i)};
      for (const auto& q : qs) {
        row.push_back(q.x[i]);
        row.push_back(q.y[i]);
      }
      table.rows.push_back(std::move(row));
    }
    save_text(out, io::encode_csv(table), base_meta());
    emit("rows", std::to_string(table.rows.size()));
    emit("sample_rate_hz", first.sample_rate);
  }
};

struct CorrelateCmd {
  std::string in;
  std::vector<double> freqs;
  double bw = 0.0;

  void add(CLI::App& app, std::function<void()>& run) {
    auto* c = app.add_subcommand("correlate", "Third-order quadrature correlation f1 + f2 + f3 -> f4");
    c->add_option("--in", in, "TraceFile")->required();
    c->add_option("--freqs", freqs, "f1,f2,f3,f4 in Hz")->delimiter(',')->required();
    c->add_option("--bw", bw, "Low-pass bandwidth, Hz")->required();
    c->callback([this, &run] { run = [this] { execute(); }; });
  }

  void execute() {
    if (freqs.size() != 4) throw invalid_input("--freqs expects four frequencies f1,f2,f3,f4");
    const auto r = third_order_correlation(io::read_trace(in), freqs[0], freqs[1], freqs[2], freqs[3], bw);
    emit("pearson_x", r.pearson_x);
    emit("pearson_y", r.pearson_y);
    emit("beta_x", r.beta_x.beta);
    emit("beta_x_sigma", r.beta_x.sigma);
    emit("beta_y", r.beta_y.beta);
    emit("beta_y_sigma", r.beta_y.sigma);
    emit("samples", std::to_string(r.n_samples));
  }
};

struct FitSpringCmd {
  std::string in, out;
  double gamma = 0.0, f_guess = 0.0;
  bool fix_omega = false;

  void add(CLI::App& app, std::function<void()>& run) {
    auto* c = app.add_subcommand("fit-spring", "Optical-spring fit of C, nu_1 and the bare frequency");
    c->add_option("--in", in, "CSV with power_ratio,f_eff_hz,sigma_hz")->required();
    c->add_option("--gamma", gamma, "Mechanical damping rate Gamma_m, 1/s")->required();
    c->add_option("--f-guess", f_guess, "Bare mechanical frequency (guess or fixed value), Hz")->required();
    c->add_flag("--fix-omega", fix_omega, "Hold the bare frequency at --f-guess");
    c->add_option("--out", out, "CSV of fitted parameters");
    c->callback([this, &run] { run = [this] { execute(); }; });
  }

  void execute() {
    const auto t = io::read_csv(in);
    SpringSeries s;
    const auto ratio = t.values("power_ratio"), f = t.values("f_eff_hz"), sigma = t.values("sigma_hz");
    for (std::size_t i = 0; i < ratio.size(); ++i) s.entries.push_back({ratio[i], two_pi * f[i], two_pi * sigma[i]});
    auto r = fit_optical_spring(s, gamma, two_pi * f_guess, {fix_omega});
    const auto k = r.index("omega_m");
    r.names[k] = "f_m_hz";
    r.params[k] /= two_pi;
    r.sigmas[k] /= two_pi;
    finish_fit(r, out);
  }
};

struct FitRingdownCmd {
  std::string in, out;
  std::optional<double> f_m;

  void add(CLI::App& app, std::function<void()>& run) {
    auto* c = app.add_subcommand("fit-ringdown", "Nonlinear-damping ringdown fit");
    c->add_option("--in", in, "Energy TraceFile")->required();
    c->add_option("--f-m", f_m, "Mechanical frequency, Hz (adds Q)");
    c->add_option("--out", out, "CSV of fitted parameters");
    c->callback([this, &run] { run = [this] { execute(); }; });
  }

  void execute() {
    RingdownFitOptions opt;
    if (f_m) opt.omega_m = two_pi * *f_m;
    finish_fit(fit_ringdown(io::read_trace(in), opt), out);
  }
};

struct FitScanCmd {
  std::string in, out;
  double rate = 0.0;
  std::size_t modes = 0;

  void add(CLI::App& app, std::function<void()>& run) {
    auto* c = app.add_subcommand("fit-scan", "Fit a modulated resonance scan");
    c->add_option("--in", in, "Transmission TraceFile")->required();
    c->add_option("--rate", rate, "Laser scan rate, Hz/s")->required();
    c->add_option("--modes", modes, "Number of sinusoidal modulations")->capture_default_str();
    c->add_option("--out", out, "CSV of fitted parameters");
    c->callback([this, &run] { run = [this] { execute(); }; });
  }

  void execute() {
    const auto r = fit_scan(io::read_trace(in), rate, modes);
    for (const auto& w : r.warnings) fmt::print(stderr, "warning: {}\n", w);
    finish_fit(r.fit, out);
  }
};

struct G0Cmd {
  std::string in;
  std::vector<double> alphas;
  double kappa = 0.0, n_th = 0.0;

  void add(CLI::App& app, std::function<void()>& run) {
    auto* c = app.add_subcommand("g0", "Single-photon coupling from modulation amplitudes");
    auto* file = c->add_option("--in", in, "CSV with an alpha column");
    c->add_option("--alphas", alphas, "Amplitudes, comma separated")->delimiter(',')->excludes(file);
    c->add_option("--kappa", kappa, "Cavity linewidth, Hz")->required();
    c->add_option("--nth", n_th, "Thermal occupation")->required();
    c->callback([this, &run] { run = [this] { execute(); }; });
  }

  void execute() {
    if (!in.empty()) alphas = io::read_csv(in).values("alpha");
    const auto e = estimate_g0(alphas, two_pi * kappa, n_th);
    emit("g0_hz", e.g0 / two_pi);
    emit("g0_sigma_hz", e.sigma / two_pi);
    emit("mean_alpha", e.mean_alpha);
    emit("samples", std::to_string(alphas.size()));
  }
};

struct FomCmd {
  std::string config;

  void add(CLI::App& app, std::function<void()>& run) {
    auto* c = app.add_subcommand("fom", "Figures of merit of every configured mode");
    c->add_option("--config", config, "Run configuration")->required();
    c->callback([this, &run] { run = [this] { execute(); }; });
  }

  void execute() {
    const auto cfg = load_config(config);
    if (cfg.modes.empty()) throw invalid_input("config: no [mode.*] section");
    const auto& cav = cfg.need_cavity();
    const auto& bath = cfg.need_bath();
    const double nbar = mean_photon_number(cav);
    emit("mean_photon_number", nbar);
    for (const auto& m : cfg.modes) {
      const auto f = figures_of_merit(m, cav, nbar, bath.temperature);
      const std::string p = "mode." + m.label + ".";
      emit(p + "cooperativity", f.cooperativity);
      emit(p + "single_photon_cooperativity", f.single_photon_cooperativity);
      emit(p + "n_th", f.thermal_occupation);
      emit(p + "c_over_nth", f.thermal_occupation > 0.0 ? f.cooperativity / f.thermal_occupation : INFINITY);
      emit(p + "backaction_force_psd", f.backaction_force_psd);
      emit(p + "thermal_force_psd", f.thermal_force_psd);
      emit(p + "n_sideband_limit", f.sideband_limit);
      emit(p + "quality_factor", m.quality_factor());
    }
  }
};

struct ModelPsdCmd {
  std::string out;
  double kappa = 0.0, kappa_t = 0.0, kappa_other = 0.0, detuning = 0.0;
  double f_m = 0.0, q = 0.0, m_eff = 0.0, g0 = 0.0, n_c = 0.0;
  double s_delta = 0.0, force_psd = 0.0, eta = 1.0, f_max = 0.0;
  std::size_t points = 2001;

  void add(CLI::App& app, std::function<void()>& run) {
    auto* c = app.add_subcommand("model-psd", "Analytic direct-detection PSD in shot-noise units");
    c->add_option("--out", out, "SpectrumFile")->required();
    c->add_option("--kappa", kappa, "Total linewidth, Hz")->required();
    c->add_option("--kappa-t", kappa_t, "Transmission-port linewidth, Hz")->required();
    c->add_option("--kappa-other", kappa_other, "Remaining port linewidths, Hz")->required();
    c->add_option("--detuning", detuning, "Laser detuning Delta, Hz")->required();
    c->add_option("--f-m", f_m, "Mechanical frequency, Hz")->required();
    c->add_option("--q", q, "Mechanical quality factor")->required();
    c->add_option("--m-eff", m_eff, "Effective mass, kg")->required();
    c->add_option("--g0", g0, "Single-photon coupling, Hz")->required();
    c->add_option("--n-c", n_c, "Intracavity photon number")->required();
    c->add_option("--s-delta", s_delta, "Detuning-noise PSD, rad^2/s^2/Hz")->capture_default_str();
    c->add_option("--force-psd", force_psd, "Thermal force PSD, N^2/Hz")->capture_default_str();
    c->add_option("--eta", eta, "Detection efficiency")->capture_default_str();
    c->add_option("--f-max", f_max, "Grid end, Hz")->required();
    c->add_option("--points", points, "Grid points")->capture_default_str();
    c->callback([this, &run] { run = [this] { execute(); }; });
  }

  void execute() {
    require(q > 0.0, "--q must be > 0");
    require(points >= 2, "--points must be >= 2");
    ModelPsdParams p;
    p.kappa_total = two_pi * kappa;
    p.kappa_t = two_pi * kappa_t;
    p.kappa_other = two_pi * kappa_other;
    p.detuning = two_pi * detuning;
    p.mode.omega_m = two_pi * f_m;
    p.mode.gamma_m = p.mode.omega_m / q;
    p.mode.m_eff = m_eff;
    p.mode.g0 = two_pi * g0;
    p.n_c = n_c;
    p.s_delta = s_delta;
    p.thermal_force_psd = force_psd;
    p.eta_det = eta;
    const auto s = model_psd(p, uniform_grid(two_pi * f_max, points));
    save_spectrum(out, s, base_meta());
    std::size_t lo = 1;
    const std::size_t end = std::min(s.size() - 1, s.bin(2.0 * f_m));
    for (std::size_t k = 1; k < end; ++k)
      if (s.values[k] < s.values[lo]) lo = k;
    emit("min_below_2fm_hz", s.frequencies[lo]);
    emit("value_at_fmax", s.values.back());
  }
};

struct SweepCmd {
  std::string config, out;
  std::vector<double> cooperativities;
  std::optional<double> classical_noise, duration, fs;
  std::optional<std::uint64_t> seed;

  void add(CLI::App& app, std::function<void()>& run) {
    auto* c = app.add_subcommand("sweep", "Band RMS of the relative intensity noise versus cooperativity");
    c->add_option("--config", config, "Run configuration with [sweep]")->required();
    c->add_option("--out", out, "CSV with cooperativity,c_over_nth,band_rms")->required();
    c->add_option("--cooperativities", cooperativities, "Override the configured list")->delimiter(',');
    c->add_option("--classical-noise", classical_noise, "Classical detuning-noise PSD, 1/Hz");
    c->add_option("--seed", seed, "Random seed");
    c->add_option("--duration", duration, "Record length, s");
    c->add_option("--fs", fs, "Sample rate, Hz");
    c->callback([this, &run] { run = [this] { execute(); }; });
  }

  void execute() {
    const auto cfg = load_config(config);
    const auto& sw = cfg.need_sweep();
    SweepSetup s;
    s.modes = cfg.modes;
    s.cavity = cfg.need_cavity();
    s.bath = cfg.need_bath();
    s.bath.seed = need(seed, cfg.seed, "seed");
    if (sw.classical_detuning_noise_psd) s.bath.classical_detuning_noise_psd = *sw.classical_detuning_noise_psd;
    if (classical_noise) s.bath.classical_detuning_noise_psd = *classical_noise;
    s.bath.validate();
    s.detector = cfg.need_detector();
    s.duration = need(duration, cfg.duration, "duration");
    s.sample_rate = need(fs, cfg.sample_rate, "sample rate");
    s.band_lo = sw.band_lo;
    s.band_hi = sw.band_hi;
    s.segment = sw.segment;
    const auto cs = cooperativities.empty() ? sw.cooperativities : cooperativities;
    for (double c : cs) require(c > 0.0, "cooperativities must be > 0");
    const auto rows = sweep(s, cs);
    io::Table t{{"cooperativity", "c_over_nth", "band_rms"}, {}};
    for (const auto& r : rows) t.rows.push_back({r.cooperativity, r.c_over_nth, r.band_rms});
    Meta meta = base_meta(&cfg);
    meta.emplace_back("classical_detuning_noise_psd", fmt::format("{:.17g}", s.bath.classical_detuning_noise_psd));
    save_text(out, io::encode_csv(t), meta);
    for (const auto& r : rows) fmt::print("C={:.6g} c_over_nth={:.6g} band_rms={:.6g}\n", r.cooperativity,
                                          r.c_over_nth, r.band_rms);
  }
};

struct GenRingdownCmd {
  std::string out;
  double e0 = 0.0, gamma = 0.0, beta = 0.0, duration = 0.0, fs = 0.0, offset = 0.0, noise = 0.0;
  std::uint64_t seed = 0;

  void add(CLI::App& app, std::function<void()>& run) {
    auto* c = app.add_subcommand("gen-ringdown", "Synthetic ringdown energy trace");
    c->add_option("--out", out, "Energy TraceFile")->required();
    c->add_option("--e0", e0, "Initial energy, J")->required();
    c->add_option("--gamma", gamma, "Linear damping rate, 1/s")->required();
    c->add_option("--beta", beta, "Nonlinear damping, 1/(J s)")->capture_default_str();
    c->add_option("--offset", offset, "Constant offset, J")->capture_default_str();
    c->add_option("--duration", duration, "Record length, s")->required();
    c->add_option("--fs", fs, "Sample rate, Hz")->required();
    c->add_option("--noise", noise, "Relative multiplicative noise (1 sigma)")->capture_default_str();
    c->add_option("--seed", seed, "Random seed")->capture_default_str();
    c->callback([this, &run] { run = [this] { execute(); }; });
  }

  void execute() {
    require(noise >= 0.0, "--noise must be >= 0");
    auto t = ringdown_trace(e0, gamma, beta, duration, fs, offset);
    CounterStream rng(seed, "ringdown");
    if (noise > 0.0)
      for (auto& v : t.samples) v *= 1.0 + noise * rng.normal();
    save_trace(out, t, base_meta());
    emit("samples", std::to_string(t.size()));
  }
};

struct GenScanCmd {
  std::string out;
  double kappa = 0.0, rate = 0.0, duration = 0.0, fs = 0.0, imax = 1.0, ibg = 0.0, noise = 0.0;
  std::optional<double> t0;
  std::vector<std::string> mods;
  std::uint64_t seed = 0;

  void add(CLI::App& app, std::function<void()>& run) {
    auto* c = app.add_subcommand("gen-scan", "Synthetic modulated resonance scan");
    c->add_option("--out", out, "Transmission TraceFile")->required();
    c->add_option("--kappa", kappa, "Cavity linewidth, Hz")->required();
    c->add_option("--rate", rate, "Laser scan rate, Hz/s")->required();
    c->add_option("--duration", duration, "Record length, s")->required();
    c->add_option("--fs", fs, "Sample rate, Hz")->required();
    c->add_option("--imax", imax, "Transmission on resonance")->capture_default_str();
    c->add_option("--ibg", ibg, "Background level")->capture_default_str();
    c->add_option("--t0", t0, "Resonance crossing time, s (default: mid-record)");
    c->add_option("--mod", mods, "Modulation alpha,f_hz,phi_rad (repeatable)");
    c->add_option("--noise", noise, "Additive Gaussian noise (1 sigma)")->capture_default_str();
    c->add_option("--seed", seed, "Random seed")->capture_default_str();
    c->callback([this, &run] { run = [this] { execute(); }; });
  }

  void execute() {
    ScanParams p;
    p.kappa = two_pi * kappa;
    p.t0 = t0.value_or(0.5 * duration);
    p.i_max = imax;
    p.i_bg = ibg;
    for (const auto& m : mods) {
      const auto parts = io::detail::split(m, ',');
      if (parts.size() != 3) throw invalid_input("--mod expects alpha,f_hz,phi_rad");
      double v[3];
      for (int i = 0; i < 3; ++i) {
        try {
          v[i] = io::detail::parse_double(parts[static_cast<std::size_t>(i)], "--mod");
        } catch (const io_failure& e) {
          throw invalid_input(e.what());
        }
      }
      p.modulations.push_back({v[0], two_pi * v[1], v[2]});
    }
    require(noise >= 0.0, "--noise must be >= 0");
    auto t = scan_trace(p, rate, duration, fs);
    CounterStream rng(seed, "scan");
    if (noise > 0.0)
      for (auto& v : t.samples) v += noise * rng.normal();
    save_trace(out, t, base_meta());
    emit("samples", std::to_string(t.size()));
    emit("nu_offset", p.nu_offset(rate));
  }
};

}  // namespace

int main(int argc, char** argv) {
  for (int i = 0; i < argc; ++i) g_command_line += (i ? " " : "") + std::string(argv[i]);

  CLI::App app{"Optomechanical thermal intermodulation noise toolkit", "omtin"};
  app.set_version_flag("--version", std::string(OMTIN_VERSION));
  app.require_subcommand(1);
  std::function<void()> run;

  SimulateCmd simulate;
  TonesCmd tones;
  TransduceCmd transduce_cmd;
  ReconstructCmd reconstruct;
  PsdCmd psd, rin;
  TinCmd tin;
  BandRmsCmd band;
  SnrCmd snr;
  PeakCmd peak;
  DemodCmd demod;
  CorrelateCmd correlate;
  FitSpringCmd fit_spring;
  FitRingdownCmd fit_ringdown_cmd;
  FitScanCmd fit_scan_cmd;
  G0Cmd g0;
  FomCmd fom;
  ModelPsdCmd model;
  SweepCmd sweep_cmd;
  GenRingdownCmd gen_ringdown;
  GenScanCmd gen_scan;

  simulate.add(app, run);
  tones.add(app, run);
  transduce_cmd.add(app, run);
  reconstruct.add(app, run);
  psd.add(app, run, "psd", "Welch PSD of a trace");
  rin.add(app, run, "rin", "Welch PSD of the relative intensity noise of a photocurrent");
  tin.add(app, run);
  band.add(app, run);
  snr.add(app, run);
  peak.add(app, run);
  demod.add(app, run);
  correlate.add(app, run);
  fit_spring.add(app, run);
  fit_ringdown_cmd.add(app, run);
  fit_scan_cmd.add(app, run);
  g0.add(app, run);
  fom.add(app, run);
  model.add(app, run);
  sweep_cmd.add(app, run);
  gen_ringdown.add(app, run);
  gen_scan.add(app, run);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    run();
    return 0;
  } catch (const io_failure& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 4;
  } catch (const numeric_failure& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 3;
  } catch (const std::invalid_argument& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 3;
  }
}
