// Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fails.

#include <fmt/format.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "omtin/dynamics.hpp"
#include "omtin/fits.hpp"
#include "omtin/io.hpp"
#include "omtin/lockin.hpp"
#include "omtin/random.hpp"
#include "omtin/spectral.hpp"
#include "omtin/transduction.hpp"

using namespace omtin;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

const double magic = -1.0 / std::sqrt(3.0);

// ---------------------------------------------------------------- 1, 2

Outcome inversion_exactness() {
  CounterStream rng(101, "inversion");
  std::vector<double> nu(1'000'000);
  for (auto& v : nu) v = -2.0 + 1.9 * rng.uniform();
  DetectorParams det;
  det.i_max = 2.5;
  det.i_bg = 0.1;
  CavityParams cav;
  cav.nu0 = magic;
  const TimeTrace truth(nu, 1e6, "nu");
  const auto r = nonlinear_readout(transduce(truth, det, 0), cav, det);
  double worst = 0.0;
  for (std::size_t i = 0; i < nu.size(); ++i) worst = std::max(worst, std::abs(r.detuning_estimate[i] - nu[i]));
  return {worst < 1e-9 && r.clamp_count == 0, fmt::format("max|err|={:.3g} clamped={}", worst, r.clamp_count)};
}

double second_derivative(double x, double h) {
  const auto f = lorentzian_response;
  return (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h);
}

double third_derivative(double x, double h) {
  const auto f = lorentzian_response;
  return (f(x + 2 * h) - 2 * f(x + h) + 2 * f(x - h) - f(x - 2 * h)) / (2 * h * h * h);
}

Outcome magic_nulls() {
  // Richardson-extrapolated central differences
  auto d2 = [](double x) { return (4 * second_derivative(x, 5e-4) - second_derivative(x, 1e-3)) / 3; };
  auto d3 = [](double x) { return (4 * third_derivative(x, 5e-3) - third_derivative(x, 1e-2)) / 3; };
  const double a = d2(magic), b = d3(1.0), c = d3(-1.0);
  const bool ok = std::abs(a) < 1e-5 && std::abs(b) < 1e-5 && std::abs(c) < 1e-5;
  return {ok, fmt::format("d2(nu*)={:.2g} d3(+1)={:.2g} d3(-1)={:.2g}", a, b, c)};
}

// ---------------------------------------------------------------- 3, 4, 5

const double tone_fs = 4.096e6;  // 1 kHz bins with 4096-point segments
const double tone_duration = 0.25;
const WelchOptions tone_welch{4096, 0.5, Window::hann};

std::vector<ToneParams> three_tones() {
  return {{103e3, 0.08, 0.1, 1.0, "a"}, {296e3, 0.08, 0.7, 1.0, "b"}, {652e3, 0.08, 2.0, 1.0, "c"}};
}

DetectorParams tone_detector() {
  DetectorParams d;
  d.i_max = 1.0;
  d.i_bg = 0.0;
  d.photon_flux = 1e15;
  d.shot_noise = true;
  return d;
}

TimeTrace tone_current(bool with_probe) {
  auto tones = three_tones();
  if (with_probe) tones.push_back({1.13e6, 1e-4, 0.3, 0.0, "probe"});
  return transduce(tone_detuning(magic, tones, tone_duration, tone_fs, 21), tone_detector(), 22);
}

CavityParams magic_cavity() {
  CavityParams c;
  c.nu0 = magic;
  return c;
}

std::size_t local_max(const Spectrum& s, double f, std::size_t halfwidth) {
  std::size_t best = s.bin(f);
  for (std::size_t k = s.bin(f) - halfwidth; k <= s.bin(f) + halfwidth; ++k)
    if (s.values[k] > s.values[best]) best = k;
  return best;
}

double median_in(const Spectrum& s, double lo, double hi) {
  std::vector<double> v(s.values.begin() + static_cast<long>(s.bin(lo)), s.values.begin() + static_cast<long>(s.bin(hi)) + 1);
  std::nth_element(v.begin(), v.begin() + static_cast<long>(v.size() / 2), v.end());
  return v[v.size() / 2];
}

Outcome tin_reproduction() {
  const auto lin = linear_readout(tone_current(false), magic_cavity(), tone_detector()).detuning_estimate;
  const auto s = welch_psd(lin, tone_welch);
  const auto peak = local_max(s, 1.051e6, 1);
  const double floor = median_in(s, 0.951e6, 1.151e6);
  const double above = 10.0 * std::log10(s.values[peak] / floor);
  const auto spp = tin3_proxies(s).s_pp;
  std::size_t top = 1;
  for (std::size_t k = 1; k < spp.size(); ++k)
    if (spp.values[k] > spp.values[top]) top = k;
  const bool ok = std::abs(s.frequencies[peak] - 1.051e6) <= s.df && above >= 20.0 && top == peak;
  return {ok, fmt::format("peak={:.0f}Hz above_floor={:.1f}dB s_pp_peak={:.0f}Hz", s.frequencies[peak], above,
                          spp.frequencies[top])};
}

Outcome tin_removal() {
  const auto current = tone_current(true);
  const auto lin = welch_psd(linear_readout(current, magic_cavity(), tone_detector()).detuning_estimate, tone_welch);
  const auto nl = welch_psd(nonlinear_readout(current, magic_cavity(), tone_detector()).detuning_estimate, tone_welch);
  const auto k = lin.bin(1.051e6);
  const double suppression = 10.0 * std::log10(lin.values[k] / nl.values[k]);
  const std::pair<double, double> signal{1.128e6, 1.132e6}, noise{1.0e6, 1.12e6};
  const double tin_share = 10.0 * std::log10(band_power(lin, noise.first, noise.second) /
                                             band_power(nl, noise.first, noise.second));
  const double gain = snr_db(nl, signal, noise) - snr_db(lin, signal, noise);
  const bool ok = suppression >= 30.0 && gain >= 8.0;
  return {ok, fmt::format("suppression={:.1f}dB snr_gain={:.1f}dB noise_band_tin_excess={:.1f}dB", suppression, gain,
                          tin_share)};
}

Outcome quadrature_correlation() {
  const auto r = third_order_correlation(tone_current(false), 103e3, 296e3, 652e3, 1051e3, 200.0);
  const double diff = std::abs(r.beta_x.beta - r.beta_y.beta);
  const double sigma = std::hypot(r.beta_x.sigma, r.beta_y.sigma);
  const bool ok = r.beta_x.beta < 0 && r.beta_y.beta < 0 && diff <= 2.0 * sigma && std::abs(r.pearson_x) > 0.9 &&
                  std::abs(r.pearson_y) > 0.9;
  return {ok, fmt::format("beta_x={:.4f}+-{:.4f} beta_y={:.4f}+-{:.4f} r_x={:.4f} r_y={:.4f}", r.beta_x.beta,
                          r.beta_x.sigma, r.beta_y.beta, r.beta_y.sigma, r.pearson_x, r.pearson_y)};
}

// ---------------------------------------------------------------- 6, 7, 8

Outcome equipartition() {
  ModeParams m;
  m.omega_m = two_pi * 1e3;
  m.gamma_m = m.omega_m / 1e3;
  m.m_eff = 1e-12;
  m.g0 = two_pi * 0.5;
  m.label = "m";
  CavityParams cav;
  cav.kappa = two_pi * 2e6;
  cav.nu0 = -0.5;
  BathParams bath;
  bath.temperature = 300.0;
  bath.seed = 1;
  // displacement autocorrelation time 2 / Gamma_m
  const double duration = 200.0 * 2.0 / m.gamma_m;
  const auto out = simulate_modes({m}, cav, bath, duration, 2e4, false);
  const double expected = constants::boltzmann * 300.0 / (m.m_eff * m.omega_m * m.omega_m);
  const double ratio = variance(out.per_mode_displacement[0].view()) / expected;
  return {std::abs(ratio - 1.0) <= 0.05, fmt::format("var/expected={:.4f} over {:.1f}s", ratio, duration)};
}

Outcome spring_closure() {
  ModeParams m;
  m.omega_m = two_pi * 20e3;
  m.gamma_m = m.omega_m / 1e4;
  m.m_eff = 1e-12;
  m.label = "m";
  CavityParams cav;
  cav.kappa = two_pi * 2e6;
  m.g0 = 0.005 * cav.kappa / (2.0 * std::sqrt(2.0 * thermal_occupation(m.omega_m, 300.0)));
  BathParams bath;
  bath.temperature = 300.0;
  bath.seed = 11;
  const double c = 500.0;
  const double nbar = c * cav.kappa * m.gamma_m / (4.0 * m.g0 * m.g0);
  const std::vector<double> nus = {-0.3, -0.45, -0.6, -0.8, -1.0, -1.3, -1.7, -2.2};
  SpringSeries series;
  std::vector<double> ratios;
  for (double nu : nus) {
    cav.nu0 = nu;
    cav.n_c0 = nbar * (1.0 + nu * nu);  // fixed intracavity photon number
    const auto sim = simulate_modes({m}, cav, bath, 4.0, 200e3, true);
    const auto s = welch_psd(sim.per_mode_displacement[0], {32768, 0.5, Window::hann});
    const auto p = peak_frequency(s, {18e3, 22e3});
    const double ratio = (1.0 + nu * nu) / (1.0 + nus[0] * nus[0]);
    ratios.push_back(ratio);
    series.entries.push_back({ratio, two_pi * p.frequency, two_pi * std::max(p.sigma, 1e-3)});
  }
  const auto r = fit_optical_spring(series, m.gamma_m, m.omega_m);
  const double nu_1 = r.value("nu_1");
  const auto back = spring_detunings(nu_1, ratios);
  double identity = INFINITY;
  if (back) {
    identity = 0.0;
    for (std::size_t i = 0; i < ratios.size(); ++i)
      identity = std::max(identity, std::abs((1.0 + (*back)[i] * (*back)[i]) / (1.0 + nu_1 * nu_1) - ratios[i]) / ratios[i]);
  }
  const double err = r.value("C") / c - 1.0;
  const bool ok = r.converged && std::abs(err) <= 0.05 && identity < 1e-12;
  return {ok, fmt::format("C={:.1f}+-{:.1f} (err {:+.2f}%) nu_1={:.4f} identity_residual={:.2g}", r.value("C"),
                          r.sigma("C"), 100 * err, nu_1, identity)};
}

Outcome ringdown() {
  const double gamma = 1.0, e0 = 1e-12, beta = gamma / e0;
  CounterStream rng(31, "ringdown");
  auto e = ringdown_trace(e0, gamma, beta, 8.0, 1000.0, 0.0);
  for (auto& v : e.samples) v *= 1.0 + 0.01 * rng.normal();
  const auto r = fit_ringdown(e);
  const double eg = r.value("gamma_m") / gamma - 1.0, eb = r.value("beta_nl") / beta - 1.0;

  const double q = 1.071e8, omega = q * 1.0;  // time-compressed: Gamma_m = 1 /s
  CounterStream rng0(32, "ringdown");
  auto e_lin = ringdown_trace(e0, omega / q, 0.0, 4.0, 1000.0, 0.0);
  for (auto& v : e_lin.samples) v *= 1.0 + 0.01 * rng0.normal();
  const auto r0 = fit_ringdown(e_lin, {.omega_m = omega});
  const double eq = r0.value("Q") / q - 1.0;
  const double rel_sigma = r0.sigma("Q") / q;
  const double beta_rel = r0.value("beta_nl") * e0 / (omega / q);
  const bool ok = std::abs(eg) <= 0.005 && std::abs(eb) <= 0.05 && std::abs(eq) <= 0.005 &&
                  rel_sigma < 0.005 && std::abs(beta_rel) < 0.01;
  return {ok, fmt::format("gamma_err={:+.3f}% beta_err={:+.2f}% | beta=0: Q={:.4g}+-{:.2g} (err {:+.3f}%) "
                          "beta*E0/Gamma={:.2g}",
                          100 * eg, 100 * eb, r0.value("Q"), r0.sigma("Q"), 100 * eq, beta_rel)};
}

// ---------------------------------------------------------------- 9

Outcome scan_g0_chain() {
  const double kappa = two_pi * 36e6, n_th = 5.53e6, g0 = two_pi * 441.0;
  const double rate = 1e12, duration = 300e-6, fs = 20e6;
  const double mean_alpha = std::sqrt(std::numbers::pi * n_th) * 2.0 * g0 / kappa;
  const double sigma_r = mean_alpha / std::sqrt(std::numbers::pi / 2.0);
  CounterStream amplitudes(2024, "rayleigh");
  CounterStream phases(2025, "phase");
  CounterStream noise(2026, "scan noise");
  std::vector<double> fitted;
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    ScanParams p;
    p.kappa = kappa;
    p.t0 = 0.5 * duration;
    p.i_max = 2.5;
    p.i_bg = 0.1;
    const double alpha = sigma_r * std::sqrt(-2.0 * std::log(amplitudes.uniform()));
    p.modulations = {{alpha, two_pi * 1.13e6, two_pi * phases.uniform()}};
    auto t = scan_trace(p, rate, duration, fs);
    for (auto& v : t.samples) v += 0.002 * noise.normal();
    const auto r = fit_scan(t, rate, 1);
    fitted.push_back(r.fit.value("alpha_1"));
    worst = std::max(worst, std::abs(fitted.back() - alpha));
  }
  const auto e = estimate_g0(fitted, kappa, n_th);
  const double err = e.g0 / g0 - 1.0;
  return {std::abs(err) <= 0.05, fmt::format("g0=2pi*{:.1f}Hz +- {:.1f} (err {:+.2f}%) max|alpha_fit-alpha|={:.2g}",
                                             e.g0 / two_pi, e.sigma / two_pi, 100 * err, worst)};
}

// ---------------------------------------------------------------- 10, 11

Outcome model_psd_shape() {
  bool ok = true;
  std::string detail;
  for (double det : {-0.5, -0.2, 0.3}) {
    ModelPsdParams p;
    p.kappa_total = two_pi * 2e6;
    p.kappa_t = 0.4 * p.kappa_total;
    p.kappa_other = 0.6 * p.kappa_total;
    p.detuning = det * p.kappa_total;
    p.mode.omega_m = two_pi * 100e3;
    p.mode.gamma_m = two_pi * 10.0;
    p.mode.m_eff = 1e-11;
    p.mode.g0 = two_pi * 50.0;
    p.n_c = 1e5;
    p.s_delta = 1e4;
    const auto grid = uniform_grid(2.0 * p.mode.omega_m, 4001);
    const auto s = model_psd(p, grid);
    std::size_t best = 1;
    for (std::size_t k = 1; k + 1 < s.size(); ++k)
      if (s.values[k] < s.values[best]) best = k;
    const double miss = std::abs(grid[best] - p.mode.omega_m) / grid[1];
    const double high = model_psd(p, uniform_grid(two_pi * 5e9, 5001)).values.back();
    ok = ok && miss <= 1.0 && std::abs(high - 1.0) < 1e-3;
    detail += fmt::format("[D/k={:+.1f}: min off by {:.2f} steps, S(inf)={:.6f}] ", det, miss, high);
  }
  return {ok, detail};
}

Outcome spectral_foundations() {
  CounterStream rng(41, "white");
  const double fs = 1e3, sd = 2.0;
  std::vector<double> v(1 << 18);
  for (auto& x : v) x = sd * rng.normal();
  const TimeTrace t(v, fs, "V");

  const auto rect = welch_psd(t, {4096, 0.0, Window::rectangular});
  double total = 0.0;
  for (double p : rect.values) total += p * rect.df;
  const double parseval = total / variance(t.view()) - 1.0;

  const auto hann = welch_psd(t, {1024, 0.5, Window::hann});
  const double level = 2.0 * sd * sd / fs;
  double flat = 0.0;
  const std::size_t parts = 8, width = (hann.size() - 2) / parts;
  for (std::size_t b = 0; b < parts; ++b) {
    double acc = 0.0;
    for (std::size_t k = 1 + b * width; k < 1 + (b + 1) * width; ++k) acc += hann.values[k];
    flat = std::max(flat, std::abs(acc / static_cast<double>(width) / level - 1.0));
  }

  // tin3 by FFT against the direct triple sums on a 256-bin grid
  CounterStream r2(42, "grid");
  std::vector<double> g(256);
  for (auto& x : g) x = r2.uniform() * r2.uniform();
  const double df = 1.3;
  auto s = Spectrum::on_grid(g.size(), df, "1/Hz");
  s.values = g;
  const auto fast = tin3_proxies(s);
  const long long n = 256;
  auto at = [&](long long k) { return (k <= 0 || k >= n) ? 0.0 : g[static_cast<std::size_t>(k)]; };
  std::vector<double> pp(n), pm(n), mm(n);
  for (long long k = 0; k < n; ++k) {
    double a = 0, b = 0, c = 0;
    for (long long i = 1; i < n; ++i)
      for (long long j = 1; j < n; ++j) {
        a += at(i) * at(j) * at(k - i - j);
        b += at(i) * at(j) * at(k + i - j);
        c += at(i) * at(j) * at(i + j + k);
      }
    pp[k] = df * df * a;
    pm[k] = df * df * b;
    mm[k] = df * df * c;
  }
  auto rel = [](const std::vector<double>& x, const std::vector<double>& ref) {
    const double top = *std::max_element(ref.begin(), ref.end());
    double worst = 0.0;
    for (std::size_t k = 0; k < ref.size(); ++k) worst = std::max(worst, std::abs(x[k] - ref[k]) / top);
    return worst;
  };
  const double tin = std::max({rel(fast.s_pp.values, pp), rel(fast.s_pm.values, pm), rel(fast.s_mm.values, mm)});
  const bool ok = std::abs(parseval) <= 0.01 && flat <= 0.05 && tin <= 1e-10;
  return {ok, fmt::format("parseval_err={:+.3f}% flatness_err={:.2f}% tin3_fast_vs_direct={:.2g}", 100 * parseval,
                          100 * flat, tin)};
}

// ---------------------------------------------------------------- 12

int shell(const std::string& cmd) {
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome sweep_shape() {
  const fs::path dir = fs::temp_directory_path() / fmt::format("omtin_acceptance_{}", ::getpid());
  fs::create_directories(dir);
  const double omega = two_pi * 50e3, kappa = two_pi * 1e6;
  const double g0 = 0.005 * kappa / (2.0 * std::sqrt(2.0 * thermal_occupation(omega, 300.0)));
  const auto config = (dir / "sweep.ini").string();
  io::detail::write_file(config, fmt::format(R"([run]
seed = 7
duration = 1 s
sample_rate = 1 MHz

[cavity]
kappa = 1 MHz
nu0 = {:.17g}
n_c0 = 1e6

[bath]
temperature = 300 K
classical_detuning_noise_psd = 0 1/Hz

[detector]
eta_det = 1
photon_flux = 1e12 1/s
i_max = 1
i_bg = 0
shot_noise = true

[mode.m]
frequency = 50 kHz
quality_factor = 1e3
g0 = {:.17g} Hz
m_eff = 1 ng
beta_nl = 0 1/Js

[sweep]
cooperativities = 1, 3, 10, 30, 100
band_lo = 40 kHz
band_hi = 60 kHz
segment = 8192
)",
                                             magic, g0 / two_pi));
  auto run = [&](double psd, const std::string& name) {
    const auto out = (dir / name).string();
    const auto cmd = fmt::format("'{}' sweep --config '{}' --classical-noise {} --out '{}' >/dev/null", OMTIN_CLI_PATH,
                                 config, psd, out);
    if (shell(cmd) != 0) throw std::runtime_error("sweep command failed");
    return io::read_csv(out).values("band_rms");
  };
  const auto quiet = run(0.0, "quiet.csv");
  const auto noisy = run(1e-9, "noisy.csv");
  fs::remove_all(dir);

  bool monotone = true;
  for (std::size_t i = 1; i < quiet.size(); ++i) monotone = monotone && quiet[i] <= quiet[i - 1];
  const auto low = static_cast<std::size_t>(std::min_element(noisy.begin(), noisy.end()) - noisy.begin());
  const bool interior = low > 0 && low + 1 < noisy.size();
  std::string q, n;
  for (double v : quiet) q += fmt::format("{:.3g} ", v);
  for (double v : noisy) n += fmt::format("{:.3g} ", v);
  return {monotone && interior, fmt::format("no_noise=[{}] monotone={} | noise=[{}] min_index={}", q, monotone, n, low)};
}

struct Criterion {
  int id;
  std::string name;
  double limit_s;  // 0 = no runtime bound
  std::function<Outcome()> check;
};

}  // namespace

int main() {
  const std::vector<Criterion> all = {
      {1, "inversion exactness", 5, inversion_exactness},
      {2, "magic-detuning nulls", 0, magic_nulls},
      {3, "third-order TIN reproduction", 30, tin_reproduction},
      {4, "TIN removal / SNR recovery", 60, tin_removal},
      {5, "quadrature-correlation sign and consistency", 0, quadrature_correlation},
      {6, "equipartition", 10, equipartition},
      {7, "optical-spring closure", 0, spring_closure},
      {8, "ringdown fit", 0, ringdown},
      {9, "scan fit + g0 chain", 0, scan_g0_chain},
      {10, "analytic PSD model", 0, model_psd_shape},
      {11, "spectral foundations", 0, spectral_foundations},
      {12, "sweep shape", 0, sweep_shape},
  };
  int failed = 0;
  for (const auto& c : all) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {false, fmt::format("exception: {}", e.what())};
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.limit_s > 0 && seconds > c.limit_s) {
      o.pass = false;
      o.detail += fmt::format(" runtime over {:.0f}s", c.limit_s);
    }
    failed += o.pass ? 0 : 1;
    fmt::print("{} {:2d} {}: {} ({:.2f}s)\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail, seconds);
    std::fflush(stdout);
  }
  fmt::print("{} of {} criteria passed\n", static_cast<int>(all.size()) - failed, all.size());
  return failed == 0 ? 0 : 1;
}
