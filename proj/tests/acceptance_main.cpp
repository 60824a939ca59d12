// Acceptance checks for the memtune toolkit. Each criterion prints exactly
// one PASS/FAIL line; the process exits nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <memtune/memtune.hpp>

using namespace memtune;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(int num, bool ok, const std::string& text) {
  std::printf("%s criterion %d: %s\n", ok ? "PASS" : "FAIL", num, text.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double rel(double x, double ref) { return std::abs(x - ref) / std::abs(ref); }

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

/// Linear interpolation of y(x) on an x-ascending table.
double interp(const std::vector<double>& xs, const std::vector<double>& ys, double x) {
  std::size_t hi = 1;
  while (hi + 1 < xs.size() && xs[hi] < x) ++hi;
  const double t = (x - xs[hi - 1]) / (xs[hi] - xs[hi - 1]);
  return ys[hi - 1] + t * (ys[hi] - ys[hi - 1]);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return "<unreadable:" + p.string() + ">";
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

int main() {
  const MembraneSpec t500 = preset_membrane("t1_500");

  // 1. Fundamental frequencies of the shipped presets against the reference
  //    measurements.
  {
    const std::pair<const char*, double> refs[] = {
        {"t1_250", 428e3},     {"t1_500", 260e3},      {"t1_1000", 144e3},
        {"t1_1500", 77.7e3},   {"t1_500_t75", 281e3},  {"t1_500_t100", 387e3}};
    double worst = 0.0;
    const char* worst_name = "";
    for (const auto& [name, ref] : refs) {
      const MembraneSpec spec = preset_membrane(name);
      const double err = rel(mode_frequency(spec, spec.initial_stress, {1, 1}), ref);
      if (err > worst) {
        worst = err;
        worst_name = name;
      }
    }
    report(1, worst <= 0.01,
           fmt("preset f_11 within 1%% of reference (worst %.3f%% at %s)", worst * 100.0,
               worst_name));
  }

  // 2. Photothermal coupling from the heat solver, plus grid refinement.
  double chi_201 = 0.0;
  {
    const auto t0 = std::chrono::steady_clock::now();
    chi_201 = chi_of_beam(t500, BeamSpec{}, ThermalGrid{201}).chi;
    const double chi_401 = chi_of_beam(t500, BeamSpec{}, ThermalGrid{401}).chi;
    const double elapsed = seconds_since(t0);
    const double err = rel(chi_201, 600.0);
    const double drift = rel(chi_401, chi_201);
    report(2, err <= 0.20 && drift < 0.01 && elapsed < 10.0,
           fmt("chi = %.4f K/mW on 201^2 (%.1f%% from 0.6), 401^2 refinement moves it %.3f%%, "
               "%.1f s",
               chi_201 * 1e-3, err * 100.0, drift * 100.0, elapsed));
  }

  // 3. Absorbed-fraction inversion and its round trip.
  {
    const auto t0 = std::chrono::steady_clock::now();
    const double a = absorption_from_chi(t500, BeamSpec{}, 600.0, ThermalGrid{201});
    MembraneSpec probe = t500;
    probe.absorption_fraction = a;
    const double chi_back = chi_of_beam(probe, BeamSpec{}, ThermalGrid{201}).chi;
    const double elapsed = seconds_since(t0);
    const double err = rel(a, 1.5e-3);
    const double loop = rel(chi_back, 600.0);
    report(3, err <= 0.20 && loop <= 1e-10 && elapsed < 10.0,
           fmt("absorption_from_chi(0.6 K/mW) = %.4e (%.1f%% from 1.5e-3), round trip %.1e, "
               "%.1f s",
               a, err * 100.0, loop, elapsed));
  }

  // 4. Zero-power tuning slope against the measured value.
  {
    const double slope = frequency_slope_at_zero_power(t500, {chi_201});
    const double per_mw = slope * 1e-3;
    const double err = rel(per_mw, -363.0);
    report(4, err <= 0.15,
           fmt("zero-power slope %.1f Hz/mW, %.1f%% from -363 Hz/mW", per_mw, err * 100.0));
  }

  // 5. Tuning depth at 160 mW.
  {
    const ThermalCoupling coupling{600.0};
    const double f0 = mode_frequency(t500, t500.initial_stress, {1, 1});
    const double f1 = mode_frequency(t500, stress_at_power(t500, coupling, 0.16).stress, {1, 1});
    const double ratio = f1 / f0;
    report(5, ratio >= 0.45 && ratio <= 0.65,
           fmt("f(160 mW)/f(0) = %.4f, inside [0.45, 0.65]", ratio));
  }

  // 6. Ring-down estimator ensemble at the reference operating point.
  {
    const auto t0 = std::chrono::steady_clock::now();
    const double f = 260e3, q = 1e6;
    const double tau = q / (M_PI * f);
    double bias_sum = 0.0, worst = 0.0;
    int ok_count = 0;
    const int seeds = 100;
    for (int seed = 0; seed < seeds; ++seed) {
      const RingdownTrace trace =
          synthesize_ringdown(f, q, 0.5e-9, 1e-14, 1.04e6, 5.0 * tau, std::uint64_t(seed));
      const RingdownResult res = extract_q(trace);
      const double err = res.quality_factor / q - 1.0;
      bias_sum += err;
      worst = std::max(worst, std::abs(err));
      if (std::abs(err) <= 0.01) ++ok_count;
    }
    const double bias = bias_sum / seeds;
    const double elapsed = seconds_since(t0);
    report(6, ok_count == seeds && std::abs(bias) < 1e-3 && elapsed < 60.0,
           fmt("Q recovered within 1%% on %d/%d seeds (worst %.3f%%), mean bias %.4f%%, %.1f s",
               ok_count, seeds, worst * 100.0, bias * 100.0, elapsed));
  }

  // 7. Dissipation spectrum: baseline floor, peak height, beam invariance,
  //    and the shipped three-mode demonstration.
  {
    bool ok = true;
    std::string note;

    FrameModel bare;
    bare.baseline_q = 1e6;
    if (q_inverse_spectrum(bare, 123e3) != 1e-6) {
      ok = false;
      note += "baseline floor broken; ";
    }

    FrameModel two;
    two.baseline_q = 1e6;
    two.modes.push_back({200e3, 300.0, 60.0, 0.0});
    two.modes.push_back({400e3, 500.0, 90.0, 0.0});
    double height_err = 0.0;
    for (const FrameMode& mode : two.modes) {
      const double predicted =
          1e-6 + 4.0 * mode.coupling * mode.coupling / (mode.linewidth * mode.rest_frequency);
      height_err = std::max(height_err, rel(q_inverse_spectrum(two, mode.rest_frequency),
                                            predicted));
    }
    if (height_err > 0.01) {
      ok = false;
      note += "peak height off; ";
    }

    const FrameModel demo =
        frame_from_json(load_json_file(std::string(MEMTUNE_DATA_DIR) + "/demo_frame.json"));

    // Two beam geometries, matched in absorbed-heat terms: the (f, Q^-1)
    // relationship must not depend on where the laser sits.
    const ThermalGrid grid{101};
    const double chi_a = chi_of_beam(t500, BeamSpec{}, grid).chi;
    const double chi_b = chi_of_beam(t500, BeamSpec{250e-6, 50e-6, -30e-6}, grid).chi;
    std::vector<double> powers_a, powers_b;
    for (int k = 0; k <= 400; ++k) {
      const double u = 90.0 * k / 400.0;  // average temperature rise in K
      powers_a.push_back(u / chi_a);
      powers_b.push_back(u / chi_b);
    }
    const auto curve_a = q_spectrum_over_tuning(t500, {chi_a}, demo, powers_a);
    const auto curve_b = q_spectrum_over_tuning(t500, {chi_b}, demo, powers_b);
    std::vector<double> fb, qb;
    for (auto it = curve_b.rbegin(); it != curve_b.rend(); ++it) {
      fb.push_back(it->frequency);  // ascending in f
      qb.push_back(it->q_inverse);
    }
    double invariance = 0.0;
    for (const TuningPoint& p : curve_a)
      if (p.frequency >= fb.front() && p.frequency <= fb.back())
        invariance = std::max(invariance,
                              rel(interp(fb, qb, p.frequency), p.q_inverse));
    if (invariance > 1e-10) {
      ok = false;
      note += "beam invariance broken; ";
    }

    std::vector<double> demo_powers;
    for (int k = 0; k < 2001; ++k) demo_powers.push_back(0.16 * k / 2000.0);
    const auto demo_curve = q_spectrum_over_tuning(t500, {600.0}, demo, demo_powers);
    double q_min = demo_curve.front().q, q_max = demo_curve.front().q;
    for (const TuningPoint& p : demo_curve) {
      q_min = std::min(q_min, p.q);
      q_max = std::max(q_max, p.q);
    }
    if (!(q_max / q_min >= 100.0)) {
      ok = false;
      note += "demo contrast below 100; ";
    }
    report(7, ok,
           note.empty()
               ? fmt("baseline exact, peak heights within %.2e, beam invariance %.1e, demo "
                     "max(Q)/min(Q) = %.0f",
                     height_err, invariance, q_max / q_min)
               : note);
  }

  // 8. Thermal-parameter pipeline: exact recovery and noise robustness.
  {
    const ThermalCoupling coupling{600.0};
    const FitCoefficients coeffs = fit_coefficients_for(t500, coupling);
    PowerScanData scan;
    for (int k = 0; k < 161; ++k) {
      const double p = 0.16 * k / 160.0;
      scan.rows.push_back({p, fit_form_frequency(coeffs, p), 0.0});
    }
    const double f0 = mode_frequency(t500, t500.initial_stress, {1, 1});
    const double f1 =
        mode_frequency(t500, stress_from_global_heating(t500, 16.0).stress, {1, 1});
    const ThermalParameters params = extract_thermal_parameters(t500, 16.0, f1 - f0, scan);
    const double e0 = rel(params.alpha0, 1.6e-6);
    const double e1 = rel(params.alpha1, 1.3e-8);
    const double ec = rel(params.chi, 600.0);
    const bool exact_ok = e0 <= 1e-8 && e1 <= 1e-8 && ec <= 1e-8;

    std::mt19937_64 rng(2468);
    std::uniform_real_distribution<double> u(-200.0, 200.0);
    PowerScanData noisy = scan;
    for (PowerScanPoint& row : noisy.rows) row.frequency += u(rng);
    const ThermalParameters noisy_params =
        extract_thermal_parameters(t500, 16.0, f1 - f0, noisy);
    const bool noise_ok = noisy_params.fit.within_1khz;
    report(8, exact_ok && noise_ok,
           fmt("recovered (alpha0, alpha1, chi) with rel errors (%.1e, %.1e, %.1e); +-200 Hz "
               "noise leaves max residual %.0f Hz",
               e0, e1, ec, noisy_params.fit.max_abs_residual));
  }

  // 9. Anticrossing identities over random mode pairs.
  {
    std::mt19937_64 rng(1357);
    std::uniform_real_distribution<double> uf(1e5, 5e5), ug(10.0, 5e3);
    double worst = 0.0;
    bool ok = true;
    for (int k = 0; k < 10000; ++k) {
      const double f1 = uf(rng), f2 = uf(rng), g = ug(rng);
      const AnticrossingBranches br = anticrossing_branches(f1, f2, g);
      const double trace_err = std::abs((br.f_plus + br.f_minus) - (f1 + f2)) / (f1 + f2);
      const double sep = br.f_plus - br.f_minus;
      const double sep_err = rel(sep, std::hypot(f1 - f2, 2.0 * g));
      worst = std::max(worst, std::max(trace_err, sep_err));
      if (sep < 2.0 * g * (1.0 - 1e-12)) ok = false;
      if (br.f_plus < std::max(f1, f2) - 1e-9 || br.f_minus > std::min(f1, f2) + 1e-9) ok = false;
    }
    const AnticrossingBranches deg = anticrossing_branches(295e3, 295e3, 5e3);
    if (std::abs((deg.f_plus - deg.f_minus) - 1e4) > 1e-9) ok = false;
    report(9, ok && worst < 1e-12,
           fmt("trace and splitting identities hold to %.1e over 10^4 draws; degenerate "
               "splitting = 2g",
               worst));
  }

  // 10. CLI determinism: the same seeded command twice gives identical bytes.
  {
    const fs::path base = fs::temp_directory_path() / "memtune-acceptance";
    fs::remove_all(base);
    const fs::path a = base / "a", b = base / "b";
    bool ok = true;
    std::string note;
    for (const fs::path& dir : {a, b}) {
      const std::string cmd = std::string(MEMTUNE_CLI_PATH) +
                              " synth scan --preset t1_500 --chi 0.6K/mW --noise-hz 200Hz"
                              " --seed 11 --quiet --out " +
                              dir.string() + " >/dev/null 2>&1";
      if (std::system(cmd.c_str()) != 0) {
        ok = false;
        note = "synth scan failed";
      }
    }
    if (ok && slurp(a / "scan.csv") != slurp(b / "scan.csv")) {
      ok = false;
      note = "scan.csv differs between reruns";
    }
    if (ok && slurp(a / "scan_truth.json") != slurp(b / "scan_truth.json")) {
      ok = false;
      note = "scan_truth.json differs between reruns";
    }
    report(10, ok, ok ? "seeded CLI reruns are byte-identical" : note);
  }

  if (failures) std::printf("%d criterion(s) failed\n", failures);
  return failures ? 1 : 0;
}
