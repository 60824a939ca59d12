// memtune: command-line front end for the membrane-tuning toolkit.
//
// Subcommands: modes, sweep, thermal, qspec, gaps, fit, synth.
// Exit codes: 0 success, 2 config error, 3 numerical failure, 4 I/O error.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include <memtune/memtune.hpp>

namespace {

using memtune::json;
using memtune::RunConfig;

struct GlobalArgs {
  std::string config_path;
  std::string preset;
  std::string spec_file;
  std::string frame_file;
  std::string out_dir;
  std::string format;
  std::string beam_diameter;  // quantity strings, parsed late
  std::string beam_center;
  std::string chi;
  std::string power_max;
  int grid_n = 0;
  int power_samples = -1;
  std::uint64_t seed = 0;
  bool quiet = false;
  bool error_json = false;

  // option handles, to distinguish "passed" from "default"
  CLI::Option* o_preset = nullptr;
  CLI::Option* o_spec = nullptr;
  CLI::Option* o_frame = nullptr;
  CLI::Option* o_out = nullptr;
  CLI::Option* o_format = nullptr;
  CLI::Option* o_diam = nullptr;
  CLI::Option* o_center = nullptr;
  CLI::Option* o_grid = nullptr;
  CLI::Option* o_pmax = nullptr;
  CLI::Option* o_psamples = nullptr;
  CLI::Option* o_seed = nullptr;
};

std::pair<double, double> parse_pair(const std::string& text, const char* what) {
  const std::size_t comma = text.find(',');
  if (comma == std::string::npos)
    throw memtune::spec_error(std::string(what) + ": expected 'x,y', got '" + text + "'");
  return {memtune::parse_quantity(text.substr(0, comma)),
          memtune::parse_quantity(text.substr(comma + 1))};
}

RunConfig resolve_config(const GlobalArgs& g) {
  RunConfig cfg;
  if (!g.config_path.empty()) cfg = memtune::runconfig_from_json(memtune::load_json_file(g.config_path));
  if (g.o_preset->count() && g.o_spec->count())
    throw memtune::spec_error("pass either --preset or --spec, not both");
  if (g.o_preset->count()) {
    cfg.preset = g.preset;
    cfg.spec_file.clear();
  }
  if (g.o_spec->count()) {
    cfg.spec_file = g.spec_file;
    cfg.preset.clear();
  }
  if (g.o_frame->count()) cfg.frame_file = g.frame_file;
  if (g.o_out->count()) cfg.out_dir = g.out_dir;
  if (g.o_format->count()) cfg.format = g.format;
  if (g.o_diam->count()) cfg.beam.diameter_e2 = memtune::parse_quantity(g.beam_diameter);
  if (g.o_center->count()) {
    const auto [x, y] = parse_pair(g.beam_center, "--beam-center");
    cfg.beam.center_x = x;
    cfg.beam.center_y = y;
  }
  if (g.o_grid->count()) cfg.grid_n = g.grid_n;
  if (g.o_pmax->count()) cfg.power_max = memtune::parse_quantity(g.power_max);
  if (g.o_psamples->count()) cfg.power_samples = g.power_samples;
  if (g.o_seed->count()) cfg.seed = g.seed;
  return cfg;
}

memtune::MembraneSpec the_membrane(const RunConfig& cfg) {
  if (!cfg.preset.empty() && !cfg.spec_file.empty())
    throw memtune::spec_error("config names both a preset and a spec file; choose one");
  if (!cfg.preset.empty()) return memtune::preset_membrane(cfg.preset);
  if (!cfg.spec_file.empty())
    return memtune::membrane_from_json(memtune::load_json_file(cfg.spec_file));
  throw memtune::spec_error("no membrane configured: pass --preset NAME or --spec FILE");
}

memtune::FrameModel the_frame(const RunConfig& cfg) {
  if (cfg.frame_file.empty())
    throw memtune::spec_error("no frame model configured: pass --frame FILE");
  return memtune::frame_from_json(memtune::load_json_file(cfg.frame_file));
}

memtune::ThermalCoupling the_coupling(const GlobalArgs& g, const RunConfig& cfg,
                                      const memtune::MembraneSpec& spec) {
  if (!g.chi.empty()) return {memtune::parse_quantity(g.chi)};
  return memtune::chi_of_beam(spec, cfg.beam, {cfg.grid_n});
}

std::vector<double> the_powers(const RunConfig& cfg) {
  std::vector<double> powers = cfg.power_list;
  if (powers.empty()) {
    if (cfg.power_samples < 0) throw memtune::spec_error("power sample count must be >= 0");
    if (cfg.power_samples == 1) {
      powers.push_back(0.0);
    } else {
      for (int k = 0; k < cfg.power_samples; ++k)
        powers.push_back(cfg.power_max * k / (cfg.power_samples - 1));
    }
  }
  for (double p : powers)
    if (!(p >= 0.0)) throw memtune::spec_error("powers must be non-negative");
  return powers;
}

void emit_file(const GlobalArgs& g, const RunConfig& cfg, const std::string& name,
               const std::string& text) {
  std::filesystem::create_directories(cfg.out_dir);
  const std::string path = cfg.out_dir + "/" + name;
  memtune::save_text_file(path, text);
  if (!g.quiet) std::cout << "wrote " << path << "\n";
}

void emit_json_file(const GlobalArgs& g, const RunConfig& cfg, const std::string& name,
                    const json& j) {
  emit_file(g, cfg, name, j.dump(2) + "\n");
}

std::vector<std::pair<memtune::ModeIndex, double>> lowest_modes(
    const memtune::MembraneSpec& spec, double stress, int count) {
  if (count < 1 || count > 10000)
    throw memtune::spec_error("mode count must lie in [1, 10000]");
  const int bound = int(std::ceil(std::sqrt(5.0 * count))) + 2;
  std::vector<memtune::ModeIndex> all;
  for (int m = 1; m <= bound; ++m)
    for (int n = 1; n <= bound; ++n) all.push_back({m, n});
  std::sort(all.begin(), all.end(), [](memtune::ModeIndex a, memtune::ModeIndex b) {
    if (a.index_norm() != b.index_norm()) return a.index_norm() < b.index_norm();
    return a.m != b.m ? a.m < b.m : a.n < b.n;
  });
  all.resize(std::size_t(count));
  std::vector<std::pair<memtune::ModeIndex, double>> out;
  for (memtune::ModeIndex idx : all)
    out.push_back({idx, memtune::mode_frequency(spec, stress, idx)});
  return out;
}

std::vector<memtune::ModeIndex> parse_mode_list(const std::string& text) {
  std::vector<memtune::ModeIndex> modes;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    const std::size_t x = tok.find('x');
    if (x == std::string::npos)
      throw memtune::spec_error("--modes: expected 'mxn' tokens, got '" + tok + "'");
    try {
      modes.push_back({std::stoi(tok.substr(0, x)), std::stoi(tok.substr(x + 1))});
    } catch (const std::exception&) {
      throw memtune::spec_error("--modes: bad mode token '" + tok + "'");
    }
  }
  if (modes.empty()) throw memtune::spec_error("--modes: empty list");
  return modes;
}

std::vector<memtune::ModeCouplingPair> parse_pair_list(const std::string& text) {
  std::vector<memtune::ModeCouplingPair> pairs;
  if (text.empty()) return pairs;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ';')) {
    const std::size_t tilde = tok.find('~');
    const std::size_t colon = tok.find(':', tilde == std::string::npos ? 0 : tilde);
    if (tilde == std::string::npos || colon == std::string::npos)
      throw memtune::spec_error("--pairs: expected 'mxn~pxq:COUPLING' tokens, got '" + tok + "'");
    const std::vector<memtune::ModeIndex> a = parse_mode_list(tok.substr(0, tilde));
    const std::vector<memtune::ModeIndex> b =
        parse_mode_list(tok.substr(tilde + 1, colon - tilde - 1));
    if (a.size() != 1 || b.size() != 1)
      throw memtune::spec_error("--pairs: bad pair token '" + tok + "'");
    pairs.push_back({a[0], b[0], memtune::parse_quantity(tok.substr(colon + 1))});
  }
  return pairs;
}

// ---------------------------------------------------------------------------

void run_modes(const GlobalArgs& g, int count) {
  const RunConfig cfg = resolve_config(g);
  const memtune::MembraneSpec spec = the_membrane(cfg);
  const auto rows = lowest_modes(spec, spec.initial_stress, count);
  if (cfg.format == "json") {
    json out{{"schema", "modes-v1"}};
    json arr = json::array();
    for (const auto& [idx, f] : rows)
      arr.push_back(json{{"m", idx.m}, {"n", idx.n}, {"f_Hz", f}});
    out["rows"] = arr;
    emit_json_file(g, cfg, "modes.json", out);
  } else {
    std::string csv = "m,n,f_Hz\n";
    for (const auto& [idx, f] : rows)
      csv += std::to_string(idx.m) + "," + std::to_string(idx.n) + "," + memtune::format_sig(f) +
             "\n";
    emit_file(g, cfg, "modes.csv", csv);
  }
}

void run_sweep(const GlobalArgs& g, const std::string& modes_arg, const std::string& pairs_arg) {
  const RunConfig cfg = resolve_config(g);
  const memtune::MembraneSpec spec = the_membrane(cfg);
  const memtune::ThermalCoupling coupling = the_coupling(g, cfg, spec);
  std::vector<memtune::ModeIndex> modes;
  if (modes_arg.empty()) {
    for (const auto& [idx, f] : lowest_modes(spec, spec.initial_stress, 13)) modes.push_back(idx);
  } else {
    modes = parse_mode_list(modes_arg);
  }
  const std::vector<memtune::ModeCouplingPair> pairs = parse_pair_list(pairs_arg);
  const auto table = memtune::spectrum_vs_power(spec, coupling, modes, pairs, the_powers(cfg));
  if (cfg.format == "json") {
    json out{{"schema", "sweep-v1"}, {"chi_K_per_W", coupling.chi}};
    json arr = json::array();
    for (const auto& sample : table)
      for (const auto& line : sample.lines)
        arr.push_back(json{{"power_W", sample.power},
                           {"mode", line.label},
                           {"frequency_Hz", line.frequency}});
    out["rows"] = arr;
    emit_json_file(g, cfg, "sweep.json", out);
  } else {
    emit_file(g, cfg, "sweep.csv", memtune::sweep_csv(table));
  }
}

void run_thermal(const GlobalArgs& g, const std::string& power_arg, double absorption_arg,
                 const std::string& invert_chi_arg, const std::string& diameter_scan_arg) {
  const RunConfig cfg = resolve_config(g);
  memtune::MembraneSpec spec = the_membrane(cfg);
  if (absorption_arg >= 0.0) spec.absorption_fraction = absorption_arg;
  const memtune::ThermalGrid grid{cfg.grid_n};
  const double power = power_arg.empty() ? 0.0 : memtune::parse_quantity(power_arg);

  const memtune::TemperatureField unit_field = memtune::solve_heating(spec, cfg.beam, 1.0, grid);
  const double chi = unit_field.average();
  const memtune::ThermalCoupling coupling{chi};

  json out{{"schema", "thermal-v1"},
           {"grid_n", grid.n},
           {"beam_diameter_e2_m", cfg.beam.diameter_e2},
           {"beam_center_x_m", cfg.beam.center_x},
           {"beam_center_y_m", cfg.beam.center_y},
           {"beam_containment", cfg.beam.containment(spec.side_length)},
           {"absorption_fraction", spec.absorption_fraction},
           {"chi_K_per_W", chi},
           {"chi_K_per_mW", chi * 1e-3},
           {"critical_power_W", memtune::critical_power(spec, coupling)},
           {"f11_rest_Hz", memtune::mode_frequency(spec, spec.initial_stress, {1, 1})},
           {"slope_zero_power_Hz_per_W", memtune::frequency_slope_at_zero_power(spec, coupling)}};
  if (power > 0.0) {
    const memtune::StressState st = memtune::stress_at_power(spec, coupling, power);
    out["power_W"] = power;
    out["avg_delta_T_K"] = st.delta_T;
    out["max_delta_T_K"] = unit_field.max() * power;
    out["stress_Pa"] = st.stress;
    out["f11_Hz"] = memtune::mode_frequency(spec, st.stress, {1, 1});
  }
  if (!invert_chi_arg.empty()) {
    const double chi_target = memtune::parse_quantity(invert_chi_arg);
    out["absorption_from_chi"] = memtune::absorption_from_chi(spec, cfg.beam, chi_target, grid);
    out["absorption_from_chi_target_K_per_W"] = chi_target;
  }
  if (!diameter_scan_arg.empty()) {
    json scan = json::array();
    std::stringstream ss(diameter_scan_arg);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      memtune::BeamSpec beam = cfg.beam;
      beam.diameter_e2 = memtune::parse_quantity(tok);
      scan.push_back(json{{"diameter_e2_m", beam.diameter_e2},
                          {"chi_K_per_W", memtune::chi_of_beam(spec, beam, grid).chi}});
    }
    out["diameter_scan"] = scan;
  }

  if (cfg.format == "json") {
    emit_json_file(g, cfg, "thermal.json", out);
  } else {
    std::string csv = "key,value\n";
    for (const auto& item : out.items()) {
      if (item.value().is_number())
        csv += item.key() + "," + memtune::format_sig(item.value().get<double>()) + "\n";
      else if (item.value().is_string())
        csv += item.key() + "," + item.value().get<std::string>() + "\n";
    }
    if (out.contains("diameter_scan"))
      for (const auto& row : out["diameter_scan"])
        csv += "chi_at_diameter_" + memtune::format_sig(row["diameter_e2_m"].get<double>()) + "," +
               memtune::format_sig(row["chi_K_per_W"].get<double>()) + "\n";
    emit_file(g, cfg, "thermal.csv", csv);
  }
  if (!g.quiet) std::cout << "chi = " << chi * 1e-3 << " K/mW\n";
}

void run_qspec(const GlobalArgs& g, const std::string& holder_dt_arg, double min_q) {
  const RunConfig cfg = resolve_config(g);
  const memtune::MembraneSpec spec = the_membrane(cfg);
  memtune::FrameModel frame = the_frame(cfg);
  if (!holder_dt_arg.empty()) {
    frame.holder_delta_T = memtune::parse_quantity(holder_dt_arg);
    frame.validate();
  }
  const memtune::ThermalCoupling coupling = the_coupling(g, cfg, spec);
  const auto points = memtune::q_spectrum_over_tuning(spec, coupling, frame, the_powers(cfg));

  if (cfg.format == "json") {
    json out{{"schema", "qspec-v1"}, {"chi_K_per_W", coupling.chi}};
    json arr = json::array();
    for (const auto& p : points)
      arr.push_back(json{{"power_W", p.power},
                         {"frequency_Hz", p.frequency},
                         {"q_inverse", p.q_inverse},
                         {"q", p.q}});
    out["rows"] = arr;
    emit_json_file(g, cfg, "qspec.json", out);
  } else {
    emit_file(g, cfg, "qspec.csv", memtune::tuning_csv(points));
  }

  if (min_q > 0.0 && !points.empty()) {
    double f_lo = points.front().frequency, f_hi = points.front().frequency;
    for (const auto& p : points) {
      f_lo = std::min(f_lo, p.frequency);
      f_hi = std::max(f_hi, p.frequency);
    }
    const auto gaps = memtune::find_q_gaps(frame, f_lo, f_hi, min_q);
    if (cfg.format == "json") {
      json out{{"schema", "gaps-v1"}, {"min_q", min_q}};
      json arr = json::array();
      for (const auto& gap : gaps) arr.push_back(json{{"lo_Hz", gap.lo}, {"hi_Hz", gap.hi}});
      out["rows"] = arr;
      emit_json_file(g, cfg, "qspec_gaps.json", out);
    } else {
      emit_file(g, cfg, "qspec_gaps.csv", memtune::gaps_csv(gaps));
    }
  }
}

void run_gaps(const GlobalArgs& g, const std::string& band_arg, double min_q,
              const std::string& holder_dt_arg) {
  const RunConfig cfg = resolve_config(g);
  memtune::FrameModel frame = the_frame(cfg);
  if (!holder_dt_arg.empty()) {
    frame.holder_delta_T = memtune::parse_quantity(holder_dt_arg);
    frame.validate();
  }
  const auto [lo, hi] = parse_pair(band_arg, "--band");
  const auto gaps = memtune::find_q_gaps(frame, lo, hi, min_q);
  if (cfg.format == "json") {
    json out{{"schema", "gaps-v1"}, {"min_q", min_q}, {"band_lo_Hz", lo}, {"band_hi_Hz", hi}};
    json arr = json::array();
    for (const auto& gap : gaps) arr.push_back(json{{"lo_Hz", gap.lo}, {"hi_Hz", gap.hi}});
    out["rows"] = arr;
    emit_json_file(g, cfg, "gaps.json", out);
  } else {
    emit_file(g, cfg, "gaps.csv", memtune::gaps_csv(gaps));
  }
}

void report_fit(const GlobalArgs& g, const RunConfig& cfg, const std::string& name,
                const json& j) {
  emit_json_file(g, cfg, name, j);
  if (!g.quiet) std::cout << j.dump(2) << "\n";
}

void run_fit_f_vs_p(const GlobalArgs& g, const std::string& input) {
  const RunConfig cfg = resolve_config(g);
  const memtune::PowerScanData data = memtune::power_scan_from_csv(input);
  const memtune::FrequencyFitReport rep = memtune::fit_f_vs_p(data);
  report_fit(g, cfg, "fit_f_vs_p.json", memtune::frequency_fit_report_json(rep));
}

void run_fit_ringdown(const GlobalArgs& g, const std::string& input, std::string meta) {
  const RunConfig cfg = resolve_config(g);
  if (meta.empty()) {
    const std::size_t dot = input.rfind(".csv");
    meta = (dot == std::string::npos ? input : input.substr(0, dot)) + ".meta.json";
  }
  const memtune::RingdownTrace trace = memtune::trace_from_csv(input, meta);
  const memtune::RingdownResult res = memtune::extract_q(trace);
  report_fit(g, cfg, "fit_ringdown.json", memtune::ringdown_result_json(res));
}

void run_fit_q_spectrum(const GlobalArgs& g, const std::string& input) {
  const RunConfig cfg = resolve_config(g);
  const auto points = memtune::q_spectrum_points_from_csv(input);
  const memtune::QSpectrumFit fit = memtune::fit_q_spectrum(points);
  report_fit(g, cfg, "fit_q_spectrum.json", memtune::q_spectrum_fit_json(fit));
}

void run_fit_thermal_params(const GlobalArgs& g, const std::string& input,
                            const std::string& holder_dt_arg, const std::string& holder_df_arg) {
  const RunConfig cfg = resolve_config(g);
  const memtune::MembraneSpec spec = the_membrane(cfg);
  const double d_t = memtune::parse_quantity(holder_dt_arg);
  const double d_f = memtune::parse_quantity(holder_df_arg);
  const memtune::PowerScanData data = memtune::power_scan_from_csv(input);
  const memtune::ThermalParameters params =
      memtune::extract_thermal_parameters(spec, d_t, d_f, data);
  report_fit(g, cfg, "fit_thermal_params.json", memtune::thermal_parameters_json(params));
}

void run_synth_ringdown(const GlobalArgs& g, const std::string& freq, double q,
                        const std::string& amp, const std::string& noise, const std::string& rate,
                        const std::string& duration) {
  const RunConfig cfg = resolve_config(g);
  const memtune::RingdownTrace trace = memtune::synthesize_ringdown(
      memtune::parse_quantity(freq), q, memtune::parse_quantity(amp),
      memtune::parse_quantity(noise), memtune::parse_quantity(rate),
      memtune::parse_quantity(duration), cfg.seed);
  emit_file(g, cfg, "ringdown.csv", memtune::trace_csv(trace));
  emit_json_file(g, cfg, "ringdown.meta.json", memtune::trace_meta_json(trace));
}

void run_synth_scan(const GlobalArgs& g, const std::string& noise_hz_arg) {
  const RunConfig cfg = resolve_config(g);
  const memtune::MembraneSpec spec = the_membrane(cfg);
  const memtune::ThermalCoupling coupling = the_coupling(g, cfg, spec);
  const double sigma_f = noise_hz_arg.empty() ? 0.0 : memtune::parse_quantity(noise_hz_arg);

  memtune::detail::gaussian_stream rng(cfg.seed);
  memtune::PowerScanData data;
  for (double p : the_powers(cfg)) {
    const memtune::StressState st = memtune::stress_at_power(spec, coupling, p);
    double f = memtune::mode_frequency(spec, st.stress, {1, 1});
    if (sigma_f > 0.0) f += sigma_f * rng.normal();
    data.rows.push_back({p, f, sigma_f});
  }
  emit_file(g, cfg, "scan.csv", memtune::power_scan_csv(data));

  const memtune::FitCoefficients truth = memtune::fit_coefficients_for(spec, coupling);
  emit_json_file(g, cfg, "scan_truth.json",
                 json{{"schema", "scantruth-v1"},
                      {"alpha0_per_K", spec.expansion_alpha0},
                      {"alpha1_per_K2", spec.expansion_alpha1},
                      {"chi_K_per_W", coupling.chi},
                      {"a_Hz2", truth.a},
                      {"b_Hz2_per_W", truth.b},
                      {"c_Hz2_per_W2", truth.c},
                      {"sigma_f_Hz", sigma_f},
                      {"seed", cfg.seed}});
}

int fail(const GlobalArgs& g, const char* kind, const std::string& message, int code) {
  std::cerr << "error: " << message << "\n";
  if (g.error_json)
    std::cout << json{{"error", json{{"type", kind}, {"message", message}, {"exit_code", code}}}}
                     .dump()
              << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  GlobalArgs g;
  CLI::App app{"memtune: simulate and fit laser-tuned tensioned-membrane oscillators"};
  app.require_subcommand(1);

  app.add_option("--config", g.config_path, "runconfig-v1 JSON file");
  g.o_preset = app.add_option("--preset", g.preset, "membrane preset name");
  g.o_spec = app.add_option("--spec", g.spec_file, "memspec-v1 JSON file");
  g.o_frame = app.add_option("--frame", g.frame_file, "framemodel-v1 JSON file");
  g.o_out = app.add_option("--out", g.out_dir, "output directory (default .)");
  g.o_seed = app.add_option("--seed", g.seed, "random seed for synthesis");
  g.o_format = app.add_option("--format", g.format, "output format")
                   ->check(CLI::IsMember({"csv", "json"}));
  g.o_grid = app.add_option("--grid", g.grid_n, "thermal grid nodes per side");
  g.o_diam = app.add_option("--beam-diameter", g.beam_diameter, "1/e^2 beam diameter, e.g. 350um");
  g.o_center = app.add_option("--beam-center", g.beam_center,
                              "beam offset from membrane center, e.g. 50um,0");
  app.add_option("--chi", g.chi, "photothermal coupling override, e.g. 0.6K/mW");
  g.o_pmax = app.add_option("--power-max", g.power_max, "sweep end power, e.g. 160mW");
  g.o_psamples = app.add_option("--power-samples", g.power_samples, "sweep sample count");
  app.add_flag("--quiet", g.quiet, "suppress stdout notes");
  app.add_flag("--error-json", g.error_json, "emit machine-readable errors on stdout");

  int modes_count = 13;
  CLI::App* modes = app.add_subcommand("modes", "lowest mode frequencies at P = 0");
  modes->fallthrough();
  modes->add_option("--count", modes_count, "number of modes (default 13)");
  modes->callback([&] { run_modes(g, modes_count); });

  std::string sweep_modes, sweep_pairs;
  CLI::App* sweep = app.add_subcommand("sweep", "mode spectrum versus laser power");
  sweep->fallthrough();
  sweep->add_option("--modes", sweep_modes, "mode list, e.g. 1x1,2x1,1x2 (default lowest 13)");
  sweep->add_option("--pairs", sweep_pairs,
                    "anticrossing pairs, e.g. '2x1~1x2:5kHz;3x1~1x3:2kHz'");
  sweep->callback([&] { run_sweep(g, sweep_modes, sweep_pairs); });

  std::string th_power, th_invert, th_dscan;
  double th_absorption = -1.0;
  CLI::App* thermal = app.add_subcommand("thermal", "steady-state heating and chi");
  thermal->fallthrough();
  thermal->add_option("--power", th_power, "incident power for the report, e.g. 160mW");
  thermal->add_option("--absorption", th_absorption, "override absorbed fraction");
  thermal->add_option("--invert-chi", th_invert, "report absorption for a target chi, e.g. 0.6K/mW");
  thermal->add_option("--diameter-scan", th_dscan, "comma list of beam diameters to scan");
  thermal->callback([&] { run_thermal(g, th_power, th_absorption, th_invert, th_dscan); });

  std::string qs_holder;
  double qs_min_q = 0.0;
  CLI::App* qspec = app.add_subcommand("qspec", "Q^-1 spectrum over the laser tuning range");
  qspec->fallthrough();
  qspec->add_option("--holder-dt", qs_holder, "holder heating, e.g. 16K");
  qspec->add_option("--min-q", qs_min_q, "also report gaps with Q >= this value");
  qspec->callback([&] { run_qspec(g, qs_holder, qs_min_q); });

  std::string gp_band, gp_holder;
  double gp_min_q = 0.0;
  CLI::App* gaps = app.add_subcommand("gaps", "frequency windows with Q above a floor");
  gaps->fallthrough();
  gaps->add_option("--band", gp_band, "frequency band, e.g. 200kHz,400kHz")->required();
  gaps->add_option("--min-q", gp_min_q, "minimum acceptable Q")->required();
  gaps->add_option("--holder-dt", gp_holder, "holder heating, e.g. 16K");
  gaps->callback([&] { run_gaps(g, gp_band, gp_min_q, gp_holder); });

  CLI::App* fit = app.add_subcommand("fit", "fit measured data");
  fit->require_subcommand(1);
  fit->fallthrough();

  std::string fvp_input;
  CLI::App* fvp = fit->add_subcommand("f-vs-p", "fit f(P) = sqrt(a + bP + cP^2)");
  fvp->fallthrough();
  fvp->add_option("--input", fvp_input, "power scan CSV")->required();
  fvp->callback([&] { run_fit_f_vs_p(g, fvp_input); });

  std::string rd_input, rd_meta;
  CLI::App* frd = fit->add_subcommand("ringdown", "extract tau and Q from a ring-down trace");
  frd->fallthrough();
  frd->add_option("--input", rd_input, "trace CSV")->required();
  frd->add_option("--meta", rd_meta, "metadata sidecar (default: INPUT.meta.json)");
  frd->callback([&] { run_fit_ringdown(g, rd_input, rd_meta); });

  std::string qsf_input;
  CLI::App* fqs = fit->add_subcommand("q-spectrum", "decompose Q^-1(f) into baseline and peaks");
  fqs->fallthrough();
  fqs->add_option("--input", qsf_input, "spectrum CSV (qspec output or frequency_Hz,q_inverse)")
      ->required();
  fqs->callback([&] { run_fit_q_spectrum(g, qsf_input); });

  std::string tp_input, tp_dt, tp_df;
  CLI::App* ftp = fit->add_subcommand("thermal-params", "recover (alpha0, alpha1, chi)");
  ftp->fallthrough();
  ftp->add_option("--input", tp_input, "power scan CSV")->required();
  ftp->add_option("--holder-dt", tp_dt, "holder heating, e.g. 16K")->required();
  ftp->add_option("--holder-df", tp_df, "f11 shift under holder heating, e.g. -1200Hz")
      ->required();
  ftp->callback([&] { run_fit_thermal_params(g, tp_input, tp_dt, tp_df); });

  CLI::App* synth = app.add_subcommand("synth", "generate synthetic measurement data");
  synth->require_subcommand(1);
  synth->fallthrough();

  std::string sr_freq = "260kHz", sr_amp = "0.5nm", sr_noise = "1e-14", sr_rate = "1.04MHz",
              sr_duration = "6s";
  double sr_q = 1e6;
  CLI::App* srd = synth->add_subcommand("ringdown", "synthesize a ring-down trace");
  srd->fallthrough();
  srd->add_option("--freq", sr_freq, "mode frequency (default 260kHz)");
  srd->add_option("--q-factor", sr_q, "quality factor (default 1e6)");
  srd->add_option("--amp", sr_amp, "initial amplitude (default 0.5nm)");
  srd->add_option("--noise", sr_noise, "noise floor in m/sqrt(Hz) (default 1e-14)");
  srd->add_option("--rate", sr_rate, "sample rate (default 1.04MHz)");
  srd->add_option("--duration", sr_duration, "record length (default 6s)");
  srd->callback([&] { run_synth_ringdown(g, sr_freq, sr_q, sr_amp, sr_noise, sr_rate, sr_duration); });

  std::string ss_noise;
  CLI::App* ssc = synth->add_subcommand("scan", "synthesize a frequency-vs-power scan");
  ssc->fallthrough();
  ssc->add_option("--noise-hz", ss_noise, "frequency noise sigma, e.g. 200Hz");
  ssc->callback([&] { run_synth_scan(g, ss_noise); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  } catch (const memtune::spec_error& e) {
    return fail(g, "config", e.what(), 2);
  } catch (const memtune::io_error& e) {
    return fail(g, "io", e.what(), 4);
  } catch (const memtune::buckling_error& e) {
    return fail(g, "numerical", e.what(), 3);
  } catch (const memtune::solver_error& e) {
    return fail(g, "numerical", e.what(), 3);
  } catch (const memtune::fit_error& e) {
    return fail(g, "numerical", e.what(), 3);
  } catch (const memtune::model_violation& e) {
    return fail(g, "numerical", e.what(), 3);
  } catch (const std::exception& e) {
    return fail(g, "internal", e.what(), 3);
  }
  return 0;
}
