#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "memtune/core.hpp"
#include "memtune/dissipation.hpp"
#include "memtune/errors.hpp"
#include "memtune/fits.hpp"
#include "memtune/ringdown.hpp"
#include "memtune/thermal.hpp"

namespace memtune {

using json = nlohmann::ordered_json;

/// 12 significant digits: enough for a lossless double -> text -> double trip
/// at the precision the CSV contract promises.
inline std::string format_sig(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.11e", v);
  return buf;
}

namespace detail {

inline void check_schema(const json& j, const std::string& schema) {
  if (!j.is_object() || !j.contains("schema") || !j["schema"].is_string() ||
      j["schema"].get<std::string>() != schema)
    throw io_error("expected JSON with \"schema\": \"" + schema + "\"");
}

inline void check_keys(const json& j, const std::vector<std::string>& allowed,
                       const std::string& schema) {
  for (const auto& item : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), item.key()) == allowed.end())
      throw io_error(schema + ": unknown key '" + item.key() + "'");
  }
}

inline double get_num(const json& j, const std::string& key, const std::string& schema) {
  if (!j.contains(key)) throw io_error(schema + ": missing key '" + key + "'");
  if (!j[key].is_number()) throw io_error(schema + ": key '" + key + "' must be a number");
  return j[key].get<double>();
}

inline double get_num_or(const json& j, const std::string& key, double fallback,
                         const std::string& schema) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number()) throw io_error(schema + ": key '" + key + "' must be a number");
  return j[key].get<double>();
}

inline std::string get_str_or(const json& j, const std::string& key, const std::string& fallback,
                              const std::string& schema) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_string()) throw io_error(schema + ": key '" + key + "' must be a string");
  return j[key].get<std::string>();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// JSON schemas
// ---------------------------------------------------------------------------

inline json membrane_to_json(const MembraneSpec& spec) {
  return json{{"schema", "memspec-v1"},
              {"side_length_m", spec.side_length},
              {"thickness_m", spec.thickness},
              {"density_kg_m3", spec.density},
              {"youngs_modulus_Pa", spec.youngs_modulus},
              {"initial_stress_Pa", spec.initial_stress},
              {"expansion_alpha0_per_K", spec.expansion_alpha0},
              {"expansion_alpha1_per_K2", spec.expansion_alpha1},
              {"heat_conductivity_W_per_m_K", spec.heat_conductivity},
              {"absorption_fraction", spec.absorption_fraction},
              {"frame_expansion_per_K", spec.frame_expansion}};
}

inline MembraneSpec membrane_from_json(const json& j) {
  const std::string s = "memspec-v1";
  detail::check_schema(j, s);
  detail::check_keys(j,
                     {"schema", "side_length_m", "thickness_m", "density_kg_m3",
                      "youngs_modulus_Pa", "initial_stress_Pa", "expansion_alpha0_per_K",
                      "expansion_alpha1_per_K2", "heat_conductivity_W_per_m_K",
                      "absorption_fraction", "frame_expansion_per_K"},
                     s);
  MembraneSpec spec;
  spec.side_length = detail::get_num(j, "side_length_m", s);
  spec.thickness = detail::get_num(j, "thickness_m", s);
  spec.density = detail::get_num(j, "density_kg_m3", s);
  spec.youngs_modulus = detail::get_num(j, "youngs_modulus_Pa", s);
  spec.initial_stress = detail::get_num(j, "initial_stress_Pa", s);
  spec.expansion_alpha0 = detail::get_num(j, "expansion_alpha0_per_K", s);
  spec.expansion_alpha1 = detail::get_num(j, "expansion_alpha1_per_K2", s);
  spec.heat_conductivity = detail::get_num(j, "heat_conductivity_W_per_m_K", s);
  spec.absorption_fraction = detail::get_num(j, "absorption_fraction", s);
  spec.frame_expansion = detail::get_num(j, "frame_expansion_per_K", s);
  spec.validate();
  return spec;
}

inline json frame_to_json(const FrameModel& frame) {
  json modes = json::array();
  for (const FrameMode& mode : frame.modes)
    modes.push_back(json{{"rest_frequency_Hz", mode.rest_frequency},
                         {"linewidth_Hz", mode.linewidth},
                         {"coupling_Hz", mode.coupling},
                         {"temp_shift_per_K", mode.temp_shift}});
  return json{{"schema", "framemodel-v1"},
              {"baseline_q", frame.baseline_q},
              {"holder_delta_T_K", frame.holder_delta_T},
              {"modes", modes}};
}

inline FrameModel frame_from_json(const json& j) {
  const std::string s = "framemodel-v1";
  detail::check_schema(j, s);
  detail::check_keys(j, {"schema", "baseline_q", "holder_delta_T_K", "modes"}, s);
  FrameModel frame;
  frame.baseline_q = detail::get_num(j, "baseline_q", s);
  frame.holder_delta_T = detail::get_num_or(j, "holder_delta_T_K", 0.0, s);
  if (!j.contains("modes") || !j["modes"].is_array())
    throw io_error(s + ": missing key 'modes' (array)");
  for (const json& m : j["modes"]) {
    detail::check_keys(
        m, {"rest_frequency_Hz", "linewidth_Hz", "coupling_Hz", "temp_shift_per_K"}, s);
    FrameMode mode;
    mode.rest_frequency = detail::get_num(m, "rest_frequency_Hz", s);
    mode.linewidth = detail::get_num(m, "linewidth_Hz", s);
    mode.coupling = detail::get_num(m, "coupling_Hz", s);
    mode.temp_shift = detail::get_num_or(m, "temp_shift_per_K", 0.0, s);
    frame.modes.push_back(mode);
  }
  frame.sort_modes();
  frame.validate();
  return frame;
}

/// Everything a CLI run needs; mirrors the runconfig-v1 schema.
struct RunConfig {
  std::string preset;      ///< preset name, or empty when spec_file is used
  std::string spec_file;   ///< memspec-v1 path
  std::string frame_file;  ///< framemodel-v1 path, optional
  BeamSpec beam;
  int grid_n = 201;
  double power_max = 0.16;  ///< W
  int power_samples = 161;
  std::vector<double> power_list;  ///< W; overrides the range when non-empty
  std::string out_dir = ".";
  std::uint64_t seed = 0;
  std::string format = "csv";  ///< csv | json
};

inline json runconfig_to_json(const RunConfig& cfg) {
  json j{{"schema", "runconfig-v1"}};
  if (!cfg.preset.empty()) j["preset"] = cfg.preset;
  if (!cfg.spec_file.empty()) j["spec_file"] = cfg.spec_file;
  if (!cfg.frame_file.empty()) j["frame_file"] = cfg.frame_file;
  j["beam"] = json{{"diameter_e2_m", cfg.beam.diameter_e2},
                   {"center_x_m", cfg.beam.center_x},
                   {"center_y_m", cfg.beam.center_y}};
  j["grid_n"] = cfg.grid_n;
  j["power_max_W"] = cfg.power_max;
  j["power_samples"] = cfg.power_samples;
  if (!cfg.power_list.empty()) j["power_list_W"] = cfg.power_list;
  j["out_dir"] = cfg.out_dir;
  j["seed"] = cfg.seed;
  j["format"] = cfg.format;
  return j;
}

inline RunConfig runconfig_from_json(const json& j) {
  const std::string s = "runconfig-v1";
  detail::check_schema(j, s);
  detail::check_keys(j,
                     {"schema", "preset", "spec_file", "frame_file", "beam", "grid_n",
                      "power_max_W", "power_samples", "power_list_W", "out_dir", "seed",
                      "format"},
                     s);
  RunConfig cfg;
  cfg.preset = detail::get_str_or(j, "preset", "", s);
  cfg.spec_file = detail::get_str_or(j, "spec_file", "", s);
  cfg.frame_file = detail::get_str_or(j, "frame_file", "", s);
  if (j.contains("beam")) {
    const json& b = j["beam"];
    detail::check_keys(b, {"diameter_e2_m", "center_x_m", "center_y_m"}, s);
    cfg.beam.diameter_e2 = detail::get_num_or(b, "diameter_e2_m", cfg.beam.diameter_e2, s);
    cfg.beam.center_x = detail::get_num_or(b, "center_x_m", 0.0, s);
    cfg.beam.center_y = detail::get_num_or(b, "center_y_m", 0.0, s);
  }
  cfg.grid_n = int(detail::get_num_or(j, "grid_n", cfg.grid_n, s));
  cfg.power_max = detail::get_num_or(j, "power_max_W", cfg.power_max, s);
  cfg.power_samples = int(detail::get_num_or(j, "power_samples", cfg.power_samples, s));
  if (j.contains("power_list_W")) {
    if (!j["power_list_W"].is_array()) throw io_error(s + ": 'power_list_W' must be an array");
    for (const json& p : j["power_list_W"]) {
      if (!p.is_number()) throw io_error(s + ": 'power_list_W' entries must be numbers");
      cfg.power_list.push_back(p.get<double>());
    }
  }
  cfg.out_dir = detail::get_str_or(j, "out_dir", cfg.out_dir, s);
  cfg.seed = std::uint64_t(detail::get_num_or(j, "seed", 0.0, s));
  cfg.format = detail::get_str_or(j, "format", cfg.format, s);
  if (cfg.format != "csv" && cfg.format != "json")
    throw io_error(s + ": 'format' must be \"csv\" or \"json\"");
  return cfg;
}

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

inline json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open '" + path + "' for reading");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw io_error(path + ": " + e.what());
  }
}

inline void save_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw io_error("write failed for '" + path + "'");
}

inline void save_json_file(const std::string& path, const json& j) {
  save_text_file(path, j.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// CSV: generic table with string cells, typed adapters on top
// ---------------------------------------------------------------------------

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  ///< 1-based source line per row
  std::string path;

  std::size_t column(const std::string& name) const {
    for (std::size_t c = 0; c < header.size(); ++c)
      if (header[c] == name) return c;
    throw io_error(path + ": missing column '" + name + "'");
  }

  bool has_column(const std::string& name) const {
    return std::find(header.begin(), header.end(), name) != header.end();
  }

  double num(std::size_t row, std::size_t col) const {
    const std::string& cell = rows[row][col];
    char* end = nullptr;
    const double v = std::strtod(cell.c_str(), &end);
    if (end == cell.c_str() || *end != '\0')
      throw io_error(path + ":" + std::to_string(line_numbers[row]) + ": bad number '" + cell +
                     "' in column '" + header[col] + "'");
    return v;
  }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    const std::size_t a = cell.find_first_not_of(" \t\r");
    if (a == std::string::npos) {
      cells.emplace_back();
      continue;
    }
    const std::size_t b = cell.find_last_not_of(" \t\r");
    cells.push_back(cell.substr(a, b - a + 1));
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

}  // namespace detail

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open '" + path + "' for reading");
  CsvTable table;
  table.path = path;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells = detail::split_csv_line(line);
    if (table.header.empty()) {
      table.header = std::move(cells);
      continue;
    }
    if (cells.size() != table.header.size())
      throw io_error(path + ":" + std::to_string(line_no) + ": expected " +
                     std::to_string(table.header.size()) + " fields, got " +
                     std::to_string(cells.size()));
    table.rows.push_back(std::move(cells));
    table.line_numbers.push_back(line_no);
  }
  if (table.header.empty()) throw io_error(path + ": empty CSV (no header)");
  return table;
}

// ---------------------------------------------------------------------------
// Typed CSV writers (strings; callers decide where they go)
// ---------------------------------------------------------------------------

inline std::string power_scan_csv(const PowerScanData& data) {
  std::string out = data.has_sigma() ? "power_W,frequency_Hz,sigma_Hz\n" : "power_W,frequency_Hz\n";
  for (const PowerScanPoint& row : data.rows) {
    out += format_sig(row.power) + "," + format_sig(row.frequency);
    if (data.has_sigma()) out += "," + format_sig(row.sigma_f);
    out += "\n";
  }
  return out;
}

inline PowerScanData power_scan_from_csv(const std::string& path) {
  const CsvTable t = read_csv(path);
  const std::size_t cp = t.column("power_W");
  const std::size_t cf = t.column("frequency_Hz");
  const bool sig = t.has_column("sigma_Hz");
  PowerScanData data;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    PowerScanPoint row;
    row.power = t.num(r, cp);
    row.frequency = t.num(r, cf);
    if (sig) row.sigma_f = t.num(r, t.column("sigma_Hz"));
    data.rows.push_back(row);
  }
  return data;
}

inline std::string tuning_csv(const std::vector<TuningPoint>& points) {
  std::string out = "power_W,frequency_Hz,q_inverse,q\n";
  for (const TuningPoint& p : points)
    out += format_sig(p.power) + "," + format_sig(p.frequency) + "," + format_sig(p.q_inverse) +
           "," + format_sig(p.q) + "\n";
  return out;
}

inline std::vector<TuningPoint> tuning_from_csv(const std::string& path) {
  const CsvTable t = read_csv(path);
  const std::size_t cp = t.column("power_W");
  const std::size_t cf = t.column("frequency_Hz");
  const std::size_t cq = t.column("q_inverse");
  const std::size_t cQ = t.column("q");
  std::vector<TuningPoint> points;
  for (std::size_t r = 0; r < t.rows.size(); ++r)
    points.push_back({t.num(r, cp), t.num(r, cf), t.num(r, cq), t.num(r, cQ)});
  return points;
}

/// Accepts either the qspec output (power_W, frequency_Hz, q_inverse, q) or a
/// minimal (frequency_Hz, q_inverse) table.
inline std::vector<QSpectrumPoint> q_spectrum_points_from_csv(const std::string& path) {
  const CsvTable t = read_csv(path);
  const std::size_t cf = t.column("frequency_Hz");
  const std::size_t cq = t.column("q_inverse");
  std::vector<QSpectrumPoint> points;
  for (std::size_t r = 0; r < t.rows.size(); ++r) points.push_back({t.num(r, cf), t.num(r, cq)});
  return points;
}

inline std::string sweep_csv(const std::vector<SpectrumSample>& table) {
  std::string out = "power_W,mode,frequency_Hz\n";
  for (const SpectrumSample& sample : table)
    for (const SpectrumLine& line : sample.lines)
      out += format_sig(sample.power) + "," + line.label + "," + format_sig(line.frequency) + "\n";
  return out;
}

inline std::vector<SpectrumSample> sweep_from_csv(const std::string& path) {
  const CsvTable t = read_csv(path);
  const std::size_t cp = t.column("power_W");
  const std::size_t cm = t.column("mode");
  const std::size_t cf = t.column("frequency_Hz");
  std::vector<SpectrumSample> table;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const double p = t.num(r, cp);
    if (table.empty() || t.rows[r][cp] != t.rows[r - 1][cp]) table.push_back({p, {}});
    table.back().lines.push_back({t.rows[r][cm], t.num(r, cf)});
  }
  return table;
}

inline std::string curve_csv(const FrequencyCurve& curve) {
  std::string out = "power_W,frequency_Hz,stress_Pa,delta_T_K\n";
  for (const FrequencyCurvePoint& p : curve.points)
    out += format_sig(p.power) + "," + format_sig(p.frequency) + "," + format_sig(p.stress) + "," +
           format_sig(p.delta_T) + "\n";
  return out;
}

inline FrequencyCurve curve_from_csv(const std::string& path) {
  const CsvTable t = read_csv(path);
  const std::size_t cp = t.column("power_W");
  const std::size_t cf = t.column("frequency_Hz");
  const std::size_t cs = t.column("stress_Pa");
  const std::size_t cd = t.column("delta_T_K");
  FrequencyCurve curve;
  for (std::size_t r = 0; r < t.rows.size(); ++r)
    curve.points.push_back({t.num(r, cp), t.num(r, cf), t.num(r, cs), t.num(r, cd)});
  return curve;
}

inline std::string gaps_csv(const std::vector<FrequencyInterval>& gaps) {
  std::string out = "lo_Hz,hi_Hz\n";
  for (const FrequencyInterval& g : gaps)
    out += format_sig(g.lo) + "," + format_sig(g.hi) + "\n";
  return out;
}

inline std::vector<FrequencyInterval> gaps_from_csv(const std::string& path) {
  const CsvTable t = read_csv(path);
  const std::size_t cl = t.column("lo_Hz");
  const std::size_t ch = t.column("hi_Hz");
  std::vector<FrequencyInterval> gaps;
  for (std::size_t r = 0; r < t.rows.size(); ++r) gaps.push_back({t.num(r, cl), t.num(r, ch)});
  return gaps;
}

// ---------------------------------------------------------------------------
// Ring-down traces: CSV samples plus a JSON metadata sidecar
// ---------------------------------------------------------------------------

inline std::string trace_csv(const RingdownTrace& trace) {
  std::string out = "time_s,displacement_m\n";
  out.reserve(out.size() + trace.samples.size() * 34);
  for (std::size_t k = 0; k < trace.samples.size(); ++k)
    out += format_sig(double(k) / trace.sample_rate) + "," + format_sig(trace.samples[k]) + "\n";
  return out;
}

inline json trace_meta_json(const RingdownTrace& trace) {
  return json{{"schema", "ringdowntrace-meta-v1"},
              {"sample_rate_Hz", trace.sample_rate},
              {"drive_frequency_Hz", trace.drive_frequency},
              {"initial_amplitude_m", trace.initial_amplitude},
              {"noise_floor_m_rtHz", trace.noise_floor},
              {"short_record", trace.short_record}};
}

inline RingdownTrace trace_from_csv(const std::string& csv_path, const std::string& meta_path) {
  const json j = load_json_file(meta_path);
  const std::string s = "ringdowntrace-meta-v1";
  detail::check_schema(j, s);
  RingdownTrace trace;
  trace.sample_rate = detail::get_num(j, "sample_rate_Hz", s);
  trace.drive_frequency = detail::get_num(j, "drive_frequency_Hz", s);
  trace.initial_amplitude = detail::get_num(j, "initial_amplitude_m", s);
  trace.noise_floor = detail::get_num(j, "noise_floor_m_rtHz", s);
  trace.short_record = j.value("short_record", false);

  const CsvTable t = read_csv(csv_path);
  const std::size_t cd = t.column("displacement_m");
  trace.samples.reserve(t.rows.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) trace.samples.push_back(t.num(r, cd));
  trace.validate();
  return trace;
}

// ---------------------------------------------------------------------------
// Fit reports as JSON
// ---------------------------------------------------------------------------

inline json frequency_fit_report_json(const FrequencyFitReport& rep) {
  return json{{"schema", "fitreport-f-vs-p-v1"},
              {"a_Hz2", rep.coefficients.a},
              {"b_Hz2_per_W", rep.coefficients.b},
              {"c_Hz2_per_W2", rep.coefficients.c},
              {"sigma_a_Hz2", rep.sigma_a},
              {"sigma_b_Hz2_per_W", rep.sigma_b},
              {"sigma_c_Hz2_per_W2", rep.sigma_c},
              {"max_abs_residual_Hz", rep.max_abs_residual},
              {"within_1khz", rep.within_1khz}};
}

inline json thermal_parameters_json(const ThermalParameters& params) {
  json j{{"schema", "fitreport-thermal-params-v1"},
         {"alpha0_per_K", params.alpha0},
         {"alpha1_per_K2", params.alpha1},
         {"chi_K_per_W", params.chi},
         {"curvature_sign_warning", params.curvature_sign_warning}};
  j["fit"] = frequency_fit_report_json(params.fit);
  return j;
}

inline json ringdown_result_json(const RingdownResult& res) {
  return json{{"schema", "fitreport-ringdown-v1"},
              {"tau_s", res.tau},
              {"tau_uncertainty_s", res.tau_uncertainty},
              {"quality_factor", res.quality_factor},
              {"refined_frequency_Hz", res.refined_frequency},
              {"fit_window_first_sample", res.fit_window.first},
              {"fit_window_last_sample", res.fit_window.last}};
}

inline json q_spectrum_fit_json(const QSpectrumFit& fit) {
  json peaks = json::array();
  for (const PeakFit& p : fit.peaks) {
    json cov = json::array();
    for (int r = 0; r < 3; ++r)
      cov.push_back(json::array(
          {p.covariance[std::size_t(r)][0], p.covariance[std::size_t(r)][1],
           p.covariance[std::size_t(r)][2]}));
    peaks.push_back(json{{"rest_frequency_Hz", p.mode.rest_frequency},
                         {"linewidth_Hz", p.mode.linewidth},
                         {"coupling_Hz", p.mode.coupling},
                         {"local_baseline_q_inverse", p.local_baseline},
                         {"covariance_f_gamma_g", cov}});
  }
  return json{{"schema", "fitreport-q-spectrum-v1"},
              {"baseline_q", fit.baseline_q},
              {"peaks", peaks}};
}

}  // namespace memtune
