#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "memtune/core.hpp"
#include "memtune/errors.hpp"
#include "memtune/thermal.hpp"

namespace memtune {

/// One lossy mechanical mode of the support frame, seen by the membrane as a
/// dissipation channel.
struct FrameMode {
  double rest_frequency = 0.0;  ///< Hz, at holder_delta_T = 0
  double linewidth = 0.0;       ///< Hz, full width
  double coupling = 0.0;        ///< Hz, hybridization rate with the membrane
  double temp_shift = 0.0;      ///< 1/K, fractional frequency decrease per K

  void validate() const {
    if (!(rest_frequency > 0.0)) throw spec_error("FrameMode: rest_frequency must be > 0");
    if (!(linewidth > 0.0)) throw spec_error("FrameMode: linewidth must be > 0");
    if (!(coupling >= 0.0)) throw spec_error("FrameMode: coupling must be >= 0");
    if (!(temp_shift >= 0.0)) throw spec_error("FrameMode: temp_shift must be >= 0");
  }
};

/// Dissipation model: flat baseline 1/Q_bg plus one Lorentzian channel per
/// frame mode. Holder heating shifts each frame mode down by its temp_shift.
struct FrameModel {
  std::vector<FrameMode> modes;  ///< sorted by rest_frequency
  double baseline_q = 1e6;       ///< dimensionless Q_bg
  double holder_delta_T = 0.0;   ///< K

  /// Frame-mode frequency at the current holder temperature.
  double effective_frequency(const FrameMode& mode) const {
    return mode.rest_frequency * (1.0 - mode.temp_shift * holder_delta_T);
  }

  void sort_modes() {
    std::sort(modes.begin(), modes.end(), [](const FrameMode& a, const FrameMode& b) {
      return a.rest_frequency < b.rest_frequency;
    });
  }

  void validate() const {
    if (!(baseline_q > 0.0)) throw spec_error("FrameModel: baseline_q must be > 0");
    for (std::size_t j = 0; j < modes.size(); ++j) {
      modes[j].validate();
      if (j > 0 && modes[j].rest_frequency < modes[j - 1].rest_frequency)
        throw spec_error("FrameModel: modes must be sorted by rest_frequency");
      if (!(effective_frequency(modes[j]) > 0.0))
        throw spec_error("FrameModel: holder heating drives a frame mode to f <= 0");
    }
  }
};

/// Two membrane modes hybridized by a static coupling.
struct ModeCouplingPair {
  ModeIndex idx_a;
  ModeIndex idx_b;
  double g_ab = 0.0;  ///< Hz

  void validate() const {
    idx_a.validate();
    idx_b.validate();
    if (idx_a == idx_b) throw spec_error("ModeCouplingPair: idx_a and idx_b must differ");
    if (!(g_ab >= 0.0)) throw spec_error("ModeCouplingPair: g_ab must be >= 0");
  }
};

/// Membrane dissipation at frequency f: flat baseline plus a Lorentzian
/// energy-leakage term per frame mode,
/// Q^-1(f) = 1/Q_bg + sum_j g_j^2 gamma_j / ((f - f_j')^2 + (gamma_j/2)^2) / f.
inline double q_inverse_spectrum(const FrameModel& frame, double f) {
  frame.validate();
  if (!(f > 0.0)) throw spec_error("q_inverse_spectrum: f must be > 0");
  double q_inv = 1.0 / frame.baseline_q;
  for (const FrameMode& mode : frame.modes) {
    const double df = f - frame.effective_frequency(mode);
    const double hw = 0.5 * mode.linewidth;
    q_inv += mode.coupling * mode.coupling * mode.linewidth / (df * df + hw * hw) / f;
  }
  return q_inv;
}

/// One sample of a laser-tuned dissipation spectrum.
struct TuningPoint {
  double power = 0.0;      ///< W
  double frequency = 0.0;  ///< Hz, f_{1,1}(P)
  double q_inverse = 0.0;
  double q = 0.0;
};

/// Q^-1 of the fundamental mode recorded while laser power tunes it through
/// the frame-mode spectrum. Variant with a precomputed coupling.
inline std::vector<TuningPoint> q_spectrum_over_tuning(const MembraneSpec& spec,
                                                       ThermalCoupling coupling,
                                                       const FrameModel& frame,
                                                       const std::vector<double>& powers) {
  spec.validate();
  coupling.validate();
  frame.validate();
  std::vector<TuningPoint> out;
  out.reserve(powers.size());
  for (double p : powers) {
    const StressState st = stress_at_power(spec, coupling, p);
    const double f = mode_frequency(spec, st.stress, {1, 1});
    const double q_inv = q_inverse_spectrum(frame, f);
    out.push_back({p, f, q_inv, 1.0 / q_inv});
  }
  return out;
}

/// Same, with the coupling computed from the beam. The resulting (f, Q^-1)
/// pairs do not depend on the beam position: the beam only sets the P -> f map.
inline std::vector<TuningPoint> q_spectrum_over_tuning(const MembraneSpec& spec,
                                                       const BeamSpec& beam, ThermalGrid grid,
                                                       const FrameModel& frame,
                                                       const std::vector<double>& powers) {
  return q_spectrum_over_tuning(spec, chi_of_beam(spec, beam, grid), frame, powers);
}

/// Hybridized branch frequencies of two coupled modes.
struct AnticrossingBranches {
  double f_plus = 0.0;   ///< Hz, upper branch
  double f_minus = 0.0;  ///< Hz, lower branch
};

/// Eigenvalues of the 2x2 coupling matrix [[f_a, g],[g, f_b]]:
/// f_pm = (f_a + f_b)/2 +- sqrt(((f_a - f_b)/2)^2 + g^2).
inline AnticrossingBranches anticrossing_branches(double f_a, double f_b, double g_ab) {
  if (!(f_a > 0.0 && f_b > 0.0))
    throw spec_error("anticrossing_branches: frequencies must be > 0");
  if (!(g_ab >= 0.0)) throw spec_error("anticrossing_branches: g_ab must be >= 0");
  const double mean = 0.5 * (f_a + f_b);
  const double split = std::hypot(0.5 * (f_a - f_b), g_ab);
  return {mean + split, mean - split};
}

/// One spectral line of a power sweep: a bare mode or an anticrossing branch.
struct SpectrumLine {
  std::string label;       ///< "mxn" for bare modes, "mxn~pxq+" / "...-" for branches
  double frequency = 0.0;  ///< Hz
};

/// All lines at one power, sorted by frequency.
struct SpectrumSample {
  double power = 0.0;  ///< W
  std::vector<SpectrumLine> lines;
};

inline std::string mode_label(ModeIndex idx) {
  return std::to_string(idx.m) + "x" + std::to_string(idx.n);
}

/// Mode spectrum versus laser power: bare f_{m,n}(P) for every listed mode,
/// with each declared coupling pair replaced by its anticrossing branches.
inline std::vector<SpectrumSample> spectrum_vs_power(const MembraneSpec& spec,
                                                     ThermalCoupling coupling,
                                                     const std::vector<ModeIndex>& modes,
                                                     const std::vector<ModeCouplingPair>& pairs,
                                                     const std::vector<double>& powers) {
  spec.validate();
  coupling.validate();
  if (modes.empty()) throw spec_error("spectrum_vs_power: mode list is empty");
  for (ModeIndex idx : modes) idx.validate();

  auto find_mode = [&](ModeIndex idx) {
    return std::find(modes.begin(), modes.end(), idx) != modes.end();
  };
  std::vector<char> paired(modes.size(), 0);
  for (const ModeCouplingPair& pair : pairs) {
    pair.validate();
    if (!find_mode(pair.idx_a) || !find_mode(pair.idx_b))
      throw spec_error("spectrum_vs_power: coupling pair references a mode not in the list");
    for (std::size_t k = 0; k < modes.size(); ++k) {
      if (modes[k] == pair.idx_a || modes[k] == pair.idx_b) {
        if (paired[k])
          throw spec_error("spectrum_vs_power: mode " + mode_label(modes[k]) +
                           " appears in more than one coupling pair");
        paired[k] = 1;
      }
    }
  }

  std::vector<SpectrumSample> table;
  table.reserve(powers.size());
  for (double p : powers) {
    const StressState st = stress_at_power(spec, coupling, p);
    SpectrumSample sample;
    sample.power = p;
    for (std::size_t k = 0; k < modes.size(); ++k) {
      if (paired[k]) continue;
      sample.lines.push_back({mode_label(modes[k]), mode_frequency(spec, st.stress, modes[k])});
    }
    for (const ModeCouplingPair& pair : pairs) {
      const double f_a = mode_frequency(spec, st.stress, pair.idx_a);
      const double f_b = mode_frequency(spec, st.stress, pair.idx_b);
      const AnticrossingBranches br = anticrossing_branches(f_a, f_b, pair.g_ab);
      const std::string base = mode_label(pair.idx_a) + "~" + mode_label(pair.idx_b);
      sample.lines.push_back({base + "-", br.f_minus});
      sample.lines.push_back({base + "+", br.f_plus});
    }
    std::sort(sample.lines.begin(), sample.lines.end(),
              [](const SpectrumLine& a, const SpectrumLine& b) {
                return a.frequency != b.frequency ? a.frequency < b.frequency : a.label < b.label;
              });
    table.push_back(std::move(sample));
  }
  return table;
}

/// Closed frequency interval [lo, hi].
struct FrequencyInterval {
  double lo = 0.0;  ///< Hz
  double hi = 0.0;  ///< Hz
};

/// Maximal sub-intervals of `band` where Q(f) >= min_q: the usable gaps
/// between frame-mode resonances. Scan at gamma_min/10 resolution, then edges
/// are bisected to 1 Hz.
inline std::vector<FrequencyInterval> find_q_gaps(const FrameModel& frame, double band_lo,
                                                  double band_hi, double min_q) {
  frame.validate();
  if (!(band_lo > 0.0 && band_hi > band_lo))
    throw spec_error("find_q_gaps: need 0 < band_lo < band_hi");
  if (!(min_q > 0.0)) throw spec_error("find_q_gaps: min_q must be > 0");

  const double threshold = 1.0 / min_q;  // on Q^-1
  if (frame.modes.empty())
    return 1.0 / frame.baseline_q <= threshold
               ? std::vector<FrequencyInterval>{{band_lo, band_hi}}
               : std::vector<FrequencyInterval>{};

  double gamma_min = frame.modes.front().linewidth;
  for (const FrameMode& mode : frame.modes) gamma_min = std::min(gamma_min, mode.linewidth);
  const double step = gamma_min / 10.0;
  const double n_steps_d = std::ceil((band_hi - band_lo) / step);
  if (n_steps_d > 2e7)
    throw spec_error("find_q_gaps: band spans more than 2e7 scan steps of gamma_min/10; "
                     "narrow the band");
  const int n_steps = int(n_steps_d);

  auto inside = [&](double f) { return q_inverse_spectrum(frame, f) <= threshold; };
  // Bisects the gap edge inside (a, b) where exactly one endpoint is in-gap.
  auto refine = [&](double a, double b, bool a_inside) {
    while (b - a > 1.0) {
      const double mid = 0.5 * (a + b);
      if (inside(mid) == a_inside)
        a = mid;
      else
        b = mid;
    }
    return 0.5 * (a + b);
  };

  std::vector<FrequencyInterval> gaps;
  double prev_f = band_lo;
  bool prev_in = inside(prev_f);
  double open_lo = prev_in ? band_lo : 0.0;
  for (int k = 1; k <= n_steps; ++k) {
    const double f = std::min(band_lo + k * step, band_hi);
    const bool in = inside(f);
    if (in != prev_in) {
      const double edge = refine(prev_f, f, prev_in);
      if (in)
        open_lo = edge;
      else
        gaps.push_back({open_lo, edge});
    }
    prev_f = f;
    prev_in = in;
  }
  if (prev_in) gaps.push_back({open_lo, band_hi});
  return gaps;
}

}  // namespace memtune
