#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "memtune/core.hpp"
#include "memtune/errors.hpp"

namespace memtune {

/// Gaussian heating beam. Diameter is the 1/e^2 intensity diameter; the
/// center offsets are measured from the membrane center.
struct BeamSpec {
  double diameter_e2 = 350e-6;  ///< m
  double center_x = 0.0;        ///< m, offset from membrane center
  double center_y = 0.0;        ///< m

  void validate() const {
    if (!(diameter_e2 > 0.0)) throw spec_error("BeamSpec: diameter_e2 must be > 0");
  }

  /// Fraction of the beam power that lands on a square membrane of the given
  /// side length (product of two 1-D Gaussian integrals).
  double containment(double side_length) const {
    validate();
    const double w = 0.5 * diameter_e2;
    const double s = std::sqrt(2.0) / w;
    auto axis = [&](double c) {
      return 0.5 * (std::erf(s * (0.5 * side_length - c)) + std::erf(s * (0.5 * side_length + c)));
    };
    return axis(center_x) * axis(center_y);
  }
};

/// Uniform n x n node grid over the membrane, boundary nodes on the frame.
struct ThermalGrid {
  int n = 201;  ///< nodes per side, >= 16

  void validate() const {
    if (n < 16) throw spec_error("ThermalGrid: n must be >= 16");
  }
  double spacing(double side_length) const { return side_length / (n - 1); }
};

/// Temperature rise field on a ThermalGrid, row-major, boundary included.
struct TemperatureField {
  int n = 0;
  double side_length = 0.0;  ///< m
  std::vector<double> values;  ///< K, size n * n

  double at(int i, int j) const { return values[std::size_t(i) * n + j]; }

  /// Area-weighted (trapezoidal) mean temperature rise over the membrane.
  double average() const {
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
      const double wi = (i == 0 || i == n - 1) ? 0.5 : 1.0;
      for (int j = 0; j < n; ++j) {
        const double wj = (j == 0 || j == n - 1) ? 0.5 : 1.0;
        sum += wi * wj * at(i, j);
      }
    }
    // h^2 / l^2 = 1 / (n-1)^2
    return sum / (double(n - 1) * double(n - 1));
  }

  double max() const { return *std::max_element(values.begin(), values.end()); }
};

namespace detail {

/// Solves -laplace(u) = f on the unit-square-like grid (spacing h) with
/// homogeneous Dirichlet boundary, 5-point stencil, matrix-free conjugate
/// gradients. `f` is evaluated at interior nodes (i, j in 1 .. n-2). Returns
/// the full field including the zero boundary ring.
inline std::vector<double> solve_dirichlet_poisson(
    int n, double h, const std::function<double(int, int)>& f,
    double rel_tol = 1e-12, int max_iter = 50000) {
  const int ni = n - 2;  // interior nodes per side
  const std::size_t m = std::size_t(ni) * ni;
  auto idx = [ni](int i, int j) { return std::size_t(i) * ni + j; };

  std::vector<double> b(m);
  for (int i = 0; i < ni; ++i)
    for (int j = 0; j < ni; ++j) b[idx(i, j)] = f(i + 1, j + 1);

  const double inv_h2 = 1.0 / (h * h);
  auto apply = [&](const std::vector<double>& u, std::vector<double>& out) {
    for (int i = 0; i < ni; ++i) {
      for (int j = 0; j < ni; ++j) {
        double v = 4.0 * u[idx(i, j)];
        if (i > 0) v -= u[idx(i - 1, j)];
        if (i < ni - 1) v -= u[idx(i + 1, j)];
        if (j > 0) v -= u[idx(i, j - 1)];
        if (j < ni - 1) v -= u[idx(i, j + 1)];
        out[idx(i, j)] = v * inv_h2;
      }
    }
  };
  auto dot = [m](const std::vector<double>& x, const std::vector<double>& y) {
    double s = 0.0;
    for (std::size_t k = 0; k < m; ++k) s += x[k] * y[k];
    return s;
  };

  std::vector<double> u(m, 0.0), r = b, p = b, ap(m);
  const double b_norm2 = dot(b, b);
  if (b_norm2 == 0.0) return std::vector<double>(std::size_t(n) * n, 0.0);
  const double tol2 = rel_tol * rel_tol * b_norm2;

  double r_norm2 = b_norm2;
  int iter = 0;
  for (; iter < max_iter && r_norm2 > tol2; ++iter) {
    apply(p, ap);
    const double alpha = r_norm2 / dot(p, ap);
    for (std::size_t k = 0; k < m; ++k) u[k] += alpha * p[k];
    for (std::size_t k = 0; k < m; ++k) r[k] -= alpha * ap[k];
    const double r_next = dot(r, r);
    const double beta = r_next / r_norm2;
    for (std::size_t k = 0; k < m; ++k) p[k] = r[k] + beta * p[k];
    r_norm2 = r_next;
  }
  if (r_norm2 > tol2)
    throw solver_error("solve_dirichlet_poisson: CG failed to reach tolerance in " +
                       std::to_string(max_iter) + " iterations");

  std::vector<double> full(std::size_t(n) * n, 0.0);
  for (int i = 0; i < ni; ++i)
    for (int j = 0; j < ni; ++j) full[std::size_t(i + 1) * n + (j + 1)] = u[idx(i, j)];
  return full;
}

}  // namespace detail

/// Steady-state temperature rise field for a Gaussian beam of the given
/// incident power: -kappa t laplace(dT) = q with q the absorbed areal power
/// density and dT = 0 at the frame.
inline TemperatureField solve_heating(const MembraneSpec& spec, const BeamSpec& beam,
                                      double power, ThermalGrid grid = {}) {
  spec.validate();
  beam.validate();
  grid.validate();
  if (!(power >= 0.0)) throw spec_error("solve_heating: power must be >= 0");
  if (beam.containment(spec.side_length) < 0.99)
    throw spec_error("solve_heating: beam spills over the membrane edge (containment < 0.99)");

  const int n = grid.n;
  const double l = spec.side_length;
  const double h = grid.spacing(l);
  const double w = 0.5 * beam.diameter_e2;
  const double cx = 0.5 * l + beam.center_x;
  const double cy = 0.5 * l + beam.center_y;
  const double q0 = spec.absorption_fraction * power * 2.0 / (M_PI * w * w);
  const double scale = 1.0 / (spec.heat_conductivity * spec.thickness);

  auto rhs = [&](int i, int j) {
    const double x = i * h - cx;
    const double y = j * h - cy;
    return scale * q0 * std::exp(-2.0 * (x * x + y * y) / (w * w));
  };

  TemperatureField field;
  field.n = n;
  field.side_length = l;
  field.values = detail::solve_dirichlet_poisson(n, h, rhs);
  return field;
}

/// Photothermal coupling chi = <dT> / P in K/W. The heat equation is linear
/// in P, so a single unit-power solve determines chi exactly.
inline ThermalCoupling chi_of_beam(const MembraneSpec& spec, const BeamSpec& beam,
                                   ThermalGrid grid = {}) {
  const TemperatureField field = solve_heating(spec, beam, 1.0, grid);
  return {field.average()};
}

/// Inverts chi_of_beam for the absorbed fraction: chi is proportional to the
/// absorption, so the result follows from one solve at absorption 1.
inline double absorption_from_chi(const MembraneSpec& spec, const BeamSpec& beam,
                                  double chi_measured, ThermalGrid grid = {}) {
  spec.validate();
  if (!(chi_measured >= 0.0)) throw spec_error("absorption_from_chi: chi must be >= 0");
  MembraneSpec unit = spec;
  unit.absorption_fraction = 1.0;
  const double chi_unit = chi_of_beam(unit, beam, grid).chi;
  const double a = chi_measured / chi_unit;
  if (a > 1.0)
    throw model_violation("absorption_from_chi: required absorption " + std::to_string(a) +
                          " exceeds 1; chi unreachable for this beam");
  return a;
}

/// One sample of a frequency-vs-power curve.
struct FrequencyCurvePoint {
  double power = 0.0;      ///< W
  double frequency = 0.0;  ///< Hz
  double stress = 0.0;     ///< Pa
  double delta_T = 0.0;    ///< K
};

/// f_{1,1}(P) sampled on a uniform power grid. When the power sweep reaches
/// the buckling point the curve stops there and `truncated` is set.
struct FrequencyCurve {
  std::vector<FrequencyCurvePoint> points;
  ThermalCoupling coupling;
  bool truncated = false;
  double critical_power = std::numeric_limits<double>::infinity();  ///< W
};

/// Frequency-vs-power curve for a known photothermal coupling.
inline FrequencyCurve f_of_p_curve(const MembraneSpec& spec, ThermalCoupling coupling,
                                   double max_power, int samples, ModeIndex idx = {1, 1}) {
  spec.validate();
  coupling.validate();
  idx.validate();
  if (!(max_power > 0.0)) throw spec_error("f_of_p_curve: max_power must be > 0");
  if (samples < 2) throw spec_error("f_of_p_curve: need at least 2 samples");

  FrequencyCurve curve;
  curve.coupling = coupling;
  curve.critical_power = critical_power(spec, coupling);
  curve.points.reserve(std::size_t(samples));
  for (int k = 0; k < samples; ++k) {
    const double p = max_power * k / (samples - 1);
    if (p >= curve.critical_power) {
      curve.truncated = true;
      break;
    }
    const StressState st = stress_at_power(spec, coupling, p);
    curve.points.push_back({p, mode_frequency(spec, st.stress, idx), st.stress, st.delta_T});
  }
  return curve;
}

/// Frequency-vs-power curve with the coupling computed from the beam shape.
inline FrequencyCurve f_of_p_curve(const MembraneSpec& spec, const BeamSpec& beam,
                                   double max_power, int samples, ThermalGrid grid = {},
                                   ModeIndex idx = {1, 1}) {
  return f_of_p_curve(spec, chi_of_beam(spec, beam, grid), max_power, samples, idx);
}

}  // namespace memtune
