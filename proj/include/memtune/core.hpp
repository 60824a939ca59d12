#pragma once

#include <cmath>
#include <limits>
#include <string>

#include "memtune/errors.hpp"

namespace memtune {

/// Geometry and material constants of one membrane. All quantities SI.
struct MembraneSpec {
  double side_length = 0.0;         ///< m
  double thickness = 0.0;           ///< m
  double density = 0.0;             ///< kg/m^3
  double youngs_modulus = 0.0;      ///< Pa
  double initial_stress = 0.0;      ///< Pa, tensile stress at zero heating
  double expansion_alpha0 = 0.0;    ///< 1/K, linear thermal expansion
  double expansion_alpha1 = 0.0;    ///< 1/K^2, quadratic thermal expansion
  double heat_conductivity = 0.0;   ///< W/(K m)
  double absorption_fraction = 0.0; ///< fraction of incident optical power
  double frame_expansion = 0.0;     ///< 1/K, linear expansion of the frame

  void validate() const {
    if (!(side_length > 0.0)) throw spec_error("MembraneSpec: side_length must be > 0");
    if (!(thickness > 0.0)) throw spec_error("MembraneSpec: thickness must be > 0");
    if (!(density > 0.0)) throw spec_error("MembraneSpec: density must be > 0");
    if (!(youngs_modulus > 0.0)) throw spec_error("MembraneSpec: youngs_modulus must be > 0");
    if (!(initial_stress > 0.0)) throw spec_error("MembraneSpec: initial_stress must be > 0");
    if (!(heat_conductivity > 0.0)) throw spec_error("MembraneSpec: heat_conductivity must be > 0");
    if (!(absorption_fraction >= 0.0 && absorption_fraction <= 1.0))
      throw spec_error("MembraneSpec: absorption_fraction must lie in [0, 1]");
    // Tension-dominated thin-membrane dispersion; thick plates need bending terms.
    if (!(thickness / side_length < 0.01))
      throw spec_error("MembraneSpec: thickness/side_length >= 0.01, outside thin-membrane validity");
  }
};

/// Mode label: number of anti-nodes along the two in-plane directions.
struct ModeIndex {
  int m = 1;
  int n = 1;

  void validate() const {
    if (m < 1 || n < 1) throw spec_error("ModeIndex: m and n must be >= 1");
  }
  /// m^2 + n^2, the combination entering the dispersion relation.
  double index_norm() const { return double(m) * m + double(n) * n; }
  friend bool operator==(ModeIndex a, ModeIndex b) { return a.m == b.m && a.n == b.n; }
};

/// Average temperature rise of the membrane per unit incident laser power.
struct ThermalCoupling {
  double chi = 0.0;  ///< K/W

  void validate() const {
    if (!(chi >= 0.0)) throw spec_error("ThermalCoupling: chi must be >= 0");
  }
};

/// Tensile stress together with the heating state that produced it.
struct StressState {
  double stress = 0.0;   ///< Pa
  double delta_T = 0.0;  ///< K, average temperature rise
  double power = 0.0;    ///< W, incident laser power (0 for holder heating)
};

/// Coefficients of the frequency-squared model f(P) = sqrt(a + b P + c P^2).
struct FitCoefficients {
  double a = 0.0;  ///< Hz^2
  double b = 0.0;  ///< Hz^2/W
  double c = 0.0;  ///< Hz^2/W^2

  void validate() const {
    if (!(a > 0.0)) throw spec_error("FitCoefficients: a must be > 0 (nonzero rest frequency)");
  }
};

namespace detail {

/// Smallest root > 0 of c2 x^2 + c1 x + c0 = 0, or +inf when none exists.
inline double smallest_positive_root(double c2, double c1, double c0) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  if (c2 == 0.0) {
    if (c1 == 0.0) return inf;
    const double x = -c0 / c1;
    return x > 0.0 ? x : inf;
  }
  const double disc = c1 * c1 - 4.0 * c2 * c0;
  if (disc < 0.0) return inf;
  const double sq = std::sqrt(disc);
  // Citardauq form avoids cancellation for the small-magnitude root.
  const double q = -0.5 * (c1 + (c1 >= 0.0 ? sq : -sq));
  double best = inf;
  if (q != 0.0) {
    const double r1 = q / c2;
    if (r1 > 0.0) best = std::min(best, r1);
    const double r2 = c0 / q;
    if (r2 > 0.0) best = std::min(best, r2);
  } else {
    // c0 == 0: roots are 0 and -c1/c2.
    const double r = -c1 / c2;
    if (r > 0.0) best = r;
  }
  return best;
}

}  // namespace detail

/// Eigenfrequency of mode (m, n) of a square membrane under tensile stress:
/// f = (1 / 2l) * sqrt(S / rho * (m^2 + n^2)).
inline double mode_frequency(const MembraneSpec& spec, double stress, ModeIndex idx) {
  spec.validate();
  idx.validate();
  if (stress < 0.0)
    throw buckling_error("mode_frequency: negative stress, membrane is buckled", stress);
  return std::sqrt(stress / spec.density * idx.index_norm()) / (2.0 * spec.side_length);
}

/// Smallest laser power at which the tension would vanish, +inf if it never does.
inline double critical_power(const MembraneSpec& spec, ThermalCoupling coupling) {
  spec.validate();
  coupling.validate();
  const double e = spec.youngs_modulus;
  const double chi = coupling.chi;
  // S(P) = S0 - E alpha0 chi P - E alpha1 chi^2 P^2
  return detail::smallest_positive_root(-e * spec.expansion_alpha1 * chi * chi,
                                        -e * spec.expansion_alpha0 * chi,
                                        spec.initial_stress);
}

/// Stress under local laser heating. The absorbed power raises the average
/// membrane temperature by dT = chi * P, the thermal expansion
/// dl0/l0 = alpha0 dT + alpha1 dT^2 relaxes the fabrication stress:
/// S = S0 - E (alpha0 chi P + alpha1 chi^2 P^2).
inline StressState stress_at_power(const MembraneSpec& spec, ThermalCoupling coupling,
                                   double power) {
  spec.validate();
  coupling.validate();
  if (!(power >= 0.0)) throw spec_error("stress_at_power: power must be >= 0");
  const double d_t = coupling.chi * power;
  const double stress =
      spec.initial_stress -
      spec.youngs_modulus * (spec.expansion_alpha0 * d_t + spec.expansion_alpha1 * d_t * d_t);
  if (stress < 0.0)
    throw buckling_error("stress_at_power: stress went negative at P = " + std::to_string(power) +
                             " W (buckling)",
                         stress, critical_power(spec, coupling));
  return {stress, d_t, power};
}

/// Analytic df_{1,1}/dP at P = 0: -f(S0) * E alpha0 chi / (2 S0). Hz/W.
inline double frequency_slope_at_zero_power(const MembraneSpec& spec, ThermalCoupling coupling) {
  spec.validate();
  coupling.validate();
  const double f0 = mode_frequency(spec, spec.initial_stress, {1, 1});
  return -f0 * spec.youngs_modulus * spec.expansion_alpha0 * coupling.chi /
         (2.0 * spec.initial_stress);
}

/// Finite-window secant slope (f(P_window) - f(0)) / P_window, Hz/W. Measured
/// "linear shifts" are usually extracted this way and pick up curvature of
/// f(P), so this is reported alongside the analytic zero-power slope.
inline double frequency_slope_secant(const MembraneSpec& spec, ThermalCoupling coupling,
                                     double power_window) {
  if (!(power_window > 0.0)) throw spec_error("frequency_slope_secant: power_window must be > 0");
  const double f0 = mode_frequency(spec, spec.initial_stress, {1, 1});
  const double f1 = mode_frequency(spec, stress_at_power(spec, coupling, power_window).stress, {1, 1});
  return (f1 - f0) / power_window;
}

/// Stress under uniform heating of membrane plus frame by delta_T. Both
/// expand, so only the expansion mismatch acts on the stress:
/// S = S0 + E (alpha_f - alpha0) delta_T.
inline StressState stress_from_global_heating(const MembraneSpec& spec, double delta_T) {
  spec.validate();
  if (!(delta_T >= 0.0)) throw spec_error("stress_from_global_heating: delta_T must be >= 0");
  const double stress =
      spec.initial_stress +
      spec.youngs_modulus * (spec.frame_expansion - spec.expansion_alpha0) * delta_T;
  if (stress < 0.0)
    throw buckling_error("stress_from_global_heating: stress went negative (buckling)", stress);
  return {stress, delta_T, 0.0};
}

/// Inverts stress_from_global_heating composed with mode_frequency: given the
/// measured f_{1,1} shift under holder heating by delta_T, returns the
/// membrane expansion coefficient alpha0. The expansion_alpha0 stored in the
/// membrane is ignored; its geometry, initial stress, modulus and frame
/// expansion are used.
inline double alpha0_from_global_heating(const MembraneSpec& spec, double delta_T,
                                         double delta_f) {
  spec.validate();
  if (!(delta_T > 0.0)) throw spec_error("alpha0_from_global_heating: delta_T must be > 0");
  const double f0 = mode_frequency(spec, spec.initial_stress, {1, 1});
  const double f1 = f0 + delta_f;
  if (!(f1 > 0.0))
    throw buckling_error("alpha0_from_global_heating: shift implies loss of tension");
  // f = sqrt(2 S / rho) / (2 l)  =>  S = 2 rho l^2 f^2
  const double l = spec.side_length;
  const double s1 = 2.0 * spec.density * l * l * f1 * f1;
  return spec.frame_expansion -
         (s1 - spec.initial_stress) / (spec.youngs_modulus * delta_T);
}

/// f(P) = sqrt(a + b P + c P^2).
inline double fit_form_frequency(const FitCoefficients& coeffs, double power) {
  coeffs.validate();
  const double y = coeffs.a + coeffs.b * power + coeffs.c * power * power;
  if (y < 0.0)
    throw buckling_error("fit_form_frequency: negative radicand at P = " + std::to_string(power) +
                             " W",
                         std::numeric_limits<double>::quiet_NaN(),
                         detail::smallest_positive_root(coeffs.c, coeffs.b, coeffs.a));
  return std::sqrt(y);
}

/// Maps the physical model onto the fit form. With k = (m^2 + n^2) / (4 l^2 rho):
/// f^2 = k S(P), so a = k S0, b = -k E alpha0 chi, c = -k E alpha1 chi^2, and
/// fit_form_frequency(fit_coefficients_for(...), P) equals
/// mode_frequency(stress_at_power(...)) identically.
inline FitCoefficients fit_coefficients_for(const MembraneSpec& spec, ThermalCoupling coupling,
                                            ModeIndex idx = {1, 1}) {
  spec.validate();
  coupling.validate();
  idx.validate();
  const double l = spec.side_length;
  const double k = idx.index_norm() / (4.0 * l * l * spec.density);
  const double e = spec.youngs_modulus;
  const double chi = coupling.chi;
  return {k * spec.initial_stress, -k * e * spec.expansion_alpha0 * chi,
          -k * e * spec.expansion_alpha1 * chi * chi};
}

}  // namespace memtune
