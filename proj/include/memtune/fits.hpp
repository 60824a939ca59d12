#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "memtune/core.hpp"
#include "memtune/dissipation.hpp"
#include "memtune/errors.hpp"

namespace memtune {

/// One row of a frequency-vs-power scan. sigma_f = 0 means "not measured".
struct PowerScanPoint {
  double power = 0.0;      ///< W
  double frequency = 0.0;  ///< Hz
  double sigma_f = 0.0;    ///< Hz
};

struct PowerScanData {
  std::vector<PowerScanPoint> rows;

  bool has_sigma() const { return !rows.empty() && rows.front().sigma_f > 0.0; }

  void validate() const {
    const bool sig = has_sigma();
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (!(rows[i].frequency > 0.0))
        throw spec_error("PowerScanData: frequencies must be positive");
      if (i > 0 && !(rows[i].power > rows[i - 1].power))
        throw spec_error("PowerScanData: powers must be strictly increasing");
      if (!(rows[i].sigma_f >= 0.0) || (rows[i].sigma_f > 0.0) != sig)
        throw spec_error("PowerScanData: sigma column must be all-positive or all-absent");
    }
  }
};

namespace detail {

/// Solves a (n x n, row-major) x = b by Gaussian elimination with partial
/// pivoting. Destroys its copies of the inputs.
inline std::vector<double> solve_linear(std::vector<double> a, std::vector<double> b, int n) {
  for (int col = 0; col < n; ++col) {
    int piv = col;
    for (int r = col + 1; r < n; ++r)
      if (std::abs(a[std::size_t(r) * n + col]) > std::abs(a[std::size_t(piv) * n + col]))
        piv = r;
    if (!(std::abs(a[std::size_t(piv) * n + col]) > 0.0))
      throw fit_error("solve_linear: singular matrix (rank-deficient design)");
    if (piv != col) {
      for (int c = 0; c < n; ++c)
        std::swap(a[std::size_t(piv) * n + c], a[std::size_t(col) * n + c]);
      std::swap(b[std::size_t(piv)], b[std::size_t(col)]);
    }
    const double d = a[std::size_t(col) * n + col];
    for (int r = col + 1; r < n; ++r) {
      const double m = a[std::size_t(r) * n + col] / d;
      if (m == 0.0) continue;
      for (int c = col; c < n; ++c) a[std::size_t(r) * n + c] -= m * a[std::size_t(col) * n + c];
      b[std::size_t(r)] -= m * b[std::size_t(col)];
    }
  }
  std::vector<double> x(std::size_t(n), 0.0);
  for (int r = n - 1; r >= 0; --r) {
    double s = b[std::size_t(r)];
    for (int c = r + 1; c < n; ++c) s -= a[std::size_t(r) * n + c] * x[std::size_t(c)];
    x[std::size_t(r)] = s / a[std::size_t(r) * n + r];
  }
  return x;
}

/// Inverse of a small (n x n, row-major) matrix via column solves.
inline std::vector<double> invert_dense(const std::vector<double>& a, int n) {
  std::vector<double> inv(std::size_t(n) * n);
  for (int c = 0; c < n; ++c) {
    std::vector<double> e(std::size_t(n), 0.0);
    e[std::size_t(c)] = 1.0;
    const std::vector<double> col = solve_linear(a, e, n);
    for (int r = 0; r < n; ++r) inv[std::size_t(r) * n + c] = col[std::size_t(r)];
  }
  return inv;
}

struct lm_outcome {
  std::vector<double> params;
  std::vector<double> jtj;  ///< at the solution, row-major p x p
  double cost = 0.0;        ///< sum of squared residuals
  std::size_t n_resid = 0;
};

/// Levenberg-Marquardt with forward-difference Jacobian and Marquardt
/// diagonal scaling. The residual callable maps params -> residual vector.
/// Callers should pre-scale parameters to O(1).
template <typename F>
lm_outcome levenberg_marquardt(F&& residuals, std::vector<double> p, int max_iter = 200) {
  const int np = int(p.size());
  std::vector<double> r = residuals(p);
  const std::size_t nr = r.size();
  if (nr < std::size_t(np)) throw fit_error("levenberg_marquardt: fewer residuals than parameters");
  auto cost_of = [](const std::vector<double>& v) {
    double c = 0.0;
    for (double x : v) c += x * x;
    return c;
  };
  double cost = cost_of(r);
  double lambda = 1e-3;
  std::vector<double> jac(nr * std::size_t(np));
  std::vector<double> jtj(std::size_t(np) * np), jtr(std::size_t(np), 0.0);

  for (int iter = 0; iter < max_iter; ++iter) {
    for (int j = 0; j < np; ++j) {
      std::vector<double> pj = p;
      const double h = 1e-7 * std::max(std::abs(pj[std::size_t(j)]), 1.0);
      pj[std::size_t(j)] += h;
      const std::vector<double> rj = residuals(pj);
      for (std::size_t i = 0; i < nr; ++i)
        jac[i * std::size_t(np) + std::size_t(j)] = (rj[i] - r[i]) / h;
    }
    for (int a = 0; a < np; ++a) {
      jtr[std::size_t(a)] = 0.0;
      for (int b = a; b < np; ++b) {
        double s = 0.0;
        for (std::size_t i = 0; i < nr; ++i)
          s += jac[i * std::size_t(np) + std::size_t(a)] * jac[i * std::size_t(np) + std::size_t(b)];
        jtj[std::size_t(a) * np + b] = s;
        jtj[std::size_t(b) * np + a] = s;
      }
      double s = 0.0;
      for (std::size_t i = 0; i < nr; ++i) s += jac[i * std::size_t(np) + std::size_t(a)] * r[i];
      jtr[std::size_t(a)] = s;
    }

    bool accepted = false;
    while (lambda <= 1e12) {
      std::vector<double> a = jtj;
      for (int d = 0; d < np; ++d) {
        const std::size_t dd = std::size_t(d) * np + d;
        a[dd] += lambda * std::max(jtj[dd], 1e-30);
      }
      std::vector<double> rhs(std::size_t(np), 0.0);
      for (int d = 0; d < np; ++d) rhs[std::size_t(d)] = -jtr[std::size_t(d)];
      std::vector<double> delta;
      try {
        delta = solve_linear(std::move(a), std::move(rhs), np);
      } catch (const fit_error&) {
        lambda *= 10.0;
        continue;
      }
      std::vector<double> p_try = p;
      for (int d = 0; d < np; ++d) p_try[std::size_t(d)] += delta[std::size_t(d)];
      const std::vector<double> r_try = residuals(p_try);
      const double cost_try = cost_of(r_try);
      if (cost_try < cost) {
        const double gain = cost - cost_try;
        p = std::move(p_try);
        r = r_try;
        cost = cost_try;
        lambda = std::max(lambda * 0.3, 1e-12);
        accepted = true;
        if (gain <= 1e-12 * std::max(cost, 1e-300) && iter >= 2) iter = max_iter;  // converged
        break;
      }
      lambda *= 10.0;
    }
    if (!accepted) break;  // gradient vanishes at current point: local minimum
  }
  return {std::move(p), jtj, cost, nr};
}

/// Linear-interpolated quantile of an unsorted sample, frac in [0, 1].
inline double quantile(std::vector<double> v, double frac) {
  std::sort(v.begin(), v.end());
  const double pos = frac * double(v.size() - 1);
  const std::size_t lo = std::size_t(pos);
  if (lo + 1 >= v.size()) return v.back();
  return v[lo] + (v[lo + 1] - v[lo]) * (pos - double(lo));
}

}  // namespace detail

/// fit_f_vs_p output: coefficients, their standard errors, and how far the
/// model strays from the data in frequency.
struct FrequencyFitReport {
  FitCoefficients coefficients;
  double sigma_a = 0.0;  ///< Hz^2
  double sigma_b = 0.0;  ///< Hz^2/W
  double sigma_c = 0.0;  ///< Hz^2/W^2
  double max_abs_residual = 0.0;  ///< Hz
  bool within_1khz = false;
};

/// Least squares of f(P) = sqrt(a + b P + c P^2), solved exactly on f^2
/// (linear in a, b, c) via 3x3 normal equations. When sigma_f is present the
/// weights are 1/(2 f sigma)^2, the propagated variance of f^2. Powers are
/// normalized by their maximum internally, which makes the result exactly
/// invariant under power-unit rescaling.
inline FrequencyFitReport fit_f_vs_p(const PowerScanData& data) {
  data.validate();
  const std::size_t n = data.rows.size();
  if (n < 4) throw spec_error("fit_f_vs_p: need at least 4 points");
  if (!(data.rows.back().frequency < data.rows.front().frequency))
    throw model_violation("fit_f_vs_p: frequency does not decrease over the scan");

  const double s = std::max(std::abs(data.rows.front().power), std::abs(data.rows.back().power));
  if (!(s > 0.0)) throw fit_error("fit_f_vs_p: degenerate power axis");
  const bool weighted = data.has_sigma();

  std::vector<double> m(9, 0.0), v(3, 0.0);
  for (const PowerScanPoint& row : data.rows) {
    const double u = row.power / s;
    const double y = row.frequency * row.frequency;
    double w = 1.0;
    if (weighted) {
      const double sy = 2.0 * row.frequency * row.sigma_f;
      w = 1.0 / (sy * sy);
    }
    const double pw[3] = {1.0, u, u * u};
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) m[std::size_t(a) * 3 + b] += w * pw[a] * pw[b];
      v[std::size_t(a)] += w * pw[a] * y;
    }
  }
  const std::vector<double> beta = detail::solve_linear(m, v, 3);

  FrequencyFitReport rep;
  rep.coefficients = {beta[0], beta[1] / s, beta[2] / (s * s)};
  if (!(rep.coefficients.a > 0.0))
    throw fit_error("fit_f_vs_p: fit produced non-positive a (no rest frequency)");

  double rss_w = 0.0;
  for (const PowerScanPoint& row : data.rows) {
    const double u = row.power / s;
    const double y_model = beta[0] + beta[1] * u + beta[2] * u * u;
    const double f_model = std::sqrt(std::max(y_model, 0.0));
    rep.max_abs_residual = std::max(rep.max_abs_residual, std::abs(f_model - row.frequency));
    const double ry = y_model - row.frequency * row.frequency;
    double w = 1.0;
    if (weighted) {
      const double sy = 2.0 * row.frequency * row.sigma_f;
      w = 1.0 / (sy * sy);
    }
    rss_w += w * ry * ry;
  }
  rep.within_1khz = rep.max_abs_residual <= 1000.0;

  const std::vector<double> cov = detail::invert_dense(m, 3);
  const double scale = weighted ? 1.0 : rss_w / double(n - 3);
  rep.sigma_a = std::sqrt(std::max(cov[0] * scale, 0.0));
  rep.sigma_b = std::sqrt(std::max(cov[4] * scale, 0.0)) / s;
  rep.sigma_c = std::sqrt(std::max(cov[8] * scale, 0.0)) / (s * s);
  return rep;
}

/// Result of the full thermal-parameter extraction pipeline.
struct ThermalParameters {
  double alpha0 = 0.0;  ///< 1/K
  double alpha1 = 0.0;  ///< 1/K^2
  double chi = 0.0;     ///< K/W
  FrequencyFitReport fit;
  bool curvature_sign_warning = false;  ///< fitted c >= 0, so alpha1 <= 0
};

/// The measurement chain of the tuning experiment: (1) alpha0 from the
/// holder-heating frequency shift, (2) (a, b, c) from the power scan,
/// (3) chi = -b S0 / (a E alpha0) and alpha1 = -c S0 / (a E chi^2) from the
/// coefficient mapping. `spec` supplies geometry, S0, E and the frame
/// expansion; its own alpha0/alpha1 entries are ignored (they are the
/// quantities being recovered).
inline ThermalParameters extract_thermal_parameters(const MembraneSpec& spec,
                                                    double holder_delta_T, double holder_delta_f,
                                                    const PowerScanData& scan) {
  spec.validate();
  ThermalParameters out;
  out.alpha0 = alpha0_from_global_heating(spec, holder_delta_T, holder_delta_f);
  if (!(out.alpha0 > 0.0))
    throw model_violation("extract_thermal_parameters: holder heating implies alpha0 <= 0");
  out.fit = fit_f_vs_p(scan);
  const double a = out.fit.coefficients.a;
  const double b = out.fit.coefficients.b;
  const double c = out.fit.coefficients.c;
  if (!(b < 0.0))
    throw model_violation("extract_thermal_parameters: fitted b >= 0, frequency does not fall "
                          "with power");
  const double s0 = spec.initial_stress;
  const double e = spec.youngs_modulus;
  out.chi = -b * s0 / (a * e * out.alpha0);
  out.alpha1 = -c * s0 / (a * e * out.chi * out.chi);
  out.curvature_sign_warning = c >= 0.0;
  return out;
}

/// One dissipation-spectrum sample.
struct QSpectrumPoint {
  double frequency = 0.0;  ///< Hz
  double q_inverse = 0.0;
};

/// One fitted Lorentzian peak. temp_shift is not identifiable from a single
/// spectrum and is left 0.
struct PeakFit {
  FrameMode mode;
  double local_baseline = 0.0;  ///< Q^-1 floor under this peak
  std::array<std::array<double, 3>, 3> covariance{};  ///< over (f', gamma, g)
};

struct QSpectrumFit {
  double baseline_q = 0.0;
  std::vector<PeakFit> peaks;  ///< sorted by rest_frequency

  FrameModel model() const {
    FrameModel fm;
    fm.baseline_q = baseline_q;
    for (const PeakFit& p : peaks) fm.modes.push_back(p.mode);
    fm.sort_modes();
    return fm;
  }
};

/// Decomposes a measured Q^-1(f) spectrum into baseline plus Lorentzian
/// peaks. Baseline = 5th percentile of Q^-1; peaks = contiguous runs above
/// 3x baseline; each peak is refined by Levenberg-Marquardt on relative
/// residuals with parameters (f0, ln gamma, ln g, ln local_baseline).
inline QSpectrumFit fit_q_spectrum(std::vector<QSpectrumPoint> points) {
  if (points.size() < 10) throw spec_error("fit_q_spectrum: need at least 10 points");
  std::sort(points.begin(), points.end(),
            [](const QSpectrumPoint& a, const QSpectrumPoint& b) {
              return a.frequency < b.frequency;
            });
  const std::size_t n = points.size();
  std::vector<double> qv(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(points[i].frequency > 0.0))
      throw spec_error("fit_q_spectrum: frequencies must be positive");
    if (!(points[i].q_inverse > 0.0))
      throw spec_error("fit_q_spectrum: Q^-1 values must be positive");
    qv[i] = points[i].q_inverse;
  }

  const double baseline_inv = detail::quantile(qv, 0.05);
  const double threshold = 3.0 * baseline_inv;
  std::size_t below = 0;
  for (double q : qv)
    if (q <= threshold) ++below;
  if (double(below) < 0.25 * double(n))
    throw fit_error("fit_q_spectrum: no baseline region identifiable");

  // Contiguous runs above threshold are candidate peaks.
  std::vector<std::pair<std::size_t, std::size_t>> runs;  // [first, last] inclusive
  std::vector<int> run_of(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    if (qv[i] <= threshold) continue;
    if (!runs.empty() && runs.back().second + 1 == i)
      runs.back().second = i;
    else
      runs.push_back({i, i});
    run_of[i] = int(runs.size()) - 1;
  }

  QSpectrumFit out;
  out.baseline_q = 1.0 / baseline_inv;

  for (std::size_t k = 0; k < runs.size(); ++k) {
    const auto [first, last] = runs[k];
    // A candidate peak needs at least 3 samples; shorter excursions are noise
    // fragments, not resonances, and are left out of the model.
    if (last - first + 1 < 3) continue;

    // Reject runs holding a second comparably tall, prominent maximum: those
    // peaks overlap above threshold and cannot be separated by this
    // estimator. Both clauses guard against noise wiggles on a single peak.
    std::size_t peak_idx = first;
    for (std::size_t i = first; i <= last; ++i)
      if (qv[i] > qv[peak_idx]) peak_idx = i;
    for (std::size_t i = first + 1; i < last; ++i) {
      if (i == peak_idx || !(qv[i] > qv[i - 1] && qv[i] >= qv[i + 1])) continue;
      if (!(qv[i] - baseline_inv > 0.25 * (qv[peak_idx] - baseline_inv))) continue;
      double valley = qv[i];
      const std::size_t lo = std::min(i, peak_idx), hi = std::max(i, peak_idx);
      for (std::size_t j = lo; j <= hi; ++j) valley = std::min(valley, qv[j]);
      if (qv[i] - valley > 0.25 * (qv[i] - baseline_inv))
        throw model_violation("fit_q_spectrum: overlapping peaks beyond separability near f = " +
                              std::to_string(points[peak_idx].frequency) + " Hz");
    }

    const double f0_init = points[peak_idx].frequency;
    const double height = qv[peak_idx] - baseline_inv;
    const double half_target = baseline_inv + 0.5 * height;
    auto cross = [&](bool leftward) {
      std::size_t i = peak_idx;
      while (true) {
        const std::size_t next = leftward ? i - 1 : i + 1;
        if ((leftward && i == 0) || (!leftward && i == n - 1)) return points[i].frequency;
        if (run_of[next] >= 0 && run_of[next] != int(k)) return points[i].frequency;
        if (qv[next] < half_target) {
          const double t = (qv[i] - half_target) / (qv[i] - qv[next]);
          return points[i].frequency + t * (points[next].frequency - points[i].frequency);
        }
        i = next;
      }
    };
    const double f_lo = cross(true), f_hi = cross(false);
    double gamma_init = f_hi - f_lo;
    if (!(gamma_init > 0.0)) gamma_init = points[last].frequency - points[first].frequency;
    const double g_init = 0.5 * std::sqrt(height * gamma_init * f0_init);

    // Fit window: +-8 gamma around the peak, excluding other peaks' runs.
    std::vector<std::size_t> win;
    for (std::size_t i = 0; i < n; ++i) {
      if (std::abs(points[i].frequency - f0_init) > 8.0 * gamma_init) continue;
      if (run_of[i] >= 0 && run_of[i] != int(k)) continue;
      win.push_back(i);
    }
    if (win.size() < 6)
      throw fit_error("fit_q_spectrum: not enough samples around the peak at f = " +
                      std::to_string(f0_init) + " Hz");

    // Scaled parameters p = (x0, ln-ratio gamma, ln-ratio g, ln-ratio qb).
    auto natural = [&](const std::vector<double>& p) {
      return std::array<double, 4>{f0_init + p[0] * gamma_init, gamma_init * std::exp(p[1]),
                                   g_init * std::exp(p[2]), baseline_inv * std::exp(p[3])};
    };
    auto resid = [&](const std::vector<double>& p) {
      const auto [f0, gamma, g, qb] = natural(p);
      std::vector<double> r(win.size());
      for (std::size_t i = 0; i < win.size(); ++i) {
        const double f = points[win[i]].frequency;
        const double df = f - f0;
        const double model = qb + g * g * gamma / ((df * df + 0.25 * gamma * gamma) * f);
        r[i] = model / points[win[i]].q_inverse - 1.0;
      }
      return r;
    };
    const detail::lm_outcome lm = detail::levenberg_marquardt(resid, {0.0, 0.0, 0.0, 0.0});
    const auto [f0, gamma, g, qb] = natural(lm.params);
    if (!(f0 > 0.0))
      throw fit_error("fit_q_spectrum: peak fit diverged to non-positive frequency");

    PeakFit peak;
    peak.mode = {f0, gamma, g, 0.0};
    peak.local_baseline = qb;
    const std::size_t dof = lm.n_resid > 4 ? lm.n_resid - 4 : 1;
    const double var_scale = lm.cost / double(dof);
    const std::vector<double> cov_p = detail::invert_dense(lm.jtj, 4);
    const double t[3] = {gamma_init, gamma, g};  // d(natural)/d(scaled) diagonal
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b)
        peak.covariance[std::size_t(a)][std::size_t(b)] =
            t[a] * t[b] * cov_p[std::size_t(a) * 4 + std::size_t(b)] * var_scale;
    out.peaks.push_back(peak);
  }

  std::sort(out.peaks.begin(), out.peaks.end(), [](const PeakFit& a, const PeakFit& b) {
    return a.mode.rest_frequency < b.mode.rest_frequency;
  });
  return out;
}

}  // namespace memtune
