#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "memtune/errors.hpp"

namespace memtune {

/// Raw interferometer record of a mechanical ring-down.
struct RingdownTrace {
  std::vector<double> samples;     ///< m
  double sample_rate = 0.0;        ///< Hz
  double drive_frequency = 0.0;    ///< Hz, resonance known to ~1%
  double initial_amplitude = 0.0;  ///< m
  double noise_floor = 0.0;        ///< m/sqrt(Hz)
  bool short_record = false;       ///< set at synthesis when duration < 3 tau

  double duration() const { return double(samples.size()) / sample_rate; }

  void validate() const {
    if (!(drive_frequency > 0.0)) throw spec_error("RingdownTrace: drive_frequency must be > 0");
    if (!(sample_rate > 2.5 * drive_frequency))
      throw spec_error("RingdownTrace: sample_rate must exceed 2.5 x drive_frequency");
    if (!(initial_amplitude >= 0.0))
      throw spec_error("RingdownTrace: initial_amplitude must be >= 0");
    if (!(noise_floor >= 0.0)) throw spec_error("RingdownTrace: noise_floor must be >= 0");
    if (double(samples.size()) * drive_frequency < 10.0 * sample_rate)
      throw spec_error("RingdownTrace: record shorter than 10 oscillation periods");
  }
};

/// Raw-sample index range used by the envelope fit (inclusive).
struct FitWindow {
  std::size_t first = 0;
  std::size_t last = 0;
};

struct RingdownResult {
  double tau = 0.0;                ///< s
  double tau_uncertainty = 0.0;    ///< s, standard error
  double quality_factor = 0.0;     ///< pi * refined_frequency * tau
  double refined_frequency = 0.0;  ///< Hz
  FitWindow fit_window;
};

namespace detail {

/// Deterministic Gaussian stream: explicit uniforms from mt19937_64 plus the
/// Marsaglia polar transform, so traces are bit-identical across platforms
/// (std::normal_distribution is implementation-defined).
class gaussian_stream {
 public:
  explicit gaussian_stream(std::uint64_t seed) : eng_(seed) {}

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return double(eng_() >> 11) * 0x1.0p-53; }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double v1, v2, s;
    do {
      v1 = 2.0 * uniform() - 1.0;
      v2 = 2.0 * uniform() - 1.0;
      s = v1 * v1 + v2 * v2;
    } while (s >= 1.0 || s == 0.0);
    const double fac = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v2 * fac;
    has_spare_ = true;
    return v1 * fac;
  }

 private:
  std::mt19937_64 eng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

struct line_fit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_var = 0.0;  ///< scaled by reduced chi^2
  double chi2_dof = 0.0;
  double max_abs_resid = 0.0;
};

inline line_fit weighted_line_fit(const std::vector<double>& t, const std::vector<double>& y,
                                  const std::vector<double>& w, std::size_t n) {
  double sw = 0.0, st = 0.0, sy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sw += w[i];
    st += w[i] * t[i];
    sy += w[i] * y[i];
  }
  if (!(sw > 0.0)) throw fit_error("weighted_line_fit: non-positive weight sum");
  const double tb = st / sw, yb = sy / sw;
  double stt = 0.0, sty = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dt = t[i] - tb;
    stt += w[i] * dt * dt;
    sty += w[i] * dt * (y[i] - yb);
  }
  if (!(stt > 0.0)) throw fit_error("weighted_line_fit: degenerate time axis");
  line_fit lf;
  lf.slope = sty / stt;
  lf.intercept = yb - lf.slope * tb;
  double chi2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = y[i] - (lf.intercept + lf.slope * t[i]);
    chi2 += w[i] * r * r;
    lf.max_abs_resid = std::max(lf.max_abs_resid, std::abs(r));
  }
  lf.chi2_dof = chi2 / double(n > 2 ? n - 2 : 1);
  lf.slope_var = lf.chi2_dof / stt;
  return lf;
}

}  // namespace detail

/// Damped sinusoid plus white interferometer noise:
/// x(t) = amp0 e^{-t/tau} sin(2 pi f t + phi0) + n(t), tau = Q / (pi f).
/// phi0 and n(t) come from a seeded generator; fixed seed gives bit-identical
/// traces. The per-sample noise std is noise_floor * sqrt(sample_rate / 2).
inline RingdownTrace synthesize_ringdown(double f, double q, double amp0, double noise_floor,
                                         double sample_rate, double duration,
                                         std::uint64_t seed) {
  if (!(f > 0.0)) throw spec_error("synthesize_ringdown: f must be > 0");
  if (!(q > 1.0)) throw spec_error("synthesize_ringdown: Q must be > 1");
  if (!(amp0 >= 0.0)) throw spec_error("synthesize_ringdown: amp0 must be >= 0");
  if (!(noise_floor >= 0.0)) throw spec_error("synthesize_ringdown: noise_floor must be >= 0");
  if (!(sample_rate > 2.5 * f))
    throw spec_error("synthesize_ringdown: sample_rate must exceed 2.5 x f");
  if (!(duration > 0.0)) throw spec_error("synthesize_ringdown: duration must be > 0");

  const double tau = q / (M_PI * f);
  RingdownTrace trace;
  trace.sample_rate = sample_rate;
  trace.drive_frequency = f;
  trace.initial_amplitude = amp0;
  trace.noise_floor = noise_floor;
  trace.short_record = duration < 3.0 * tau;
  trace.samples.resize(std::size_t(duration * sample_rate));

  detail::gaussian_stream rng(seed);
  const double phi0 = 2.0 * M_PI * rng.uniform();
  const double sigma = noise_floor * std::sqrt(sample_rate / 2.0);
  // Per-sample phasor recurrence, re-anchored periodically against drift.
  const std::complex<double> step =
      std::exp(std::complex<double>(-1.0 / (tau * sample_rate), 2.0 * M_PI * f / sample_rate));
  std::complex<double> c;
  const std::size_t n = trace.samples.size();
  for (std::size_t k = 0; k < n; ++k) {
    if (k % 4096 == 0) {
      const double t = double(k) / sample_rate;
      c = std::polar(std::exp(-t / tau), 2.0 * M_PI * std::fmod(f * t, 1.0) + phi0);
    }
    double x = amp0 * c.imag();
    if (sigma > 0.0) x += sigma * rng.normal();
    trace.samples[k] = x;
    c *= step;
  }
  trace.validate();
  return trace;
}

/// Lock-in style decay-time extraction:
///  1. quadrature mixing at the nominal drive frequency, boxcar decimation
///     (factor chosen so the aliased 2f image stays clear of the passband),
///     then a windowed-sinc low-pass with cutoff f/20;
///  2. two phase-slope passes refine the drive frequency;
///  3. weighted regression of the debiased log-envelope over the window where
///     the envelope exceeds 5x the demodulated noise floor, with weights
///     re-derived from the fitted model (not the noisy data) to avoid
///     weight-residual correlation bias.
inline RingdownResult extract_q(const RingdownTrace& trace) {
  trace.validate();
  const double fs = trace.sample_rate;
  const double f0 = trace.drive_frequency;
  const double fc = f0 / 20.0;
  const std::size_t n = trace.samples.size();

  // Decimation factor targeting fs1 ~ 8 fc; reject factors that alias the 2f
  // mixing image to within 3 fc of DC. d1 = 1 always qualifies.
  int d1 = std::max(1, int(2.5 * fs / f0));
  for (; d1 > 1; --d1) {
    const double fs1_try = fs / d1;
    const double a = std::fmod(2.0 * f0, fs1_try);
    if (std::min(a, fs1_try - a) >= 3.0 * fc) break;
  }
  const double fs1 = fs / d1;

  const std::size_t len1 = n / std::size_t(d1);
  if (len1 < 24) throw fit_error("extract_q: record too short to demodulate");

  // Mix to baseband and boxcar-average d1 samples at a time.
  std::vector<std::complex<double>> z1(len1);
  {
    const std::complex<double> step = std::polar(1.0, -2.0 * M_PI * f0 / fs);
    std::complex<double> ph;
    std::complex<double> acc{0.0, 0.0};
    const std::size_t used = len1 * std::size_t(d1);
    for (std::size_t k = 0; k < used; ++k) {
      if (k % 4096 == 0)
        ph = std::polar(1.0, -2.0 * M_PI * std::fmod(f0 * (double(k) / fs), 1.0));
      acc += trace.samples[k] * ph;
      ph *= step;
      if ((k + 1) % std::size_t(d1) == 0) {
        z1[(k + 1) / std::size_t(d1) - 1] = acc / double(d1);
        acc = {0.0, 0.0};
      }
    }
  }

  // Hamming windowed-sinc low-pass, unit DC gain.
  int taps = 101;
  if (len1 < std::size_t(taps) + 12) taps = int(len1) - 12;
  if (taps % 2 == 0) --taps;
  if (taps < 5) throw fit_error("extract_q: record too short for the demodulation filter");
  std::vector<double> h(std::size_t(taps), 0.0);
  {
    double sum = 0.0;
    for (int k = 0; k < taps; ++k) {
      const double m = k - 0.5 * (taps - 1);
      const double x = 2.0 * fc / fs1 * m;
      const double sinc = x == 0.0 ? 1.0 : std::sin(M_PI * x) / (M_PI * x);
      h[std::size_t(k)] = sinc * (0.54 - 0.46 * std::cos(2.0 * M_PI * k / (taps - 1)));
      sum += h[std::size_t(k)];
    }
    for (double& v : h) v /= sum;
  }
  double h2 = 0.0;
  for (double v : h) h2 += v * v;

  const std::size_t len2 = len1 - std::size_t(taps) + 1;
  std::vector<std::complex<double>> z2(len2);
  for (std::size_t j = 0; j < len2; ++j) {
    std::complex<double> s{0.0, 0.0};
    for (int k = 0; k < taps; ++k) s += h[std::size_t(k)] * z1[j + std::size_t(k)];
    z2[j] = s;
  }
  std::vector<double> t2(len2);
  for (std::size_t j = 0; j < len2; ++j)
    t2[j] = (double(j) + 0.5 * (taps - 1)) * d1 / fs + (d1 - 1) / (2.0 * fs);

  // Demodulated noise level: env = 2|z| of pure noise has E[env^2] = N^2.
  const double sigma = trace.noise_floor * std::sqrt(fs / 2.0);
  const double var_quad = sigma * sigma / 2.0 / d1 * h2;
  const double noise_env = std::sqrt(8.0 * var_quad);

  std::vector<double> env(len2), e2(len2);
  for (std::size_t j = 0; j < len2; ++j) {
    env[j] = 2.0 * std::abs(z2[j]);
    e2[j] = std::max(env[j] * env[j] - noise_env * noise_env, 1e-300);
  }

  // Fit window: leading run with envelope above 5x the noise level.
  std::size_t w_end = 0;
  while (w_end < len2 && env[w_end] > 5.0 * noise_env) ++w_end;
  if (noise_env == 0.0) w_end = len2;
  if (w_end < 12) throw fit_error("extract_q: SNR too low for any valid fit window");

  std::vector<double> wgt(w_end);
  for (std::size_t j = 0; j < w_end; ++j)
    wgt[j] = noise_env > 0.0 ? e2[j] / (noise_env * noise_env) : 1.0;

  // Frequency refinement: residual detuning appears as a linear phase ramp.
  double f_hat = f0;
  for (int pass = 0; pass < 2; ++pass) {
    std::vector<double> phi(w_end);
    double prev = std::arg(z2[0]);
    double accum = prev;
    phi[0] = accum;
    for (std::size_t j = 1; j < w_end; ++j) {
      const double a = std::arg(z2[j]);
      double d = a - prev;
      d -= 2.0 * M_PI * std::round(d / (2.0 * M_PI));
      accum += d;
      prev = a;
      phi[j] = accum;
    }
    const detail::line_fit pf = detail::weighted_line_fit(t2, phi, wgt, w_end);
    const double df = pf.slope / (2.0 * M_PI);
    f_hat += df;
    for (std::size_t j = 0; j < len2; ++j) z2[j] *= std::polar(1.0, -2.0 * M_PI * df * t2[j]);
  }

  // Debiased log-envelope with a Jensen correction for log of a noisy square.
  std::vector<double> y(w_end);
  for (std::size_t j = 0; j < w_end; ++j)
    y[j] = 0.5 * std::log(e2[j]) + noise_env * noise_env / (8.0 * e2[j]);

  detail::line_fit lf;
  for (int it = 0; it < 3; ++it) {
    lf = detail::weighted_line_fit(t2, y, wgt, w_end);
    if (noise_env == 0.0) break;
    for (std::size_t j = 0; j < w_end; ++j)
      wgt[j] = std::exp(2.0 * (lf.intercept + lf.slope * t2[j])) /
               (noise_env * noise_env);
  }

  if (!(lf.slope < 0.0) || -1.0 / lf.slope > 1e4 * trace.duration())
    throw fit_error("extract_q: envelope does not decay (tau out of range)");
  // Clean traces give reduced chi^2 ~ 0.25 with these weights (weights are
  // 1/4 of the exact inverse variance); beating inflates it by orders of
  // magnitude. Noiseless traces are judged on the absolute residual instead.
  if (noise_env > 0.0) {
    if (lf.chi2_dof > 2.5)
      throw model_violation("extract_q: non-monotone envelope (beating or multi-mode "
                            "contamination)");
  } else if (lf.max_abs_resid > 1e-2) {
    throw model_violation("extract_q: non-monotone envelope (beating or multi-mode "
                          "contamination)");
  }

  RingdownResult res;
  res.tau = -1.0 / lf.slope;
  res.tau_uncertainty = std::sqrt(std::max(lf.slope_var, 0.0)) * res.tau * res.tau;
  res.refined_frequency = f_hat;
  res.quality_factor = M_PI * f_hat * res.tau;
  res.fit_window.first = std::size_t(t2[0] * fs + 0.5);
  res.fit_window.last = std::size_t(t2[w_end - 1] * fs + 0.5);
  return res;
}

}  // namespace memtune
