#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include <memtune/ringdown.hpp>

using namespace memtune;

namespace {

double rel_err(double x, double ref) { return std::abs(x - ref) / std::abs(ref); }

/// Phase-free amplitude of a damped sinusoid at sample k, reconstructed from
/// two adjacent samples: with x_k = A sin(theta), x_{k+1} = A rho sin(theta +
/// omega dt), A^2 = x_k^2 + ((x_{k+1}/rho - x_k cos) / sin)^2.
double two_sample_amplitude(const RingdownTrace& trace, std::size_t k, double tau) {
  const double dt = 1.0 / trace.sample_rate;
  const double c = std::cos(2.0 * M_PI * trace.drive_frequency * dt);
  const double s = std::sin(2.0 * M_PI * trace.drive_frequency * dt);
  const double rho = std::exp(-dt / tau);
  const double x0 = trace.samples[k];
  const double x1 = trace.samples[k + 1];
  return std::hypot(x0, (x1 / rho - x0 * c) / s);
}

}  // namespace

TEST_CASE("synthesized envelope hits amp0/e after exactly one tau") {
  const double f = 428e3, q = 3.2e5, amp0 = 1e-9;
  const double tau = q / (M_PI * f);
  const double fs = 1e6 / tau;  // sample 1e6 lands at t = tau
  const RingdownTrace trace = synthesize_ringdown(f, q, amp0, 0.0, fs, 3.2 * tau, 1);

  CHECK(rel_err(two_sample_amplitude(trace, 1000000, tau), amp0 / M_E) < 1e-9);
  CHECK(rel_err(two_sample_amplitude(trace, 2000000, tau), amp0 / (M_E * M_E)) < 1e-9);
  CHECK(rel_err(two_sample_amplitude(trace, 0, tau), amp0) < 1e-9);
  CHECK_FALSE(trace.short_record);
  CHECK(trace.duration() == Catch::Approx(3.2 * tau).epsilon(1e-6));
}

TEST_CASE("noise floor scales to the advertised per-sample sigma") {
  const double fs = 1e6, nf = 1e-14;
  const RingdownTrace trace = synthesize_ringdown(300e3, 10.0, 0.0, nf, fs, 1.0, 7);
  const double sigma_expect = nf * std::sqrt(fs / 2.0);
  double sum = 0.0, sum2 = 0.0;
  for (double x : trace.samples) {
    sum += x;
    sum2 += x * x;
  }
  const double n = double(trace.samples.size());
  const double var = sum2 / n - (sum / n) * (sum / n);
  CHECK(rel_err(var, sigma_expect * sigma_expect) < 0.05);
  CHECK(std::abs(sum / n) < 5.0 * sigma_expect / std::sqrt(n));
}

TEST_CASE("synthesis is deterministic in the seed") {
  const RingdownTrace a = synthesize_ringdown(260e3, 1e5, 1e-9, 1e-14, 1.04e6, 0.05, 42);
  const RingdownTrace b = synthesize_ringdown(260e3, 1e5, 1e-9, 1e-14, 1.04e6, 0.05, 42);
  const RingdownTrace c = synthesize_ringdown(260e3, 1e5, 1e-9, 1e-14, 1.04e6, 0.05, 43);
  CHECK(a.samples == b.samples);
  CHECK(a.samples != c.samples);
}

TEST_CASE("synthesis rejects undersampled or too-short records") {
  CHECK_THROWS_AS(synthesize_ringdown(428e3, 3.2e5, 1e-9, 0.0, 2.0 * 428e3, 1.0, 0), spec_error);
  CHECK_THROWS_AS(synthesize_ringdown(428e3, 3.2e5, 1e-9, 0.0, 1.2e6, 5.0 / 428e3, 0),
                  spec_error);
  CHECK_THROWS_AS(synthesize_ringdown(428e3, 0.5, 1e-9, 0.0, 1.2e6, 1.0, 0), spec_error);
  const RingdownTrace brief = synthesize_ringdown(428e3, 3.2e5, 1e-9, 0.0, 1.2e6, 0.05, 0);
  CHECK(brief.short_record);  // 0.05 s << 3 tau = 0.71 s
}

TEST_CASE("extract_q recovers tau on a clean trace") {
  const double f = 428e3, q = 3.2e5;
  const double tau = q / (M_PI * f);
  const RingdownTrace trace = synthesize_ringdown(f, q, 1e-9, 0.0, 1.2e6, 3.0 * tau, 5);
  const RingdownResult res = extract_q(trace);
  CHECK(rel_err(res.tau, tau) < 1e-4);
  CHECK(rel_err(res.refined_frequency, f) < 1e-7);
  CHECK(rel_err(res.quality_factor, q) < 2e-4);
  // Q = pi f tau holds exactly as stored.
  CHECK(res.quality_factor == M_PI * res.refined_frequency * res.tau);
  CHECK(res.fit_window.first < res.fit_window.last);
  CHECK(res.fit_window.last <= trace.samples.size());
}

TEST_CASE("extract_q stays within 1% through realistic noise") {
  const double f = 260e3, q = 1e6;
  const double tau = q / (M_PI * f);
  for (std::uint64_t seed : {11, 12, 13, 14, 15}) {
    const RingdownTrace trace = synthesize_ringdown(f, q, 1e-9, 1e-14, 1.04e6, 2.5 * tau, seed);
    const RingdownResult res = extract_q(trace);
    INFO("seed " << seed << ": Q = " << res.quality_factor);
    CHECK(rel_err(res.quality_factor, q) < 0.01);
    CHECK(res.tau_uncertainty > 0.0);
    CHECK(res.tau_uncertainty < 0.01 * res.tau);
  }
}

TEST_CASE("extract_q tolerates a 1% drive-frequency error") {
  const double f = 428e3, q = 3.2e5;
  const double tau = q / (M_PI * f);
  RingdownTrace trace = synthesize_ringdown(f, q, 1e-9, 0.0, 1.2e6, 3.0 * tau, 21);
  trace.drive_frequency *= 1.01;  // resonance only known approximately
  const RingdownResult res = extract_q(trace);
  CHECK(rel_err(res.refined_frequency, f) < 1e-6);
  CHECK(rel_err(res.quality_factor, q) < 0.01);
}

TEST_CASE("extract_q rejects a non-decaying trace") {
  RingdownTrace trace;
  trace.sample_rate = 1.04e6;
  trace.drive_frequency = 260e3;
  trace.initial_amplitude = 1e-9;
  trace.noise_floor = 0.0;
  trace.samples.resize(104000);
  for (std::size_t k = 0; k < trace.samples.size(); ++k)
    trace.samples[k] = 1e-9 * std::sin(2.0 * M_PI * 260e3 * double(k) / 1.04e6);
  CHECK_THROWS_AS(extract_q(trace), fit_error);
}

TEST_CASE("extract_q flags beating as a model violation") {
  const double f = 260e3, fs = 1.04e6, tau = 0.05;
  RingdownTrace trace;
  trace.sample_rate = fs;
  trace.drive_frequency = f;
  trace.initial_amplitude = 1e-9;
  trace.noise_floor = 0.0;
  trace.samples.resize(std::size_t(0.2 * fs));
  for (std::size_t k = 0; k < trace.samples.size(); ++k) {
    const double t = double(k) / fs;
    trace.samples[k] = 1e-9 * std::exp(-t / tau) *
                       (std::sin(2.0 * M_PI * f * t) + 0.3 * std::sin(2.0 * M_PI * (f + 50.0) * t));
  }
  CHECK_THROWS_AS(extract_q(trace), model_violation);
}

TEST_CASE("extract_q reports hopeless SNR as a fit error") {
  const RingdownTrace trace = synthesize_ringdown(260e3, 1e5, 1e-12, 1e-12, 1.04e6, 0.5, 3);
  CHECK_THROWS_AS(extract_q(trace), fit_error);
}

TEST_CASE("extract_q needs enough samples to demodulate") {
  // Legal record (10 periods) that is still far too short to filter.
  const RingdownTrace trace = synthesize_ringdown(400e3, 1e4, 1e-9, 0.0, 1.04e6, 11.0 / 400e3, 9);
  CHECK_THROWS_AS(extract_q(trace), fit_error);
}
