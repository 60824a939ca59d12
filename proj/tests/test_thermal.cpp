#include <catch_amalgamated.hpp>

#include <cmath>

#include <memtune/presets.hpp>
#include <memtune/thermal.hpp>

using namespace memtune;

namespace {

double rel_err(double x, double ref) { return std::abs(x - ref) / std::abs(ref); }

/// Independent oracle for chi of a centered Gaussian beam: double sine series
/// of the heat equation on the square. Only odd (m, n) terms survive; the
/// Gaussian's Fourier coefficients are analytic as long as the tails are
/// negligible at the frame (containment >= 0.99 guarantees that here).
double chi_series(const MembraneSpec& spec, double beam_diameter) {
  const double l = spec.side_length;
  const double w = 0.5 * beam_diameter;
  double sum = 0.0;
  for (int m = 39; m >= 1; m -= 2) {
    for (int n = 39; n >= 1; n -= 2) {
      const double sm = (m % 4 == 1) ? 1.0 : -1.0;  // sin(m pi / 2)
      const double sn = (n % 4 == 1) ? 1.0 : -1.0;
      const double mn2 = double(m) * m + double(n) * n;
      sum += sm * sn * std::exp(-mn2 * M_PI * M_PI * w * w / (8.0 * l * l)) /
             (double(m) * n * mn2);
    }
  }
  return 16.0 * spec.absorption_fraction /
         (M_PI * M_PI * M_PI * M_PI * spec.heat_conductivity * spec.thickness) * sum;
}

}  // namespace

TEST_CASE("Poisson solver reproduces a discrete-exact eigenfunction") {
  // For u = sin(pi x / L) sin(pi y / L) on the grid, the 5-point Laplacian is
  // exactly lambda_h u with lambda_h = 2 (2 - 2 cos(pi h / L)) / h^2, so the
  // solver must return u to its own tolerance, not just to O(h^2).
  const int n = 41;
  const double l = 1.0;
  const double h = l / (n - 1);
  const double lambda_h = 2.0 * (2.0 - 2.0 * std::cos(M_PI * h / l)) / (h * h);
  auto u_exact = [&](int i, int j) {
    return std::sin(M_PI * i * h / l) * std::sin(M_PI * j * h / l);
  };
  const std::vector<double> u = detail::solve_dirichlet_poisson(
      n, h, [&](int i, int j) { return lambda_h * u_exact(i, j); });
  double max_err = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      max_err = std::max(max_err, std::abs(u[std::size_t(i) * n + j] - u_exact(i, j)));
  CHECK(max_err < 1e-10);
}

TEST_CASE("Poisson solver converges at second order on a smooth problem") {
  const double l = 1.0;
  auto solve_err = [&](int n) {
    const double h = l / (n - 1);
    auto u_exact = [&](int i, int j) {
      return std::sin(M_PI * i * h / l) * std::sin(M_PI * j * h / l);
    };
    const std::vector<double> u = detail::solve_dirichlet_poisson(
        n, h, [&](int i, int j) { return 2.0 * M_PI * M_PI / (l * l) * u_exact(i, j); });
    double max_err = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        max_err = std::max(max_err, std::abs(u[std::size_t(i) * n + j] - u_exact(i, j)));
    return max_err;
  };
  const double e65 = solve_err(65);
  const double e129 = solve_err(129);
  CHECK(e65 < 1e-3);
  const double order = std::log2(e65 / e129);
  CHECK(order > 1.8);
  CHECK(order < 2.2);
}

TEST_CASE("chi of the centered beam matches the sine-series oracle") {
  const MembraneSpec spec = preset_membrane("t1_500");
  const BeamSpec beam;  // 350 um, centered
  const double chi_fd = chi_of_beam(spec, beam, {201}).chi;
  const double chi_ref = chi_series(spec, beam.diameter_e2);
  INFO("FD chi = " << chi_fd << " K/W, series chi = " << chi_ref << " K/W");
  CHECK(rel_err(chi_fd, chi_ref) < 2e-3);
  // Scale check: about 0.59 K/mW for this membrane and beam.
  CHECK(chi_fd * 1e-3 == Catch::Approx(0.585).margin(0.01));
}

TEST_CASE("chi is stable under grid refinement") {
  const MembraneSpec spec = preset_membrane("t1_500");
  const BeamSpec beam;
  const double coarse = chi_of_beam(spec, beam, {101}).chi;
  const double fine = chi_of_beam(spec, beam, {201}).chi;
  CHECK(rel_err(coarse, fine) < 0.01);
}

TEST_CASE("heating is linear in power") {
  const MembraneSpec spec = preset_membrane("t1_500");
  const BeamSpec beam;
  const ThermalGrid grid{61};
  const TemperatureField one = solve_heating(spec, beam, 1.0, grid);
  const TemperatureField two = solve_heating(spec, beam, 2.0, grid);
  // Doubling the power doubles the source exactly (scaling by 2 is exact in
  // floating point), so the whole solve scales bitwise.
  REQUIRE(one.values.size() == two.values.size());
  for (std::size_t k = 0; k < one.values.size(); ++k)
    CHECK(two.values[k] == 2.0 * one.values[k]);
}

TEST_CASE("temperature field peaks at the beam and vanishes at the frame") {
  const MembraneSpec spec = preset_membrane("t1_500");
  const TemperatureField field = solve_heating(spec, BeamSpec{}, 1.0, {61});
  const int n = field.n;
  for (int i = 0; i < n; ++i) {
    CHECK(field.at(i, 0) == 0.0);
    CHECK(field.at(i, n - 1) == 0.0);
    CHECK(field.at(0, i) == 0.0);
    CHECK(field.at(n - 1, i) == 0.0);
  }
  CHECK(field.max() > field.average());
  CHECK(field.average() > 0.0);
  // Centered beam: the hottest node is the central one.
  const int c = n / 2;
  CHECK(field.max() == field.at(c, c));
}

TEST_CASE("beam containment gates the solve") {
  const MembraneSpec spec = preset_membrane("t1_500");
  SECTION("beam centered on the frame edge") {
    BeamSpec beam;
    beam.center_x = 0.5 * spec.side_length;
    CHECK(beam.containment(spec.side_length) < 0.99);
    CHECK_THROWS_AS(solve_heating(spec, beam, 1.0, {61}), spec_error);
  }
  SECTION("beam as wide as the membrane") {
    BeamSpec beam;
    beam.diameter_e2 = spec.side_length;
    CHECK_THROWS_AS(solve_heating(spec, beam, 1.0, {61}), spec_error);
  }
  SECTION("default beam is comfortably contained") {
    CHECK(BeamSpec{}.containment(spec.side_length) >= 0.99);
  }
  SECTION("grid too coarse") {
    CHECK_THROWS_AS(solve_heating(spec, BeamSpec{}, 1.0, {8}), spec_error);
  }
}

TEST_CASE("absorption inversion round-trips through chi") {
  const MembraneSpec spec = preset_membrane("t1_500");
  const BeamSpec beam;
  const ThermalGrid grid{101};
  const double chi = chi_of_beam(spec, beam, grid).chi;
  const double a = absorption_from_chi(spec, beam, chi, grid);
  CHECK(rel_err(a, spec.absorption_fraction) < 1e-12);

  // chi larger than full absorption could produce is unreachable.
  const double chi_full = chi / spec.absorption_fraction;
  CHECK_THROWS_AS(absorption_from_chi(spec, beam, 2.0 * chi_full, grid), model_violation);
}

TEST_CASE("moving the beam toward the frame lowers chi") {
  const MembraneSpec spec = preset_membrane("t1_500");
  const ThermalGrid grid{101};
  BeamSpec centered;
  BeamSpec offset;
  offset.center_x = 10e-6;
  CHECK(chi_of_beam(spec, offset, grid).chi < chi_of_beam(spec, centered, grid).chi);
}

TEST_CASE("frequency-power curves from different beam positions collapse vs chi P") {
  const MembraneSpec spec = preset_membrane("t1_500");
  const ThermalGrid grid{61};
  BeamSpec beam_a;  // centered
  BeamSpec beam_b;
  beam_b.center_x = 10e-6;
  beam_b.center_y = 5e-6;
  const double chi_a = chi_of_beam(spec, beam_a, grid).chi;
  const double chi_b = chi_of_beam(spec, beam_b, grid).chi;
  REQUIRE(chi_a != chi_b);

  const double u_max = 0.8 * critical_power(spec, {chi_a}) * chi_a;  // K
  for (int k = 0; k <= 40; ++k) {
    const double u = u_max * k / 40.0;
    const double f_a =
        mode_frequency(spec, stress_at_power(spec, {chi_a}, u / chi_a).stress, {1, 1});
    const double f_b =
        mode_frequency(spec, stress_at_power(spec, {chi_b}, u / chi_b).stress, {1, 1});
    CHECK(rel_err(f_b, f_a) < 1e-10);
  }
}

TEST_CASE("frequency curve truncates at the buckling point") {
  const MembraneSpec spec = preset_membrane("t1_500");
  const ThermalCoupling coupling{600.0};
  const double p_crit = critical_power(spec, coupling);

  const FrequencyCurve cut = f_of_p_curve(spec, coupling, 2.0 * p_crit, 101);
  CHECK(cut.truncated);
  CHECK(rel_err(cut.critical_power, p_crit) < 1e-12);
  REQUIRE(!cut.points.empty());
  CHECK(cut.points.back().power < p_crit);
  CHECK(cut.points.size() < 101);

  const FrequencyCurve whole = f_of_p_curve(spec, coupling, 0.5 * p_crit, 33);
  CHECK_FALSE(whole.truncated);
  CHECK(whole.points.size() == 33);
  for (std::size_t k = 1; k < whole.points.size(); ++k) {
    CHECK(whole.points[k].frequency < whole.points[k - 1].frequency);
    CHECK(whole.points[k].delta_T > whole.points[k - 1].delta_T);
  }
  CHECK(whole.points.front().power == 0.0);
  CHECK(rel_err(whole.points.front().frequency,
                mode_frequency(spec, spec.initial_stress, {1, 1})) < 1e-14);
}
