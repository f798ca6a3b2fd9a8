#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "core/chaos.hpp"
#include "test_util.hpp"

using namespace ndr;

TEST_CASE("ode right-hand sides") {
  ChaosParams lorenz;
  auto d = deriv(lorenz, {1, 1, 1});
  CHECK(d[0] == doctest::Approx(0.0));
  CHECK(d[1] == doctest::Approx(26.0));
  CHECK(d[2] == doctest::Approx(-5.0 / 3.0));

  auto d0 = deriv(lorenz, {0, 0, 0});
  CHECK(d0[0] == 0.0);
  CHECK(d0[1] == 0.0);
  CHECK(d0[2] == 0.0);

  ChaosParams rossler;
  rossler.system = ChaosSystem::Rossler;
  auto dr = deriv(rossler, {0, 0, 0});
  CHECK(dr[0] == 0.0);
  CHECK(dr[1] == 0.0);
  CHECK(dr[2] == doctest::Approx(0.2));
}

TEST_CASE("rk4 against an independent four-stage rollout") {
  ChaosParams p;
  std::array<double, 3> s{1, 1, 1};
  double dt = 0.01;

  auto f = [&](std::array<double, 3> v) {
    return std::array<double, 3>{p.sigma_l * (v[1] - v[0]), v[0] * (p.rho_l - v[2]) - v[1],
                                 v[0] * v[1] - p.beta_l * v[2]};
  };
  auto k1 = f(s);
  auto k2 = f({s[0] + dt * k1[0] / 2, s[1] + dt * k1[1] / 2, s[2] + dt * k1[2] / 2});
  auto k3 = f({s[0] + dt * k2[0] / 2, s[1] + dt * k2[1] / 2, s[2] + dt * k2[2] / 2});
  auto k4 = f({s[0] + dt * k3[0], s[1] + dt * k3[1], s[2] + dt * k3[2]});
  std::array<double, 3> expect{};
  for (int i = 0; i < 3; ++i) expect[i] = s[i] + dt * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]) / 6.0;

  auto got = rk4_step(p, s, dt);
  for (int i = 0; i < 3; ++i) CHECK(got[i] == doctest::Approx(expect[i]).epsilon(1e-12));

  // fixed point stays put, dt = 0 is the identity
  auto at_origin = rk4_step(p, {0, 0, 0}, dt);
  CHECK(at_origin[0] == 0.0);
  CHECK(at_origin[1] == 0.0);
  CHECK(at_origin[2] == 0.0);
  auto frozen = rk4_step(p, {1, 2, 3}, 0.0);
  CHECK(frozen[0] == 1.0);
  CHECK(frozen[1] == 2.0);
  CHECK(frozen[2] == 3.0);
}

TEST_CASE("process noise variance tracks q_i(k)") {
  NoiseProfile prof;
  prof.q_base = 0.01;
  prof.harmonics = {{0.2, 0.5, kPi / 2}, {0.0, 0.0, 0.0}, {0.1, 1.0, 0.3}};

  Rng rng(42);
  auto one = sample_process_noise(prof, 0, 0.01, rng);
  CHECK(one.q_diag[0] == doctest::Approx(prof.q_base * 1.2));  // sin^2(pi/2) = 1
  CHECK(one.q_diag[1] == doctest::Approx(prof.q_base));        // zero amplitude

  const int n = 1000000;
  double sum = 0, sum2 = 0;
  for (int i = 0; i < n; ++i) {
    auto draw = sample_process_noise(prof, 7, 0.01, rng);
    sum += draw.noise[0];
    sum2 += draw.noise[0] * draw.noise[0];
  }
  double var = sum2 / n - (sum / n) * (sum / n);
  auto probe = sample_process_noise(prof, 7, 0.01, rng);
  CHECK(var == doctest::Approx(probe.q_diag[0]).epsilon(0.01));
}

TEST_CASE("measurement mixture moments") {
  NoiseProfile prof;
  prof.r_base = {1.0, 2.0};
  prof.outlier_prob = 0.05;
  prof.outlier_scale = 5.0;

  Rng rng(7);
  const int n = 1000000;
  double sum2 = 0;
  for (int i = 0; i < n; ++i) {
    auto d = sample_measurement_noise(prof, rng);
    sum2 += d.noise[0] * d.noise[0];
  }
  CHECK(sum2 / n == doctest::Approx(1.2).epsilon(0.01));  // (1-eps) + eps*eta

  prof.outlier_prob = 0.0;
  auto clean = sample_measurement_noise(prof, rng);
  CHECK_FALSE(clean.outlier);
  prof.outlier_prob = 1.0;
  auto dirty = sample_measurement_noise(prof, rng);
  CHECK(dirty.outlier);
}

TEST_CASE("observation models") {
  ChaosParams lorenz;
  auto z = observe(lorenz, {1, 2, 3});
  CHECK(z[0] == 1.0);
  CHECK(z[1] == 3.0);

  ChaosParams rossler;
  rossler.system = ChaosSystem::Rossler;
  auto rb = observe(rossler, {3, 4, 9});
  CHECK(rb[0] == doctest::Approx(5.0));
  CHECK(rb[1] == doctest::Approx(0.9272952180016122));

  auto axis = observe(rossler, {-1, 0, 0});
  CHECK(axis[0] == doctest::Approx(1.0));
  CHECK(axis[1] == doctest::Approx(kPi));

  CHECK_THROWS_AS((void)observe(rossler, {0, 0, 5}), Error);
}

TEST_CASE("trajectory generation") {
  ChaosParams p;
  NoiseProfile prof;
  prof.q_base = 0.01;
  prof.harmonics = {{0.1, 0.5, 0.2}, {0.15, 0.7, 1.0}, {0.05, 0.3, 2.0}};
  prof.r_base = {1.0, 2.0};

  SUBCASE("T=0 gives an empty trajectory") {
    auto t = generate_trajectory(p, prof, 0, 1, 0);
    CHECK(t.steps == 0);
    CHECK(t.states.empty());
  }

  SUBCASE("fixed seed is bit-identical") {
    auto a = generate_trajectory(p, prof, 100, 33, 5);
    auto b = generate_trajectory(p, prof, 100, 33, 5);
    REQUIRE(a.states.size() == b.states.size());
    for (size_t i = 0; i < a.states.size(); ++i) CHECK(a.states[i] == b.states[i]);
    for (size_t i = 0; i < a.measurements.size(); ++i) CHECK(a.measurements[i] == b.measurements[i]);
  }

  SUBCASE("zero noise reduces to pure rk4 bit-exactly") {
    NoiseProfile clean = prof;
    clean.q_base = 0.0;
    clean.outlier_prob = 0.0;
    clean.r_base = {0.0, 0.0};
    auto t = generate_trajectory(p, clean, 50, 9, 2);
    std::array<double, 3> s = t.x0;
    for (int k = 0; k < t.steps; ++k) {
      s = rk4_step(p, s, p.dt);
      for (int i = 0; i < 3; ++i) CHECK(t.states[size_t(k) * 3 + size_t(i)] == s[i]);
    }
  }

  SUBCASE("rossler test settings produce the stated outlier fraction") {
    ChaosParams pr;
    pr.system = ChaosSystem::Rossler;
    long long total = 0, outliers = 0;
    for (int ep = 0; ep < 250; ++ep) {
      NoiseProfile prof_r;
      prof_r.q_base = 0.01;
      Rng hr(123, std::uint64_t(ep), 77);
      prof_r.harmonics = {{hr.uniform(0.0, 1.0), hr.uniform(0.1, 1.0), hr.uniform(0.0, kTwoPi)},
                          {hr.uniform(0.0, 1.0), hr.uniform(0.1, 1.0), hr.uniform(0.0, kTwoPi)},
                          {hr.uniform(0.0, 1.0), hr.uniform(0.1, 1.0), hr.uniform(0.0, kTwoPi)}};
      prof_r.r_base = {1.0, 2.0};
      prof_r.outlier_prob = 0.10;
      prof_r.outlier_scale = 10.0;
      auto t = generate_trajectory(pr, prof_r, 400, 555, std::uint64_t(ep));
      total += t.steps;
      outliers += t.outlier_count;
    }
    REQUIRE(total > 90000);
    double frac = double(outliers) / double(total);
    CHECK(frac == doctest::Approx(0.10).epsilon(0.1));
    CHECK(std::fabs(frac - 0.10) < 0.01);
  }

  SUBCASE("bearing measurements stay in (-pi, pi]") {
    ChaosParams pr;
    pr.system = ChaosSystem::Rossler;
    NoiseProfile noisy = prof;
    noisy.outlier_prob = 0.10;
    noisy.outlier_scale = 10.0;
    auto t = generate_trajectory(pr, noisy, 500, 4, 1);
    for (int k = 0; k < t.steps; ++k) {
      double b = t.measurements[size_t(k) * 2 + 1];
      CHECK(b > -kPi);
      CHECK(b <= kPi);
    }
  }

  SUBCASE("csv export") {
    auto t = generate_trajectory(p, prof, 3, 1, 0);
    auto csv = trajectory_csv(t);
    CHECK(csv.substr(0, csv.find('\n')) == "k,x1,x2,x3,z1,z2,q1,q2,q3");
    int lines = 0;
    for (char c : csv)
      if (c == '\n') ++lines;
    CHECK(lines == 4);
  }
}
