#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "core/evalbench.hpp"
#include "test_util.hpp"

using namespace ndr;

TEST_CASE("rmse_step") {
  std::vector<double> zero{0, 0, 0};
  CHECK(rmse_step(zero) == 0.0);
  std::vector<double> uniform{-2, -2, -2};
  CHECK(rmse_step(uniform) == doctest::Approx(2.0));
  std::vector<double> mixed{3, 4, 0};
  CHECK(rmse_step(mixed) == doctest::Approx(5.0 / std::sqrt(3.0)));
}

TEST_CASE("armse statistics") {
  SUBCASE("single run with constant rmse") {
    std::vector<RunRecord> recs(1);
    recs[0].rmse.assign(10, 2.0);
    auto st = armse(recs);
    CHECK(st.mean == doctest::Approx(2.0));
    CHECK(st.std_dev == doctest::Approx(0.0));
    CHECK(st.median == doctest::Approx(2.0));
  }
  SUBCASE("two runs use the population std") {
    std::vector<RunRecord> recs(2);
    recs[0].rmse.assign(5, 1.0);
    recs[1].rmse.assign(5, 3.0);
    auto st = armse(recs);
    CHECK(st.mean == doctest::Approx(2.0));
    CHECK(st.std_dev == doctest::Approx(1.0));
    CHECK(st.median == doctest::Approx(2.0));
  }
  SUBCASE("diverged runs are excluded") {
    std::vector<RunRecord> recs(3);
    recs[0].rmse.assign(5, 1.0);
    recs[1].rmse.assign(5, 3.0);
    recs[2].rmse.assign(5, 100.0);
    recs[2].diverged = true;
    auto st = armse(recs);
    CHECK(st.mean == doctest::Approx(2.0));
    CHECK(st.n_used == 2);
  }
  SUBCASE("all-diverged raises") {
    std::vector<RunRecord> recs(1);
    recs[0].diverged = true;
    CHECK_THROWS_AS((void)armse(recs), Error);
  }
}

TEST_CASE("crmse") {
  std::vector<RunRecord> recs(1);
  recs[0].rmse = {0.0, 2.0};
  CHECK(crmse(recs, 2) == doctest::Approx(std::sqrt(4.0 / 2.0)));
  recs[0].rmse.assign(7, 1.5);
  for (int t = 1; t <= 7; ++t) CHECK(crmse(recs, t) == doctest::Approx(1.5));
}

TEST_CASE("divergence detection") {
  std::vector<double> x{1, 2, 3};
  std::vector<double> p{1, 1, 1};
  CHECK_FALSE(detect_divergence(99.9, x, p).diverged);
  auto over = detect_divergence(100.1, x, p);
  CHECK(over.diverged);
  CHECK(over.cause == DivergenceCause::Threshold);
  std::vector<double> bad{1, std::nan(""), 3};
  auto nf = detect_divergence(1.0, bad, p);
  CHECK(nf.diverged);
  CHECK(nf.cause == DivergenceCause::NonFinite);
}

TEST_CASE("monte carlo benchmark") {
  std::vector<FilterSpec> filters;
  FilterSpec ekf;
  ekf.kind = FilterSpec::Kind::Ekf;
  ekf.label = "ekf";
  filters.push_back(ekf);
  FilterSpec shkf;
  shkf.kind = FilterSpec::Kind::Shkf;
  shkf.b = 0.95;
  shkf.label = "shkf95";
  filters.push_back(shkf);

  SUBCASE("near-noiseless tracking from the true state stays near zero") {
    ChaosParams sys;
    ChaosRandomization noise;
    noise.q_base = 1e-10;
    noise.amp_max = 0.0;
    noise.outlier_prob = 0.0;
    noise.r_base = {1e-6, 1e-6};
    McConfig cfg;
    cfg.n_runs = 4;
    cfg.t_steps = 100;
    cfg.init_sigma = 0.0;
    cfg.p0 = 1.0;
    McResult res = run_monte_carlo(sys, noise, {filters[0]}, cfg);
    CHECK(res.rows[0].armse.mean < 0.01);
    CHECK(res.rows[0].divergence_pct == 0.0);
  }

  SUBCASE("fixed seed reproduces tables and csv exactly") {
    ChaosParams sys;
    ChaosRandomization noise;
    McConfig cfg;
    cfg.n_runs = 12;
    cfg.t_steps = 80;
    McResult a = run_monte_carlo(sys, noise, filters, cfg);
    McResult b = run_monte_carlo(sys, noise, filters, cfg);
    CHECK(mc_table_csv(a, "lorenz") == mc_table_csv(b, "lorenz"));
    CHECK(crmse_csv(a) == crmse_csv(b));
    CHECK(records_jsonl(a) == records_jsonl(b));
  }

  SUBCASE("ground-truth divergence is charged to every filter identically") {
    ChaosParams sys;
    sys.system = ChaosSystem::Rossler;
    ChaosRandomization noise;
    noise.amp_max = 1.0;
    noise.outlier_prob = 0.10;
    noise.outlier_scale = 10.0;
    McConfig cfg;
    cfg.n_runs = 150;
    cfg.t_steps = 600;
    McResult res = run_monte_carlo(sys, noise, filters, cfg);
    // whenever the trajectory itself is unstable, every filter's record for
    // that run must be flagged with the ground-truth cause
    for (size_t run = 0; run < size_t(cfg.n_runs); ++run) {
      bool gt0 = res.records[0][run].cause == DivergenceCause::GroundTruth;
      bool gt1 = res.records[1][run].cause == DivergenceCause::GroundTruth;
      CHECK(gt0 == gt1);
    }
  }
}

TEST_CASE("scenario tables") {
  QdroneParams params;
  std::vector<FlightLog> logs;
  CircleSpec c;
  c.duration = 2.0;
  logs.push_back(generate_flight_log(params, c, 1e-3));

  std::vector<FilterSpec> filters;
  FilterSpec ekf;
  ekf.kind = FilterSpec::Kind::Ekf;
  ekf.label = "ekf";
  filters.push_back(ekf);

  SUBCASE("baseline with zero degradation tracks tightly") {
    DomainRandomization dr;
    dr.sigma_meas = dr.sigma_out_meas = dr.sigma_inp = dr.sigma_out_inp = 0.0;
    dr.sigma_sf = dr.sigma_bias = dr.sigma_walk = dr.sigma_vib = dr.vib_amp = 0.0;
    ScenarioSpec spec;
    spec.kind = ScenarioKind::Baseline;
    auto res = run_scenario(spec, filters, logs, params, dr, 5);
    REQUIRE(res.rows.size() == 1);
    CHECK(res.rows[0].n_diverged == 0);
    CHECK(res.rows[0].pos_rmse_mean < 0.05);
  }

  SUBCASE("sensor-denied switches the model and still completes") {
    DomainRandomization dr;
    dr.sigma_meas = 0.02;
    dr.sigma_out_meas = 0.1;
    dr.sigma_inp = 0.01;
    dr.sigma_out_inp = 0.05;
    dr.sigma_vib = 0.01;
    ScenarioSpec spec;
    spec.kind = ScenarioKind::SensorDenied;
    spec.window_start = 0.8;
    spec.window_end = 1.2;
    auto res = run_scenario(spec, filters, logs, params, dr, 5);
    CHECK(res.rows[0].n_diverged == 0);
    CHECK(res.rows[0].pos_rmse_mean > 0.0);
    auto csv = scenario_table_csv({res});
    CHECK(csv.find("sensor-denied,ekf") != std::string::npos);
  }
}

TEST_CASE("latency profile smoke") {
  QdroneParams params;
  PolicyArch arch;
  arch.n_x = 19;
  arch.n_z = 6;
  arch.d_pi = 32;
  PolicyWeights w = init_weights(arch, 3);
  auto rep = profile_latency(arch, w, 300, params);
  CHECK(rep.ekf_us > 0.0);
  CHECK(rep.ndr_us > rep.ekf_us);  // strict superset of work
  CHECK(rep.ratio > 1.0);
}

TEST_CASE("ablation grid shapes") {
  AblationConfig cfg;
  cfg.axis = AblationAxis::InputVariant;
  cfg.n_seeds = 1;
  cfg.n_runs = 6;
  cfg.t_steps = 60;
  cfg.epochs = 2;
  cfg.batch_size = 4;
  auto rows = run_ablation(cfg);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].label == "whitened");
  CHECK(rows[3].label == "nis");
  for (const auto& r : rows) {
    // single seed: median equals the lone value
    CHECK(r.lorenz.median == doctest::Approx(r.lorenz.mean));
    CHECK(r.seeds == 1);
  }
  auto csv = ablation_csv(rows, cfg.axis);
  CHECK(csv.find("input_variant,whitened") != std::string::npos);
}

TEST_CASE("policy sensitivity diagnostic") {
  PolicyArch arch;
  PolicyWeights w = init_weights(arch, 21);
  Tensor y = Tensor::zeros({arch.in_dim()});
  auto sens = policy_sensitivity(w, arch, y, initial_policy_state(arch), 1e-4);
  REQUIRE(sens.size() == size_t(arch.out_dim()) * size_t(arch.in_dim()));
  double mag = 0;
  for (double v : sens) mag += std::fabs(v);
  CHECK(mag > 0.0);
  CHECK(std::isfinite(mag));
}
