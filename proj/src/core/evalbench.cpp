#include "evalbench.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>

#include "models.hpp"
#include "parallel.hpp"

namespace ndr {

namespace {

std::string fmt(double v, const char* f = "%.6g") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

}  // namespace

double rmse_step(std::span<const double> error) {
  double s = 0.0;
  for (double e : error) s += e * e;
  return std::sqrt(s / double(error.size()));
}

ArmseStat armse(const std::vector<RunRecord>& records) {
  std::vector<double> means;
  for (const auto& r : records) {
    if (r.diverged || r.rmse.empty()) continue;
    double s = 0.0;
    for (double v : r.rmse) s += v;
    means.push_back(s / double(r.rmse.size()));
  }
  if (means.empty()) fail(Err::AllRunsDiverged, "armse: every run diverged");
  ArmseStat st;
  st.n_used = int(means.size());
  for (double m : means) st.mean += m;
  st.mean /= double(means.size());
  for (double m : means) st.std_dev += (m - st.mean) * (m - st.mean);
  st.std_dev = std::sqrt(st.std_dev / double(means.size()));  // population
  std::vector<double> sorted = means;
  std::sort(sorted.begin(), sorted.end());
  size_t n = sorted.size();
  st.median = n % 2 == 1 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  return st;
}

double crmse(const std::vector<RunRecord>& records, int t) {
  if (t < 1) fail(Err::InvalidArg, "crmse: t must be >= 1");
  double s = 0.0;
  int n = 0;
  for (const auto& r : records) {
    if (r.diverged || int(r.rmse.size()) < t) continue;
    ++n;
    for (int k = 0; k < t; ++k) s += r.rmse[size_t(k)] * r.rmse[size_t(k)];
  }
  if (n == 0) fail(Err::AllRunsDiverged, "crmse: no usable runs");
  return std::sqrt(s / (double(n) * double(t)));
}

DivergenceFlag detect_divergence(double step_rmse, std::span<const double> x_hat,
                                 std::span<const double> p_diag) {
  if (!std::isfinite(step_rmse) || !all_finite(x_hat) || !all_finite(p_diag))
    return {true, DivergenceCause::NonFinite};
  if (step_rmse > kDivergenceThreshold) return {true, DivergenceCause::Threshold};
  return {false, DivergenceCause::None};
}

// ---- Chaos Monte-Carlo --------------------------------------------------------

namespace {

struct ChaosFilterRun {
  const FilterSpec& spec;
  const SystemModel& model;
  const Tensor& q_base;
  const Tensor& r_base;
  const Safeguards& sg;
  double p0;
  double dt;
  // consistent initialization: x0_hat ~ N(x0, p0 I), shared by every filter
  const std::array<double, 3>& x0_hat;

  RunRecord operator()(const Trajectory& traj) const {
    RunRecord rec;
    FilterState fs;
    fs.x_hat = Tensor::vector({x0_hat[0], x0_hat[1], x0_hat[2]});
    fs.p = scale(Tensor::eye(3), p0);
    fs.q_diag = q_base;
    fs.r_diag = r_base;

    NdrState ns;
    NdrConfig ncfg;
    PolicyAdapter adapter;
    if (spec.kind == FilterSpec::Kind::Ndr) {
      ns.fs = fs;
      ns.ps = initial_policy_state(*spec.arch);
      ncfg.safeguards = sg;
      ncfg.q_base = q_base;
      ncfg.r_base = r_base;
      ncfg.with_reconstruction = false;
      adapter = {spec.weights, spec.arch, spec.transfer ? &*spec.transfer : nullptr};
    }

    long long k_idx = 0;
    for (int k = 0; k < traj.steps; ++k) {
      Tensor z = Tensor::vector(
          {traj.measurements[size_t(k) * 2], traj.measurements[size_t(k) * 2 + 1]});
      try {
        switch (spec.kind) {
          case FilterSpec::Kind::Ekf:
            fs = ekf_step(model, fs, z, Tensor{}, dt, sg);
            break;
          case FilterSpec::Kind::Shkf:
            fs = shkf_step(model, fs, z, Tensor{}, dt, shkf_adaptation_factor(spec.b, k_idx),
                           q_base, r_base, sg);
            break;
          case FilterSpec::Kind::Ndr:
            ns = ndr_step(model, adapter, ncfg, ns, z, Tensor{}, dt);
            fs = ns.fs;
            break;
        }
      } catch (const Error&) {
        rec.diverged = true;
        rec.cause = DivergenceCause::NonFinite;
        rec.diverged_at = k + 1;
        break;
      }
      ++k_idx;
      double e[3];
      for (int i = 0; i < 3; ++i) e[i] = fs.x_hat(i) - traj.states[size_t(k) * 3 + size_t(i)];
      double r = rmse_step({e, 3});
      auto flag = detect_divergence(r, fs.x_hat.data(), diag_part(fs.p).data());
      if (flag.diverged) {
        rec.diverged = true;
        rec.cause = flag.cause;
        rec.diverged_at = k + 1;
        break;
      }
      rec.rmse.push_back(r);
    }
    if (traj.diverged) {
      // ground-truth instability is charged to every filter identically
      rec.diverged = true;
      rec.cause = DivergenceCause::GroundTruth;
      rec.diverged_at = traj.diverged_at;
    }
    return rec;
  }
};

}  // namespace

McResult run_monte_carlo(const ChaosParams& sys, const ChaosRandomization& noise,
                         const std::vector<FilterSpec>& filters, const McConfig& cfg) {
  McResult res;
  res.t_steps = cfg.t_steps;
  res.records.assign(filters.size(), std::vector<RunRecord>(size_t(cfg.n_runs)));

  Tensor q_base = Tensor::full({3}, noise.q_base);
  Tensor r_base = Tensor::vector({noise.r_base[0], noise.r_base[1]});
  Safeguards sg;
  SystemModel model = make_chaos_model(sys);

  parallel_over(cfg.n_runs, cfg.threads, [&](int run) {
    Rng prof_rng(cfg.seed, std::uint64_t(run), 0x300000);
    NoiseProfile prof = randomize_chaos_episode(noise, prof_rng);
    Trajectory traj = generate_trajectory(sys, prof, cfg.t_steps, cfg.seed, std::uint64_t(run));
    Rng init_rng(cfg.seed, std::uint64_t(run), 0x400000);
    std::array<double, 3> x0_hat{};
    for (int i = 0; i < 3; ++i) x0_hat[size_t(i)] = traj.x0[size_t(i)] + cfg.init_sigma * init_rng.normal();
    for (size_t f = 0; f < filters.size(); ++f) {
      ChaosFilterRun runner{filters[f], model, q_base, r_base, sg, cfg.p0, sys.dt, x0_hat};
      res.records[f][size_t(run)] = runner(traj);
    }
  });

  for (size_t f = 0; f < filters.size(); ++f) {
    McRow row;
    row.label = filters[f].label;
    row.n_runs = cfg.n_runs;
    for (const auto& r : res.records[f])
      if (r.diverged) ++row.n_diverged;
    row.divergence_pct = 100.0 * double(row.n_diverged) / double(cfg.n_runs);
    row.armse = armse(res.records[f]);
    res.rows.push_back(std::move(row));
  }
  return res;
}

std::string mc_table_csv(const McResult& res, const std::string& system_name) {
  std::string s = "system,method,armse_mean,armse_std,armse_median,divergence_pct,n_runs\n";
  for (const auto& r : res.rows) {
    s += system_name + "," + r.label + "," + fmt(r.armse.mean, "%.17g") + "," +
         fmt(r.armse.std_dev, "%.17g") + "," + fmt(r.armse.median, "%.17g") + "," +
         fmt(r.divergence_pct, "%.17g") + "," + std::to_string(r.n_runs) + "\n";
  }
  return s;
}

std::string mc_table_text(const McResult& res, const std::string& system_name) {
  // mean/std use the population convention
  char buf[160];
  std::string s;
  std::snprintf(buf, sizeof(buf), "%-18s %28s %10s\n", system_name.c_str(), "ARMSE (mean +- std) [median]",
                "Div. (%)");
  s += buf;
  for (const auto& r : res.rows) {
    std::snprintf(buf, sizeof(buf), "%-18s %9.3f +- %-8.3f [%8.3f] %9.2f\n", r.label.c_str(),
                  r.armse.mean, r.armse.std_dev, r.armse.median, r.divergence_pct);
    s += buf;
  }
  return s;
}

std::string crmse_csv(const McResult& res) {
  std::string s = "t";
  for (const auto& r : res.rows) s += "," + r.label;
  s += "\n";
  for (int t = 1; t <= res.t_steps; ++t) {
    s += std::to_string(t);
    for (const auto& recs : res.records) {
      double v;
      try {
        v = crmse(recs, t);
      } catch (const Error&) {
        v = std::nan("");
      }
      s += "," + fmt(v, "%.10g");
    }
    s += "\n";
  }
  return s;
}

std::string records_jsonl(const McResult& res) {
  std::string s;
  const char* causes[] = {"none", "threshold", "non-finite", "ground-truth"};
  for (size_t f = 0; f < res.records.size(); ++f) {
    for (size_t run = 0; run < res.records[f].size(); ++run) {
      const RunRecord& r = res.records[f][run];
      double mean = 0.0;
      for (double v : r.rmse) mean += v;
      if (!r.rmse.empty()) mean /= double(r.rmse.size());
      s += "{\"method\":\"" + res.rows[f].label + "\",\"run\":" + std::to_string(run) +
           ",\"diverged\":" + (r.diverged ? "true" : "false") + ",\"cause\":\"" +
           causes[int(r.cause)] + "\",\"steps\":" + std::to_string(r.rmse.size()) +
           ",\"mean_rmse\":" + fmt(mean, "%.10g") + "}\n";
    }
  }
  return s;
}

// ---- UAV scenarios --------------------------------------------------------------

const char* scenario_name(ScenarioKind k) {
  switch (k) {
    case ScenarioKind::Baseline: return "baseline";
    case ScenarioKind::TransientDisturbance: return "transient";
    case ScenarioKind::SensorDenied: return "sensor-denied";
  }
  return "?";
}

namespace {

double quat_angle_error(std::span<const double> q_hat, const double* q_true) {
  double n = 0.0;
  for (int i = 0; i < 4; ++i) n += q_hat[size_t(i)] * q_hat[size_t(i)];
  n = std::sqrt(n);
  double dot = 0.0;
  for (int i = 0; i < 4; ++i) dot += q_hat[size_t(i)] / n * q_true[i];
  double c = std::min(1.0, std::fabs(dot));
  return 2.0 * std::acos(c);
}

struct ScenarioRunStats {
  double pos_rmse = 0.0;
  double att_rmse = 0.0;
  bool diverged = false;
  int switched_steps = 0;
};

ScenarioRunStats run_scenario_filter(const ScenarioSpec& spec, const FilterSpec& fspec,
                                     const FlightLog& log, const DegradedStreams& streams,
                                     const SystemModel& kin, const SystemModel& dyn,
                                     const QdroneParams& params, const UavFilterInit& finit) {
  ScenarioRunStats stats;
  int ws = int(spec.window_start / log.dt);
  int we = int(spec.window_end / log.dt);

  Tensor q_base = Tensor::vector(Buf(finit.q_diag.begin(), finit.q_diag.end()));
  Tensor r_base = Tensor::vector(Buf(finit.r_diag.begin(), finit.r_diag.end()));
  Safeguards sg;

  // seed from the first observation: pose and attitude, derivatives at zero
  Buf x0(19, 0.0);
  for (int i = 0; i < 3; ++i) x0[size_t(i)] = streams.z[size_t(i)];
  Quat q0 = quat_from_euler(streams.z[3], streams.z[4], streams.z[5]);
  for (int i = 0; i < 4; ++i) x0[size_t(6 + i)] = q0[size_t(i)];

  FilterState fs;
  fs.x_hat = Tensor::vector(std::move(x0));
  fs.p = diag_matrix(Tensor::vector(Buf(finit.p0_diag.begin(), finit.p0_diag.end())));
  fs.q_diag = q_base;
  fs.r_diag = r_base;

  NdrState ns;
  NdrConfig ncfg;
  PolicyAdapter adapter;
  if (fspec.kind == FilterSpec::Kind::Ndr) {
    ns.fs = fs;
    ns.ps = initial_policy_state(*fspec.arch);
    ncfg.safeguards = sg;
    ncfg.q_base = q_base;
    ncfg.r_base = r_base;
    ncfg.with_reconstruction = false;
    adapter = {fspec.weights, fspec.arch, nullptr};
  }

  double pos_sq = 0.0, att_sq = 0.0;
  int n_steps = 0;
  long long k_idx = 0;
  for (int k = 0; k < log.steps; ++k) {
    bool denied = spec.kind == ScenarioKind::SensorDenied && k >= ws && k < we;
    bool switch_now = denied && spec.switch_model;
    const SystemModel& model = switch_now ? dyn : kin;
    Tensor z, u;
    if (switch_now) {
      // proprioceptive dead reckoning: imu readings become the measurement,
      // motor thrust and torques the control input
      z = Tensor::vector(Buf(&streams.u[size_t(k) * 6], &streams.u[size_t(k) * 6] + 6));
      auto ft = mix_motor_commands({log.delta[size_t(k) * 4], log.delta[size_t(k) * 4 + 1],
                                    log.delta[size_t(k) * 4 + 2], log.delta[size_t(k) * 4 + 3]},
                                   params);
      u = Tensor::vector({ft.f, ft.tau[0], ft.tau[1], ft.tau[2]});
      ++stats.switched_steps;
    } else {
      z = Tensor::vector(Buf(&streams.z[size_t(k) * 6], &streams.z[size_t(k) * 6] + 6));
      u = Tensor::vector(Buf(&streams.u[size_t(k) * 6], &streams.u[size_t(k) * 6] + 6));
    }

    try {
      if (denied && !spec.switch_model) {
        // outage without the proprioceptive model: prediction only
        fs = ekf_predict(kin, fs, u, log.dt, sg).fs;
        if (fspec.kind == FilterSpec::Kind::Ndr) ns.fs = fs;
      } else {
        switch (fspec.kind) {
          case FilterSpec::Kind::Ekf:
            fs = ekf_step(model, fs, z, u, log.dt, sg);
            break;
          case FilterSpec::Kind::Shkf:
            fs = shkf_step(model, fs, z, u, log.dt, shkf_adaptation_factor(fspec.b, k_idx), q_base,
                           r_base, sg);
            break;
          case FilterSpec::Kind::Ndr:
            ns = ndr_step(model, adapter, ncfg, ns, z, u, log.dt);
            fs = ns.fs;
            break;
        }
      }
    } catch (const Error&) {
      stats.diverged = true;
      break;
    }
    ++k_idx;

    const double* truth = &log.truth[size_t(k) * 19];
    double e[3];
    for (int i = 0; i < 3; ++i) e[i] = fs.x_hat(i) - truth[i];
    double pr = rmse_step({e, 3});
    auto flag = detect_divergence(pr, fs.x_hat.data(), diag_part(fs.p).data());
    if (flag.diverged) {
      stats.diverged = true;
      break;
    }
    pos_sq += e[0] * e[0] + e[1] * e[1] + e[2] * e[2];
    double att = quat_angle_error(fs.x_hat.data().subspan(6, 4), truth + 6);
    att_sq += att * att;
    ++n_steps;
  }
  if (n_steps > 0) {
    stats.pos_rmse = std::sqrt(pos_sq / (3.0 * double(n_steps)));
    stats.att_rmse = std::sqrt(att_sq / double(n_steps));
  }
  return stats;
}

}  // namespace

ScenarioResult run_scenario(const ScenarioSpec& spec, const std::vector<FilterSpec>& filters,
                            const std::vector<FlightLog>& logs, const QdroneParams& params,
                            const DomainRandomization& dr, std::uint64_t seed) {
  ScenarioResult res;
  res.kind = spec.kind;
  SystemModel kin = make_uav_model(UavFormulation::Kinematic, params);
  SystemModel dyn = make_uav_model(UavFormulation::Dynamic, params);
  UavFilterInit finit = default_uav_filter_init();

  // one degraded stream per log, shared by every filter
  std::vector<DegradedStreams> streams;
  for (size_t l = 0; l < logs.size(); ++l) {
    Rng rng(seed, l, 0x900000);
    std::vector<double> scale;
    if (spec.kind == ScenarioKind::TransientDisturbance) {
      scale.assign(size_t(logs[l].steps), 1.0);
      int ws = int(spec.window_start / logs[l].dt);
      int we = int(spec.window_end / logs[l].dt);
      for (int k = std::max(0, ws); k < std::min(logs[l].steps, we); ++k)
        scale[size_t(k)] = spec.factor;
    }
    streams.push_back(degrade_uav_signals(logs[l].pose, logs[l].imu, logs[l].steps, logs[l].dt,
                                          rng, dr, scale));
  }

  for (const auto& f : filters) {
    ScenarioRow row;
    row.label = f.label;
    std::vector<double> pos, att;
    for (size_t l = 0; l < logs.size(); ++l) {
      auto stats = run_scenario_filter(spec, f, logs[l], streams[l], kin, dyn, params, finit);
      row.switched_steps += stats.switched_steps;
      if (stats.diverged) {
        ++row.n_diverged;
        continue;
      }
      pos.push_back(stats.pos_rmse);
      att.push_back(stats.att_rmse);
    }
    auto mean_std = [](std::vector<double> v, double& mean, double& sd, double& med) {
      mean = sd = med = 0.0;
      if (v.empty()) return;
      for (double x : v) mean += x;
      mean /= double(v.size());
      for (double x : v) sd += (x - mean) * (x - mean);
      sd = std::sqrt(sd / double(v.size()));
      std::sort(v.begin(), v.end());
      size_t n = v.size();
      med = n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
    };
    mean_std(pos, row.pos_rmse_mean, row.pos_rmse_std, row.pos_rmse_median);
    mean_std(att, row.att_rmse_mean, row.att_rmse_std, row.att_rmse_median);
    res.rows.push_back(std::move(row));
  }
  return res;
}

std::string scenario_table_csv(const std::vector<ScenarioResult>& results) {
  std::string s =
      "scenario,method,pos_rmse_mean,pos_rmse_std,pos_rmse_median,att_rmse_mean,att_rmse_std,"
      "att_rmse_median,n_diverged\n";
  for (const auto& res : results)
    for (const auto& r : res.rows)
      s += std::string(scenario_name(res.kind)) + "," + r.label + "," +
           fmt(r.pos_rmse_mean, "%.17g") + "," + fmt(r.pos_rmse_std, "%.17g") + "," +
           fmt(r.pos_rmse_median, "%.17g") + "," + fmt(r.att_rmse_mean, "%.17g") + "," +
           fmt(r.att_rmse_std, "%.17g") + "," + fmt(r.att_rmse_median, "%.17g") + "," +
           std::to_string(r.n_diverged) + "\n";
  return s;
}

std::string scenario_table_text(const std::vector<ScenarioResult>& results) {
  std::string s;
  char buf[160];
  for (const auto& res : results) {
    std::snprintf(buf, sizeof(buf), "-- %s --\n%-14s %24s %24s %6s\n", scenario_name(res.kind),
                  "method", "pos RMSE (m)", "att RMSE (rad)", "div");
    s += buf;
    for (const auto& r : res.rows) {
      std::snprintf(buf, sizeof(buf), "%-14s %12.4f +- %-9.4f %12.4f +- %-9.4f %6d\n",
                    r.label.c_str(), r.pos_rmse_mean, r.pos_rmse_std, r.att_rmse_mean,
                    r.att_rmse_std, r.n_diverged);
      s += buf;
    }
  }
  return s;
}

// ---- Latency ---------------------------------------------------------------------

LatencyReport profile_latency(const PolicyArch& arch, const PolicyWeights& weights, int n_steps,
                              const QdroneParams& params) {
  LatencyReport rep;
  rep.n_steps = n_steps;
  SystemModel kin = make_uav_model(UavFormulation::Kinematic, params);
  CircleSpec circle;
  circle.duration = std::max(2.0, double(n_steps + 200) * 1e-3);
  FlightLog log = generate_flight_log(params, circle, 1e-3);
  DomainRandomization dr;
  Rng rng(99, 0, 0xabc);
  DegradedStreams streams = degrade_uav_signals(log.pose, log.imu, log.steps, log.dt, rng, dr);

  UavFilterInit finit = default_uav_filter_init();
  Tensor q_base = Tensor::vector(Buf(finit.q_diag.begin(), finit.q_diag.end()));
  Tensor r_base = Tensor::vector(Buf(finit.r_diag.begin(), finit.r_diag.end()));
  Safeguards sg;

  auto make_fs = [&] {
    Buf x0(19, 0.0);
    for (int i = 0; i < 3; ++i) x0[size_t(i)] = streams.z[size_t(i)];
    Quat q0 = quat_from_euler(streams.z[3], streams.z[4], streams.z[5]);
    for (int i = 0; i < 4; ++i) x0[size_t(6 + i)] = q0[size_t(i)];
    FilterState fs;
    fs.x_hat = Tensor::vector(std::move(x0));
    fs.p = diag_matrix(Tensor::vector(Buf(finit.p0_diag.begin(), finit.p0_diag.end())));
    fs.q_diag = q_base;
    fs.r_diag = r_base;
    return fs;
  };

  auto bench = [&](const std::function<void(int, const Tensor&, const Tensor&)>& step) {
    std::vector<double> us;
    us.reserve(size_t(n_steps));
    int warmup = 100;
    for (int k = 0; k < n_steps + warmup && k < log.steps; ++k) {
      Tensor z = Tensor::vector(Buf(&streams.z[size_t(k) * 6], &streams.z[size_t(k) * 6] + 6));
      Tensor u = Tensor::vector(Buf(&streams.u[size_t(k) * 6], &streams.u[size_t(k) * 6] + 6));
      auto t0 = std::chrono::steady_clock::now();
      step(k, z, u);
      auto t1 = std::chrono::steady_clock::now();
      if (k >= warmup)
        us.push_back(std::chrono::duration<double, std::micro>(t1 - t0).count());
    }
    std::sort(us.begin(), us.end());
    return us[us.size() / 2];
  };

  {
    FilterState fs = make_fs();
    rep.ekf_us = bench([&](int, const Tensor& z, const Tensor& u) {
      fs = ekf_step(kin, fs, z, u, log.dt, sg);
    });
  }
  {
    NdrState ns;
    ns.fs = make_fs();
    ns.ps = initial_policy_state(arch);
    NdrConfig ncfg;
    ncfg.safeguards = sg;
    ncfg.q_base = q_base;
    ncfg.r_base = r_base;
    ncfg.with_reconstruction = false;
    PolicyAdapter adapter{&weights, &arch, nullptr};
    rep.ndr_us = bench([&](int, const Tensor& z, const Tensor& u) {
      ns = ndr_step(kin, adapter, ncfg, ns, z, u, log.dt);
    });
  }
  rep.ratio = rep.ndr_us / rep.ekf_us;
  return rep;
}

// ---- Ablations ---------------------------------------------------------------------

std::vector<AblationVariantResult> run_ablation(const AblationConfig& cfg) {
  struct Variant {
    std::string label;
    PolicyArch arch;
    double lambda_aux;
  };
  std::vector<Variant> variants;
  PolicyArch base;  // chaos defaults
  switch (cfg.axis) {
    case AblationAxis::Depth:
      for (int depth : {1, 3, 5}) {
        PolicyArch a = base;
        a.depth = depth;
        variants.push_back({std::to_string(depth) + "-layer", a, 0.1});
      }
      break;
    case AblationAxis::LambdaAux:
      for (double l : {1.0, 0.1, 0.01, 0.0}) {
        variants.push_back({"lambda_aux=" + fmt(l, "%g"), base, l});
      }
      break;
    case AblationAxis::InputVariant:
      for (auto v : {FeatureVariant::Whitened, FeatureVariant::Raw, FeatureVariant::WhitenedNoLog,
                     FeatureVariant::Nis}) {
        PolicyArch a = base;
        a.features.variant = v;
        variants.push_back({feature_variant_name(v), a, 0.1});
      }
      break;
  }

  std::vector<AblationVariantResult> out;
  for (const auto& var : variants) {
    AblationVariantResult res;
    res.label = var.label;
    res.seeds = cfg.n_seeds;
    std::vector<double> lorenz_means, rossler_means;
    long long lorenz_div = 0, rossler_div = 0, lorenz_n = 0, rossler_n = 0;

    for (int s = 0; s < cfg.n_seeds; ++s) {
      TrainConfig tc;
      tc.epochs = cfg.epochs;
      tc.batch_size = cfg.batch_size;
      tc.lambda_aux = var.lambda_aux;
      tc.seed = cfg.seed + std::uint64_t(s) * 1000003ull;
      tc.threads = cfg.threads;
      ChaosRandomization train_noise;
      TrainResult tr = train_chaos(var.arch, tc, train_noise);

      FilterSpec spec;
      spec.kind = FilterSpec::Kind::Ndr;
      spec.weights = &tr.weights;
      spec.arch = &var.arch;
      spec.label = var.label;

      McConfig mc;
      mc.n_runs = cfg.n_runs;
      mc.t_steps = cfg.t_steps;
      mc.seed = cfg.seed + 777;
      mc.threads = cfg.threads;

      ChaosParams lorenz;
      McResult lr = run_monte_carlo(lorenz, train_noise, {spec}, mc);
      lorenz_means.push_back(lr.rows[0].armse.mean);
      lorenz_div += lr.rows[0].n_diverged;
      lorenz_n += lr.rows[0].n_runs;

      ChaosParams rossler;
      rossler.system = ChaosSystem::Rossler;
      ChaosRandomization test_noise;
      test_noise.amp_max = 1.0;
      test_noise.outlier_prob = 0.10;
      test_noise.outlier_scale = 10.0;
      McResult rr = run_monte_carlo(rossler, test_noise, {spec}, mc);
      rossler_means.push_back(rr.rows[0].armse.mean);
      rossler_div += rr.rows[0].n_diverged;
      rossler_n += rr.rows[0].n_runs;
    }

    auto stat = [](std::vector<double> v) {
      ArmseStat st;
      st.n_used = int(v.size());
      for (double m : v) st.mean += m;
      st.mean /= double(v.size());
      for (double m : v) st.std_dev += (m - st.mean) * (m - st.mean);
      st.std_dev = std::sqrt(st.std_dev / double(v.size()));
      std::sort(v.begin(), v.end());
      size_t n = v.size();
      st.median = n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
      return st;
    };
    res.lorenz = stat(lorenz_means);
    res.rossler = stat(rossler_means);
    res.lorenz_div_pct = 100.0 * double(lorenz_div) / double(std::max(1ll, lorenz_n));
    res.rossler_div_pct = 100.0 * double(rossler_div) / double(std::max(1ll, rossler_n));
    out.push_back(std::move(res));
  }
  return out;
}

std::string ablation_csv(const std::vector<AblationVariantResult>& rows, AblationAxis axis) {
  const char* axis_name = axis == AblationAxis::Depth         ? "depth"
                          : axis == AblationAxis::LambdaAux   ? "lambda_aux"
                                                              : "input_variant";
  std::string s =
      "axis,variant,lorenz_mean,lorenz_std,lorenz_median,lorenz_div_pct,"
      "rossler_mean,rossler_std,rossler_median,rossler_div_pct,seeds\n";
  for (const auto& r : rows) {
    s += std::string(axis_name) + "," + r.label + "," + fmt(r.lorenz.mean, "%.17g") + "," +
         fmt(r.lorenz.std_dev, "%.17g") + "," + fmt(r.lorenz.median, "%.17g") + "," +
         fmt(r.lorenz_div_pct, "%.17g") + "," + fmt(r.rossler.mean, "%.17g") + "," +
         fmt(r.rossler.std_dev, "%.17g") + "," + fmt(r.rossler.median, "%.17g") + "," +
         fmt(r.rossler_div_pct, "%.17g") + "," + std::to_string(r.seeds) + "\n";
  }
  return s;
}

std::vector<double> policy_sensitivity(const PolicyWeights& w, const PolicyArch& arch,
                                       const Tensor& y, const PolicyState& state, double step) {
  int in = y.dim(0);
  int out = arch.out_dim();
  std::vector<double> sens(size_t(out) * size_t(in), 0.0);
  Buf base(y.data().begin(), y.data().end());
  for (int j = 0; j < in; ++j) {
    Buf hi = base, lo = base;
    hi[size_t(j)] += step;
    lo[size_t(j)] -= step;
    auto oh = policy_forward(w, arch, Tensor({in}, hi), state, false);
    auto ol = policy_forward(w, arch, Tensor({in}, lo), state, false);
    for (int i = 0; i < out; ++i)
      sens[size_t(i) * size_t(in) + size_t(j)] = (oh.d(i) - ol.d(i)) / (2.0 * step);
  }
  return sens;
}

}  // namespace ndr
