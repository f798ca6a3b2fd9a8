#include "drivers.hpp"

#include <cmath>
#include <optional>

#include "evalbench.hpp"
#include "models.hpp"
#include "trainer.hpp"

namespace ndr {

namespace {

ChaosRandomization noise_from_json(const json& j) {
  ChaosRandomization r;
  if (j.contains("q_base")) r.q_base = j.at("q_base").get<double>();
  if (j.contains("amp_min")) r.amp_min = j.at("amp_min").get<double>();
  if (j.contains("amp_max")) r.amp_max = j.at("amp_max").get<double>();
  if (j.contains("omega_min")) r.omega_min = j.at("omega_min").get<double>();
  if (j.contains("omega_max")) r.omega_max = j.at("omega_max").get<double>();
  if (j.contains("r_base")) r.r_base = j.at("r_base").get<std::vector<double>>();
  if (j.contains("outlier_prob")) r.outlier_prob = j.at("outlier_prob").get<double>();
  if (j.contains("outlier_scale")) r.outlier_scale = j.at("outlier_scale").get<double>();
  if (r.r_base.size() != 2) fail(Err::Config, "noise.r_base must have 2 entries");
  if (r.outlier_prob < 0.0 || r.outlier_prob >= 1.0)
    fail(Err::Config, "noise.outlier_prob must be in [0,1)");
  if (r.outlier_scale < 1.0) fail(Err::Config, "noise.outlier_scale must be >= 1");
  return r;
}

const std::set<std::string> kNoiseKeys = {"q_base",    "amp_min",      "amp_max",
                                          "omega_min", "omega_max",    "r_base",
                                          "outlier_prob", "outlier_scale"};

PolicyArch arch_from_config(const json& j, int n_x, int n_z) {
  PolicyArch a;
  a.n_x = n_x;
  a.n_z = n_z;
  if (j.contains("depth")) a.depth = j.at("depth").get<int>();
  if (j.contains("d_enc")) a.d_enc = j.at("d_enc").get<int>();
  if (j.contains("d_e")) a.d_e = j.at("d_e").get<int>();
  if (j.contains("d_h")) a.d_h = j.at("d_h").get<int>();
  if (j.contains("d_pi")) a.d_pi = j.at("d_pi").get<int>();
  if (j.contains("variant"))
    a.features.variant = feature_variant_from_name(j.at("variant").get<std::string>());
  if (j.contains("clip_bound")) a.features.clip_bound = j.at("clip_bound").get<double>();
  if (j.contains("epsilon")) a.features.epsilon = j.at("epsilon").get<double>();
  if (a.depth < 1) fail(Err::Config, "arch.depth must be >= 1");
  if (a.features.clip_bound <= 0.0) fail(Err::Config, "arch.clip_bound must be positive");
  if (a.features.epsilon <= 0.0) fail(Err::Config, "arch.epsilon must be positive");
  return a;
}

TrainConfig train_from_config(const json& j) {
  TrainConfig c;
  if (j.contains("epochs")) c.epochs = j.at("epochs").get<int>();
  if (j.contains("batches_per_epoch")) c.batches_per_epoch = j.at("batches_per_epoch").get<int>();
  if (j.contains("batch_size")) c.batch_size = j.at("batch_size").get<int>();
  if (j.contains("seq_len")) {
    c.seq_schedule.clear();
    if (j.at("seq_len").is_number()) {
      c.seq_schedule.push_back({0, j.at("seq_len").get<int>()});
    } else {
      for (const auto& p : j.at("seq_len"))
        c.seq_schedule.push_back({p.at(0).get<int>(), p.at(1).get<int>()});
    }
  }
  if (j.contains("lr")) c.lr = j.at("lr").get<double>();
  if (j.contains("lr_decay")) {
    c.lr_schedule.clear();
    for (const auto& p : j.at("lr_decay"))
      c.lr_schedule.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  }
  if (j.contains("grad_clip")) c.grad_clip = j.at("grad_clip").get<double>();
  if (j.contains("lambda_aux")) c.lambda_aux = j.at("lambda_aux").get<double>();
  if (j.contains("lambda_att")) c.lambda_att = j.at("lambda_att").get<double>();
  if (j.contains("huber_delta")) c.huber_delta = j.at("huber_delta").get<double>();
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("checkpoint_every")) c.checkpoint_every = j.at("checkpoint_every").get<int>();
  if (j.contains("init_sigma")) c.init_sigma = j.at("init_sigma").get<double>();
  if (j.contains("p0")) c.p0 = j.at("p0").get<double>();
  if (c.epochs < 0 || c.batch_size < 1 || c.batches_per_epoch < 1)
    fail(Err::Config, "train: epochs must be >= 0 and batch sizes >= 1");
  return c;
}

DomainRandomization dr_from_config(const json& j) {
  DomainRandomization d;
  auto get = [&](const char* k, double& v) {
    if (j.contains(k)) v = j.at(k).get<double>();
  };
  get("sigma_meas", d.sigma_meas);
  get("sigma_out_meas", d.sigma_out_meas);
  get("eps_meas", d.eps_meas);
  get("sigma_inp", d.sigma_inp);
  get("sigma_out_inp", d.sigma_out_inp);
  get("eps_inp", d.eps_inp);
  get("sigma_sf", d.sigma_sf);
  get("sigma_bias", d.sigma_bias);
  get("sigma_walk", d.sigma_walk);
  get("vib_amp", d.vib_amp);
  get("vib_omega", d.vib_omega);
  get("sigma_vib", d.sigma_vib);
  get("ratio", d.ratio);
  return d;
}

const std::set<std::string> kDrKeys = {"sigma_meas", "sigma_out_meas", "eps_meas",
                                       "sigma_inp",  "sigma_out_inp",  "eps_inp",
                                       "sigma_sf",   "sigma_bias",     "sigma_walk",
                                       "vib_amp",    "vib_omega",      "sigma_vib",
                                       "ratio"};

std::vector<FlightLog> logs_from_config(const json& j, const QdroneParams& params,
                                        std::uint64_t seed) {
  std::vector<FlightLog> logs;
  if (j.contains("paths")) {
    for (const auto& p : j.at("paths"))
      logs.push_back(flight_log_from_csv(read_text_file(p.get<std::string>())));
  } else if (j.contains("synthesize")) {
    const json& s = j.at("synthesize");
    int count = s.value("count", 3);
    double duration = s.value("duration", 10.0);
    double dt = s.value("dt", 1e-3);
    for (int i = 0; i < count; ++i) {
      CircleSpec spec;
      Rng rng(seed, std::uint64_t(i), 0xc1c1e);
      spec.radius = rng.uniform(0.8, 1.2);
      spec.omega = rng.uniform(0.6, 1.0);
      spec.altitude = rng.uniform(0.8, 1.2);
      spec.phase = rng.uniform(0.0, kTwoPi);
      spec.duration = duration;
      logs.push_back(generate_flight_log(params, spec, dt));
    }
  } else {
    fail(Err::Config, "logs: expected 'paths' or 'synthesize'");
  }
  return logs;
}

struct EvalFilterSet {
  std::vector<FilterSpec> specs;
  // owned storage backing the raw pointers inside specs
  std::vector<std::unique_ptr<Checkpoint>> checkpoints;
  std::vector<std::unique_ptr<PolicyArch>> arches;
  std::vector<std::unique_ptr<PolicyWeights>> weights;
};

EvalFilterSet filters_from_config(const json& j, const std::string& out_dir, int n_x, int n_z,
                                  int default_d_pi, std::uint64_t seed) {
  EvalFilterSet set;
  for (const auto& f : j) {
    FilterSpec spec;
    std::string kind = f.at("kind").get<std::string>();
    if (kind == "ekf") {
      spec.kind = FilterSpec::Kind::Ekf;
      spec.label = f.value("label", "EKF");
    } else if (kind == "shkf") {
      spec.kind = FilterSpec::Kind::Shkf;
      spec.b = f.value("b", 0.99);
      if (!(spec.b > 0.0 && spec.b < 1.0)) fail(Err::Config, "filters: shkf b must be in (0,1)");
      spec.label = f.value("label", "SHKF" + std::to_string(int(spec.b * 1000)));
    } else if (kind == "ndr") {
      spec.kind = FilterSpec::Kind::Ndr;
      spec.label = f.value("label", "NDR-SHKF");
      std::string ckpt = f.value("checkpoint", "");
      if (!ckpt.empty()) {
        auto loaded = std::make_unique<Checkpoint>(load_checkpoint(resolve_out_path(ckpt, out_dir)));
        if (loaded->arch.n_x != n_x || loaded->arch.n_z != n_z)
          fail(Err::Config, "filters: checkpoint dims do not match the benchmark system");
        spec.weights = &loaded->weights;
        spec.arch = &loaded->arch;
        set.checkpoints.push_back(std::move(loaded));
      } else {
        auto arch = std::make_unique<PolicyArch>();
        arch->n_x = n_x;
        arch->n_z = n_z;
        arch->d_pi = default_d_pi;
        auto w = std::make_unique<PolicyWeights>(init_weights(*arch, seed));
        spec.arch = arch.get();
        spec.weights = w.get();
        set.arches.push_back(std::move(arch));
        set.weights.push_back(std::move(w));
      }
    } else {
      fail(Err::Config, "filters: unknown kind '" + kind + "'");
    }
    set.specs.push_back(spec);
  }
  if (set.specs.empty()) fail(Err::Config, "filters: at least one filter required");
  return set;
}

const std::set<std::string> kFilterKeys = {"kind", "b", "checkpoint", "label"};

}  // namespace

// ---- simulate --------------------------------------------------------------------

CommandResult cmd_simulate(const std::string& config_json, const std::string& out_dir) {
  json cfg = parse_json(config_json);
  check_keys(cfg, {{"", {"system", "steps", "episodes", "dt", "seed", "noise", "out"}},
                   {"noise", kNoiseKeys}});
  std::string system = cfg.value("system", "lorenz");
  ChaosParams params;
  if (system == "rossler")
    params.system = ChaosSystem::Rossler;
  else if (system != "lorenz")
    fail(Err::Config, "simulate: system must be lorenz or rossler");
  if (cfg.contains("dt")) params.dt = cfg.at("dt").get<double>();
  if (params.dt <= 0.0) fail(Err::Config, "simulate: dt must be positive");
  int steps = cfg.value("steps", 600);
  int episodes = cfg.value("episodes", 1);
  std::uint64_t seed = cfg.value("seed", std::uint64_t(42));
  ChaosRandomization ranges = noise_from_json(cfg.value("noise", json::object()));
  std::string out = cfg.value("out", "trajectory.csv");
  if (steps < 0 || episodes < 1) fail(Err::Config, "simulate: bad steps/episodes");

  json summary;
  summary["episodes"] = json::array();
  for (int ep = 0; ep < episodes; ++ep) {
    Rng prof_rng(seed, std::uint64_t(ep), 0x300000);
    NoiseProfile prof = randomize_chaos_episode(ranges, prof_rng);
    Trajectory traj = generate_trajectory(params, prof, steps, seed, std::uint64_t(ep));
    std::string path = resolve_out_path(out, out_dir);
    if (ep > 0) {
      size_t dot = path.find_last_of('.');
      std::string suffix = ".ep" + std::to_string(ep);
      path = dot == std::string::npos ? path + suffix
                                      : path.substr(0, dot) + suffix + path.substr(dot);
    }
    write_text_file(path, trajectory_csv(traj));
    write_manifest(path, "simulate", cfg);
    json e;
    e["path"] = path;
    e["steps"] = traj.steps;
    e["diverged"] = traj.diverged;
    e["outliers"] = traj.outlier_count;
    summary["episodes"].push_back(e);
  }
  return {summary.dump(2)};
}

// ---- train ------------------------------------------------------------------------

CommandResult cmd_train(const std::string& config_json, const std::string& out_dir) {
  json cfg = parse_json(config_json);
  check_keys(cfg, {{"", {"env", "arch", "train", "noise", "uav", "threads", "out"}},
                   {"arch", {"depth", "d_enc", "d_e", "d_h", "d_pi", "variant", "clip_bound", "epsilon"}},
                   {"train",
                    {"epochs", "batches_per_epoch", "batch_size", "seq_len", "lr", "lr_decay",
                     "grad_clip", "lambda_aux", "lambda_att", "huber_delta", "seed",
                     "checkpoint_every", "init_sigma", "p0"}},
                   {"noise", kNoiseKeys},
                   {"uav", {"logs", "randomization"}},
                   {"uav.logs", {"paths", "synthesize"}},
                   {"uav.logs.synthesize", {"count", "duration", "dt", "seed"}},
                   {"uav.randomization", kDrKeys},
                   {"out", {"checkpoint", "log"}}});
  std::string env = cfg.value("env", "chaos");
  TrainConfig tc = train_from_config(cfg.value("train", json::object()));
  tc.threads = cfg.value("threads", 1);
  std::string ckpt_out = resolve_out_path(cfg.value("out", json::object()).value("checkpoint", "weights.ckpt"), out_dir);
  std::string log_out = resolve_out_path(cfg.value("out", json::object()).value("log", ""), out_dir);
  tc.checkpoint_path = ckpt_out;

  TrainResult result;
  PolicyArch arch;
  if (env == "chaos") {
    arch = arch_from_config(cfg.value("arch", json::object()), 3, 2);
    ChaosRandomization ranges = noise_from_json(cfg.value("noise", json::object()));
    result = train_chaos(arch, tc, ranges);
  } else if (env == "uav-synthetic") {
    json arch_cfg = cfg.value("arch", json::object());
    if (!arch_cfg.contains("d_pi")) arch_cfg["d_pi"] = 32;
    arch = arch_from_config(arch_cfg, 19, 6);
    QdroneParams params;
    json uav = cfg.value("uav", json::object());
    std::uint64_t log_seed = tc.seed;
    if (uav.contains("logs") && uav.at("logs").contains("synthesize"))
      log_seed = uav.at("logs").at("synthesize").value("seed", tc.seed);
    std::vector<FlightLog> logs =
        logs_from_config(uav.value("logs", json::parse(R"({"synthesize":{}})")), params, log_seed);
    DomainRandomization dr = dr_from_config(uav.value("randomization", json::object()));
    result = train_uav(arch, tc, logs, dr, params);
  } else {
    fail(Err::Config, "train: env must be chaos or uav-synthetic");
  }

  save_checkpoint(ckpt_out, arch, result.weights);
  write_manifest(ckpt_out, "train", cfg);
  if (!log_out.empty()) {
    write_text_file(log_out, train_log_jsonl(result.log));
    write_manifest(log_out, "train", cfg);
  }

  json summary;
  summary["checkpoint"] = ckpt_out;
  summary["epochs"] = tc.epochs;
  summary["params"] = result.weights.num_params();
  if (!result.log.empty()) {
    summary["first_loss"] = result.log.front().mean_loss;
    summary["final_loss"] = result.log.back().mean_loss;
  }
  return {summary.dump(2)};
}

// ---- eval -------------------------------------------------------------------------

namespace {

CommandResult eval_chaos(const json& cfg, bool check, const std::string& out_dir) {
  std::vector<std::string> systems = cfg.value("systems", std::vector<std::string>{"lorenz", "rossler"});
  McConfig mc;
  mc.n_runs = cfg.value("runs", 200);
  mc.t_steps = cfg.value("steps", 600);
  mc.seed = cfg.value("seed", std::uint64_t(7));
  mc.threads = cfg.value("threads", 1);
  mc.p0 = cfg.value("p0", mc.p0);
  mc.init_sigma = cfg.value("init_sigma", mc.init_sigma);
  if (mc.n_runs < 1 || mc.t_steps < 1) fail(Err::Config, "eval: runs and steps must be >= 1");

  json noise_cfg = cfg.value("noise", json::object());
  json out = cfg.value("out", json::object());

  EvalFilterSet filters = filters_from_config(cfg.at("filters"), out_dir, 3, 2, 16, mc.seed);

  json summary;
  std::string summary_csv = "system,method,armse_mean,armse_std,armse_median,divergence_pct,n_runs\n";
  std::string text;
  std::map<std::string, McResult> results;

  for (const auto& sys_name : systems) {
    ChaosParams params;
    ChaosRandomization noise;
    if (sys_name == "lorenzo" || sys_name == "lorenz") {
      params.system = ChaosSystem::Lorenz;
      noise = noise_from_json(noise_cfg.value("lorenz", json::object()));
    } else if (sys_name == "rossler") {
      params.system = ChaosSystem::Rossler;
      json defaults = preset_config("rossler-eval")["noise"]["rossler"];
      noise = noise_from_json(noise_cfg.value("rossler", defaults));
    } else {
      fail(Err::Config, "eval: unknown system '" + sys_name + "'");
    }
    McResult res = run_monte_carlo(params, noise, filters.specs, mc);
    std::string csv = mc_table_csv(res, sys_name);
    summary_csv += csv.substr(csv.find('\n') + 1);
    text += mc_table_text(res, sys_name) + "\n";
    results.emplace(sys_name, std::move(res));
  }

  if (out.contains("summary")) {
    std::string path = resolve_out_path(out.at("summary").get<std::string>(), out_dir);
    write_text_file(path, summary_csv);
    write_manifest(path, "eval", cfg);
  }
  if (out.contains("crmse")) {
    std::string all;
    for (auto& [name, res] : results) {
      std::string csv = crmse_csv(res);
      // prefix each series block with its system
      all += "# system: " + name + "\n" + csv;
    }
    std::string path = resolve_out_path(out.at("crmse").get<std::string>(), out_dir);
    write_text_file(path, all);
    write_manifest(path, "eval", cfg);
  }
  if (out.contains("records")) {
    std::string all;
    for (auto& [name, res] : results) all += records_jsonl(res);
    std::string path = resolve_out_path(out.at("records").get<std::string>(), out_dir);
    write_text_file(path, all);
    write_manifest(path, "eval", cfg);
  }

  summary["table"] = text;
  json rows = json::array();
  for (auto& [name, res] : results)
    for (const auto& r : res.rows) {
      json e;
      e["system"] = name;
      e["method"] = r.label;
      e["armse_mean"] = r.armse.mean;
      e["armse_std"] = r.armse.std_dev;
      e["armse_median"] = r.armse.median;
      e["divergence_pct"] = r.divergence_pct;
      rows.push_back(e);
    }
  summary["rows"] = rows;

  if (check) {
    auto find_row = [&](const std::string& sys_name, FilterSpec::Kind kind, double b) -> const McRow* {
      auto it = results.find(sys_name);
      if (it == results.end()) return nullptr;
      for (size_t i = 0; i < filters.specs.size(); ++i) {
        const auto& s = filters.specs[i];
        if (s.kind == kind && (kind != FilterSpec::Kind::Shkf || std::fabs(s.b - b) < 1e-12))
          return &it->second.rows[i];
      }
      return nullptr;
    };
    const McRow* ekf_l = find_row("lorenz", FilterSpec::Kind::Ekf, 0);
    const McRow* ndr_l = find_row("lorenz", FilterSpec::Kind::Ndr, 0);
    const McRow* ekf_r = find_row("rossler", FilterSpec::Kind::Ekf, 0);
    const McRow* s99_r = find_row("rossler", FilterSpec::Kind::Shkf, 0.99);
    const McRow* ndr_r = find_row("rossler", FilterSpec::Kind::Ndr, 0);
    if (!ekf_l || !ndr_l || !ekf_r || !s99_r || !ndr_r)
      fail(Err::Config, "eval --check needs ekf, shkf b=0.99 and ndr on lorenz and rossler");
    json checks = json::array();
    bool pass = true;
    auto record = [&](const std::string& name, bool ok, double lhs, double rhs) {
      json c;
      c["name"] = name;
      c["pass"] = ok;
      c["lhs"] = lhs;
      c["rhs"] = rhs;
      checks.push_back(c);
      pass = pass && ok;
    };
    record("ndr_lorenz_armse<=ekf", ndr_l->armse.mean <= ekf_l->armse.mean, ndr_l->armse.mean,
           ekf_l->armse.mean);
    record("ndr_rossler_median<shkf99", ndr_r->armse.median < s99_r->armse.median,
           ndr_r->armse.median, s99_r->armse.median);
    record("ndr_rossler_median<ekf", ndr_r->armse.median < ekf_r->armse.median,
           ndr_r->armse.median, ekf_r->armse.median);
    // classical filters do not diverge on the in-distribution system
    for (size_t i = 0; i < filters.specs.size(); ++i) {
      if (filters.specs[i].kind == FilterSpec::Kind::Ndr) continue;
      record("lorenz_divergence_zero:" + filters.specs[i].label,
             results.at("lorenz").rows[i].divergence_pct == 0.0,
             results.at("lorenz").rows[i].divergence_pct, 0.0);
    }
    summary["check"] = checks;
    if (!pass) {
      CommandResult r{summary.dump(2)};
      throw Error(Err::CheckFailed, "eval --check failed:\n" + summary.dump(2));
    }
  }
  return {summary.dump(2)};
}

CommandResult eval_uav(const json& cfg, const std::string& out_dir) {
  std::vector<std::string> scenario_names =
      cfg.value("scenarios", std::vector<std::string>{"baseline", "transient", "sensor-denied"});
  std::uint64_t seed = cfg.value("seed", std::uint64_t(5));
  QdroneParams params;
  std::vector<FlightLog> logs =
      logs_from_config(cfg.value("logs", json::parse(R"({"synthesize":{}})")), params, seed);
  DomainRandomization dr = dr_from_config(cfg.value("randomization", json::object()));
  std::vector<double> window = cfg.value("window", std::vector<double>{4.0, 6.0});
  double factor = cfg.value("factor", 2.0);
  if (window.size() != 2 || window[0] >= window[1])
    fail(Err::Config, "eval: window must be [start, end] seconds with start < end");

  EvalFilterSet filters = filters_from_config(cfg.at("filters"), out_dir, 19, 6, 32, seed);

  std::vector<ScenarioResult> results;
  for (const auto& name : scenario_names) {
    ScenarioSpec spec;
    spec.window_start = window[0];
    spec.window_end = window[1];
    spec.factor = factor;
    if (name == "baseline")
      spec.kind = ScenarioKind::Baseline;
    else if (name == "transient")
      spec.kind = ScenarioKind::TransientDisturbance;
    else if (name == "sensor-denied")
      spec.kind = ScenarioKind::SensorDenied;
    else
      fail(Err::Config, "eval: unknown scenario '" + name + "'");
    results.push_back(run_scenario(spec, filters.specs, logs, params, dr, seed));
  }

  json out = cfg.value("out", json::object());
  if (out.contains("summary")) {
    std::string path = resolve_out_path(out.at("summary").get<std::string>(), out_dir);
    write_text_file(path, scenario_table_csv(results));
    write_manifest(path, "eval", cfg);
  }

  json summary;
  summary["table"] = scenario_table_text(results);
  json rows = json::array();
  for (const auto& res : results)
    for (const auto& r : res.rows) {
      json e;
      e["scenario"] = scenario_name(res.kind);
      e["method"] = r.label;
      e["pos_rmse_mean"] = r.pos_rmse_mean;
      e["pos_rmse_std"] = r.pos_rmse_std;
      e["att_rmse_mean"] = r.att_rmse_mean;
      e["att_rmse_std"] = r.att_rmse_std;
      e["n_diverged"] = r.n_diverged;
      rows.push_back(e);
    }
  summary["rows"] = rows;
  return {summary.dump(2)};
}

}  // namespace

CommandResult cmd_eval(const std::string& config_json, bool check, const std::string& out_dir) {
  json cfg = parse_json(config_json);
  check_keys(cfg, {{"",
                    {"mode", "systems", "filters", "runs", "steps", "seed", "p0", "init_sigma",
                     "threads", "noise", "out", "scenarios", "logs", "window", "factor",
                     "randomization"}},
                   {"filters[]", kFilterKeys},
                   {"noise", {"lorenz", "rossler"}},
                   {"noise.lorenz", kNoiseKeys},
                   {"noise.rossler", kNoiseKeys},
                   {"logs", {"paths", "synthesize"}},
                   {"logs.synthesize", {"count", "duration", "dt", "seed"}},
                   {"randomization", kDrKeys},
                   {"out", {"summary", "crmse", "records"}}});
  std::string mode = cfg.value("mode", "chaos");
  if (mode == "chaos") return eval_chaos(cfg, check, out_dir);
  if (mode == "uav") return eval_uav(cfg, out_dir);
  fail(Err::Config, "eval: mode must be chaos or uav");
}

// ---- ablate -----------------------------------------------------------------------

CommandResult cmd_ablate(const std::string& config_json, const std::string& out_dir) {
  json cfg = parse_json(config_json);
  check_keys(cfg, {{"", {"axis", "seeds", "runs", "steps", "epochs", "batch_size", "seed",
                         "threads", "out"}},
                   {"out", {"summary"}}});
  AblationConfig ac;
  std::string axis = cfg.value("axis", "depth");
  if (axis == "depth")
    ac.axis = AblationAxis::Depth;
  else if (axis == "lambda_aux")
    ac.axis = AblationAxis::LambdaAux;
  else if (axis == "input_variant")
    ac.axis = AblationAxis::InputVariant;
  else
    fail(Err::Config, "ablate: axis must be depth, lambda_aux or input_variant");
  ac.n_seeds = cfg.value("seeds", 2);
  ac.n_runs = cfg.value("runs", 50);
  ac.t_steps = cfg.value("steps", 600);
  ac.epochs = cfg.value("epochs", 60);
  ac.batch_size = cfg.value("batch_size", 32);
  ac.seed = cfg.value("seed", std::uint64_t(1));
  ac.threads = cfg.value("threads", 1);
  if (ac.n_seeds < 1 || ac.n_runs < 1) fail(Err::Config, "ablate: seeds and runs must be >= 1");

  auto rows = run_ablation(ac);
  std::string csv = ablation_csv(rows, ac.axis);
  json out = cfg.value("out", json::object());
  if (out.contains("summary")) {
    std::string path = resolve_out_path(out.at("summary").get<std::string>(), out_dir);
    write_text_file(path, csv);
    write_manifest(path, "ablate", cfg);
  }
  json summary;
  summary["csv"] = csv;
  return {summary.dump(2)};
}

// ---- transfer ----------------------------------------------------------------------

CommandResult cmd_transfer(const std::string& config_json, const std::string& out_dir) {
  json cfg = parse_json(config_json);
  check_keys(cfg, {{"", {"checkpoint", "offsets", "systems", "runs", "steps", "seed", "threads",
                         "sensitivity", "out"}},
                   {"out", {"summary", "sensitivity"}}});

  PolicyArch arch;
  arch.n_x = 19;
  arch.n_z = 6;
  arch.d_pi = 32;
  PolicyWeights weights;
  std::uint64_t seed = cfg.value("seed", std::uint64_t(7));
  std::string ckpt = cfg.value("checkpoint", "");
  std::optional<Checkpoint> loaded;
  if (!ckpt.empty()) {
    loaded = load_checkpoint(resolve_out_path(ckpt, out_dir));
    arch = loaded->arch;
    weights = loaded->weights;
  } else {
    weights = init_weights(arch, seed);
  }
  if (arch.n_x != 19 || arch.n_z != 6)
    fail(Err::Config, "transfer: policy must carry the 19/6 source dimensions");

  std::vector<std::vector<int>> offsets = cfg.value(
      "offsets", std::vector<std::vector<int>>{{0, 0}, {4, 1}, {8, 2}, {12, 3}, {16, 4},
                                               {0, 3}, {8, 3}, {16, 3}});
  std::vector<std::string> systems = cfg.value("systems", std::vector<std::string>{"lorenz", "rossler"});
  McConfig mc;
  mc.n_runs = cfg.value("runs", 100);
  mc.t_steps = cfg.value("steps", 600);
  mc.seed = seed;
  mc.threads = cfg.value("threads", 1);

  std::string csv = "system,x_off,z_off,armse_mean,armse_std,armse_median,divergence_pct\n";
  json rows = json::array();
  for (const auto& sys_name : systems) {
    ChaosParams params;
    ChaosRandomization noise;
    if (sys_name == "rossler") {
      params.system = ChaosSystem::Rossler;
      noise.amp_max = 1.0;
      noise.outlier_prob = 0.10;
      noise.outlier_scale = 10.0;
    } else if (sys_name != "lorenz") {
      fail(Err::Config, "transfer: unknown system '" + sys_name + "'");
    }
    for (const auto& off : offsets) {
      if (off.size() != 2) fail(Err::Config, "transfer: offsets are [x_off, z_off] pairs");
      TransferMap map;
      map.x_off = off[0];
      map.z_off = off[1];
      try {
        map.validate();
      } catch (const Error& e) {
        fail(Err::Config, std::string("transfer: ") + e.what());
      }
      FilterSpec spec;
      spec.kind = FilterSpec::Kind::Ndr;
      spec.weights = &weights;
      spec.arch = &arch;
      spec.transfer = map;
      spec.label = "NDR(x" + std::to_string(map.x_off) + ",z" + std::to_string(map.z_off) + ")";
      McResult res = run_monte_carlo(params, noise, {spec}, mc);
      const McRow& r = res.rows[0];
      char line[256];
      std::snprintf(line, sizeof(line), "%s,%d,%d,%.17g,%.17g,%.17g,%.17g\n", sys_name.c_str(),
                    map.x_off, map.z_off, r.armse.mean, r.armse.std_dev, r.armse.median,
                    r.divergence_pct);
      csv += line;
      json e;
      e["system"] = sys_name;
      e["x_off"] = map.x_off;
      e["z_off"] = map.z_off;
      e["armse_mean"] = r.armse.mean;
      e["armse_median"] = r.armse.median;
      e["divergence_pct"] = r.divergence_pct;
      rows.push_back(e);
    }
  }

  json out = cfg.value("out", json::object());
  if (out.contains("summary")) {
    std::string path = resolve_out_path(out.at("summary").get<std::string>(), out_dir);
    write_text_file(path, csv);
    write_manifest(path, "transfer", cfg);
  }
  if (cfg.value("sensitivity", false) && out.contains("sensitivity")) {
    Tensor y = Tensor::zeros({arch.in_dim()});
    auto sens = policy_sensitivity(weights, arch, y, initial_policy_state(arch), 1e-4);
    std::string s = "output_channel,input_channel,d_sensitivity\n";
    char line[96];
    for (int i = 0; i < arch.out_dim(); ++i)
      for (int j = 0; j < arch.in_dim(); ++j) {
        std::snprintf(line, sizeof(line), "%d,%d,%.10g\n", i, j,
                      sens[size_t(i) * size_t(arch.in_dim()) + size_t(j)]);
        s += line;
      }
    std::string path = resolve_out_path(out.at("sensitivity").get<std::string>(), out_dir);
    write_text_file(path, s);
    write_manifest(path, "transfer", cfg);
  }

  json summary;
  summary["rows"] = rows;
  summary["csv"] = csv;
  return {summary.dump(2)};
}

// ---- profile -----------------------------------------------------------------------

CommandResult cmd_profile(const std::string& config_json, const std::string& out_dir) {
  json cfg = parse_json(config_json);
  check_keys(cfg, {{"", {"steps", "seed", "out"}}, {"out", {"summary"}}});
  int steps = cfg.value("steps", 10000);
  std::uint64_t seed = cfg.value("seed", std::uint64_t(3));
  if (steps < 100) fail(Err::Config, "profile: steps must be >= 100");

  QdroneParams params;
  PolicyArch arch;
  arch.n_x = 19;
  arch.n_z = 6;
  arch.d_pi = 32;
  PolicyWeights weights = init_weights(arch, seed);
  LatencyReport rep = profile_latency(arch, weights, steps, params);

  char line[256];
  std::snprintf(line, sizeof(line),
                "filter,per_step_us\nekf,%.6g\nndr-shkf,%.6g\nratio,%.6g\n", rep.ekf_us,
                rep.ndr_us, rep.ratio);
  json out = cfg.value("out", json::object());
  if (out.contains("summary")) {
    std::string path = resolve_out_path(out.at("summary").get<std::string>(), out_dir);
    write_text_file(path, line);
    write_manifest(path, "profile", cfg);
  }
  json summary;
  summary["ekf_us"] = rep.ekf_us;
  summary["ndr_us"] = rep.ndr_us;
  summary["ratio"] = rep.ratio;
  summary["n_steps"] = rep.n_steps;
  return {summary.dump(2)};
}

CommandResult run_command(const std::string& name, const std::string& config_json, bool check,
                          const std::string& out_dir) {
  if (name == "simulate") return cmd_simulate(config_json, out_dir);
  if (name == "train") return cmd_train(config_json, out_dir);
  if (name == "eval") return cmd_eval(config_json, check, out_dir);
  if (name == "ablate") return cmd_ablate(config_json, out_dir);
  if (name == "transfer") return cmd_transfer(config_json, out_dir);
  if (name == "profile") return cmd_profile(config_json, out_dir);
  fail(Err::Config, "unknown command '" + name + "'");
}

}  // namespace ndr
