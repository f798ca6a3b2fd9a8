#include "config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

namespace ndr {

json parse_json(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const std::exception& e) {
    fail(Err::Config, std::string("invalid json: ") + e.what());
  }
}

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(Err::Io, "cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_json(ss.str());
}

void check_keys(const json& j, const std::map<std::string, std::set<std::string>>& allowed,
                const std::string& path) {
  if (j.is_object()) {
    auto it = allowed.find(path);
    if (it == allowed.end()) fail(Err::Config, "unexpected object at '" + path + "'");
    for (auto& [key, value] : j.items()) {
      if (!it->second.count(key))
        fail(Err::Config, "unknown key '" + (path.empty() ? key : path + "." + key) + "'");
      std::string child = path.empty() ? key : path + "." + key;
      if (value.is_object() || value.is_array()) check_keys(value, allowed, child);
    }
  } else if (j.is_array()) {
    std::string child = path + "[]";
    if (allowed.count(child)) {
      for (const auto& v : j)
        if (v.is_object() || v.is_array()) check_keys(v, allowed, child);
    }
    // arrays of scalars need no declared schema
  }
}

void apply_override(json& j, const std::string& assignment) {
  size_t eq = assignment.find('=');
  if (eq == std::string::npos)
    fail(Err::Config, "override must look like key.path=value: " + assignment);
  std::string path = assignment.substr(0, eq);
  std::string value = assignment.substr(eq + 1);

  json parsed;
  try {
    parsed = json::parse(value);
  } catch (const std::exception&) {
    parsed = value;  // plain string
  }

  json* node = &j;
  size_t start = 0;
  while (true) {
    size_t dot = path.find('.', start);
    std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) fail(Err::Config, "bad override path: " + path);
    if (dot == std::string::npos) {
      (*node)[key] = parsed;
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

std::vector<std::string> preset_names() { return {"lorenz-train", "rossler-eval", "uav-bench"}; }

json preset_config(const std::string& name) {
  if (name == "lorenz-train") {
    return json::parse(R"({
      "env": "chaos",
      "arch": {"depth": 3, "d_enc": 32, "d_e": 16, "d_h": 32, "d_pi": 16,
               "variant": "whitened", "clip_bound": 10.0, "epsilon": 1e-6},
      "train": {"epochs": 300, "batches_per_epoch": 1, "batch_size": 64,
                "seq_len": [[0, 60]], "lr": 0.001, "lr_decay": [[0.0, 1.0]],
                "grad_clip": 0.5, "lambda_aux": 0.1, "seed": 1, "checkpoint_every": 0},
      "noise": {"q_base": 0.01, "amp_min": 0.0, "amp_max": 0.2,
                "omega_min": 0.1, "omega_max": 1.0, "r_base": [1.0, 2.0],
                "outlier_prob": 0.05, "outlier_scale": 5.0},
      "threads": 1,
      "out": {"checkpoint": "weights.ckpt", "log": "train.jsonl"}
    })");
  }
  if (name == "rossler-eval") {
    return json::parse(R"({
      "mode": "chaos",
      "systems": ["lorenz", "rossler"],
      "filters": [{"kind": "ekf", "label": "EKF"},
                  {"kind": "shkf", "b": 0.95, "label": "SHKF95"},
                  {"kind": "shkf", "b": 0.99, "label": "SHKF99"},
                  {"kind": "ndr", "checkpoint": "weights.ckpt", "label": "NDR-SHKF"}],
      "runs": 200, "steps": 600, "seed": 7, "p0": 1.0, "threads": 1,
      "noise": {
        "lorenz": {"q_base": 0.01, "amp_min": 0.0, "amp_max": 0.2,
                   "omega_min": 0.1, "omega_max": 1.0, "r_base": [1.0, 2.0],
                   "outlier_prob": 0.05, "outlier_scale": 5.0},
        "rossler": {"q_base": 0.01, "amp_min": 0.0, "amp_max": 1.0,
                    "omega_min": 0.1, "omega_max": 1.0, "r_base": [1.0, 2.0],
                    "outlier_prob": 0.10, "outlier_scale": 10.0}
      },
      "out": {"summary": "eval_summary.csv", "crmse": "crmse.csv", "records": "records.jsonl"}
    })");
  }
  if (name == "uav-bench") {
    return json::parse(R"({
      "mode": "uav",
      "scenarios": ["baseline", "transient", "sensor-denied"],
      "filters": [{"kind": "ekf", "label": "EKF"},
                  {"kind": "shkf", "b": 0.995, "label": "SHKF995"},
                  {"kind": "shkf", "b": 0.999, "label": "SHKF999"},
                  {"kind": "ndr", "checkpoint": "", "label": "NDR-SHKF"}],
      "logs": {"synthesize": {"count": 3, "duration": 10.0, "dt": 0.001}},
      "window": [4.0, 6.0], "factor": 2.0,
      "randomization": {"sigma_meas": 1.0, "sigma_out_meas": 5.0, "eps_meas": 0.05,
                        "sigma_inp": 0.1, "sigma_out_inp": 5.0, "eps_inp": 0.01,
                        "sigma_sf": 0.001, "sigma_bias": 0.001, "sigma_walk": 1e-05,
                        "vib_amp": 0.1, "vib_omega": 628.0, "sigma_vib": 1.0, "ratio": 0.5},
      "seed": 5, "threads": 1,
      "out": {"summary": "uav_summary.csv"}
    })");
  }
  fail(Err::Config, "unknown preset '" + name + "' (expected lorenz-train, rossler-eval, uav-bench)");
}

std::string resolve_out_path(const std::string& path, const std::string& out_dir) {
  if (path.empty() || path.front() == '/') return path;
  std::string dir = out_dir;
  if (dir.empty()) {
    if (const char* env = std::getenv("NDRSHKF_OUT_DIR")) dir = env;
  }
  if (dir.empty()) return path;
  if (dir.back() != '/') dir += '/';
  return dir + path;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) fail(Err::Io, "cannot write " + path);
  out << content;
  if (!out) fail(Err::Io, "write failed for " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Err::Io, "cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_manifest(const std::string& artifact_path, const std::string& command,
                    const json& resolved_config) {
  json m;
  m["command"] = command;
  m["config"] = resolved_config;
  write_text_file(artifact_path + ".manifest.json", m.dump(2) + "\n");
}

}  // namespace ndr
