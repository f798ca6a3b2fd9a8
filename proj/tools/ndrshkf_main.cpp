#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ndrshkf.h"

using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitCheckFailed = 3;

int exit_code_for(int status) {
  switch (status) {
    case NDR_OK: return kExitOk;
    case NDR_ERR_CONFIG:
    case NDR_ERR_INVALID_ARG: return kExitConfig;
    case NDR_ERR_CHECK_FAILED: return kExitCheckFailed;
    default: return kExitRuntime;
  }
}

struct CommonOpts {
  std::string config_path;
  std::string preset;
  std::vector<std::string> overrides;
  std::string out_dir;
  int threads = 0;
  bool quiet = false;
};

void add_common(CLI::App* app, CommonOpts& opts) {
  app->add_option("--config", opts.config_path, "JSON configuration file");
  app->add_option("--preset", opts.preset,
                  "named preset: lorenz-train, rossler-eval, uav-bench");
  app->add_option("--set", opts.overrides,
                  "dotted-path override, e.g. train.epochs=500 (repeatable)");
  app->add_option("--out-dir", opts.out_dir, "output directory (default $NDRSHKF_OUT_DIR or .)");
  app->add_option("--threads", opts.threads, "worker thread cap (0 = machine cores)");
  app->add_flag("--quiet", opts.quiet, "suppress the summary printout");
}

// Applies "a.b.c=value" into the json tree; values parse as JSON, falling
// back to plain strings.
void apply_override(json& j, const std::string& assignment) {
  size_t eq = assignment.find('=');
  if (eq == std::string::npos) throw CLI::ValidationError("--set expects key.path=value");
  std::string path = assignment.substr(0, eq);
  std::string value = assignment.substr(eq + 1);
  json parsed;
  try {
    parsed = json::parse(value);
  } catch (const std::exception&) {
    parsed = value;
  }
  json* node = &j;
  size_t start = 0;
  while (true) {
    size_t dot = path.find('.', start);
    std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw CLI::ValidationError("bad override path: " + path);
    if (dot == std::string::npos) {
      (*node)[key] = parsed;
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

int build_config(const CommonOpts& opts, json& out) {
  out = json::object();
  if (!opts.preset.empty()) {
    char* text = nullptr;
    int rc = ndr_preset(opts.preset.c_str(), &text);
    if (rc != NDR_OK) {
      std::cerr << "error: " << ndr_last_error() << "\n";
      return exit_code_for(rc);
    }
    out = json::parse(text);
    ndr_string_free(text);
  }
  if (!opts.config_path.empty()) {
    std::ifstream in(opts.config_path);
    if (!in) {
      std::cerr << "error: cannot read " << opts.config_path << "\n";
      return kExitConfig;
    }
    std::stringstream ss;
    ss << in.rdbuf();
    try {
      json file_cfg = json::parse(ss.str());
      if (out.empty())
        out = file_cfg;
      else
        out.merge_patch(file_cfg);
    } catch (const std::exception& e) {
      std::cerr << "error: invalid config json: " << e.what() << "\n";
      return kExitConfig;
    }
  }
  for (const auto& o : opts.overrides) {
    try {
      apply_override(out, o);
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return kExitConfig;
    }
  }
  if (opts.threads > 0) out["threads"] = opts.threads;
  return kExitOk;
}

using CmdFn = ndr_status (*)(const char*, const char*, char**);

int run_simple(const CommonOpts& opts, CmdFn fn) {
  json cfg;
  if (int rc = build_config(opts, cfg); rc != kExitOk) return rc;
  char* summary = nullptr;
  int rc = fn(cfg.dump().c_str(), opts.out_dir.empty() ? nullptr : opts.out_dir.c_str(), &summary);
  if (rc != NDR_OK) {
    std::cerr << "error (" << ndr_status_name(rc) << "): " << ndr_last_error() << "\n";
    return exit_code_for(rc);
  }
  if (summary && !opts.quiet) {
    json s = json::parse(summary);
    if (s.contains("table"))
      std::cout << s["table"].get<std::string>();
    else
      std::cout << summary << "\n";
  }
  ndr_string_free(summary);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"NDR-SHKF: adaptive Kalman filtering with a learned memory-attenuation policy"};
  app.require_subcommand(1);

  CommonOpts opts;
  bool check = false;
  std::string manifest_path;

  auto* sim = app.add_subcommand("simulate", "generate chaotic trajectories as CSV");
  auto* train = app.add_subcommand("train", "train a policy end to end and write a checkpoint");
  auto* eval = app.add_subcommand("eval", "Monte-Carlo benchmark (chaos) or scenario table (uav)");
  auto* ablate = app.add_subcommand("ablate", "train/evaluate an ablation axis");
  auto* transfer = app.add_subcommand("transfer", "cross-dynamics zero-fill transfer benchmark");
  auto* profile = app.add_subcommand("profile", "per-step latency of ekf vs ndr-shkf");
  auto* rerun = app.add_subcommand("rerun", "re-execute a command from an artifact manifest");
  rerun->add_option("manifest", manifest_path, "path to a .manifest.json file")->required();

  for (auto* sc : {sim, train, eval, ablate, transfer, profile}) add_common(sc, opts);
  add_common(rerun, opts);
  eval->add_flag("--check", check, "enforce the benchmark orderings (exit 3 on failure)");

  CLI11_PARSE(app, argc, argv);

  if (sim->parsed()) return run_simple(opts, ndr_cmd_simulate);
  if (train->parsed()) return run_simple(opts, ndr_cmd_train);
  if (ablate->parsed()) return run_simple(opts, ndr_cmd_ablate);
  if (transfer->parsed()) return run_simple(opts, ndr_cmd_transfer);
  if (profile->parsed()) return run_simple(opts, ndr_cmd_profile);

  if (eval->parsed()) {
    json cfg;
    if (int rc = build_config(opts, cfg); rc != kExitOk) return rc;
    char* summary = nullptr;
    int rc = ndr_cmd_eval(cfg.dump().c_str(), check ? 1 : 0,
                          opts.out_dir.empty() ? nullptr : opts.out_dir.c_str(), &summary);
    if (rc != NDR_OK) {
      std::cerr << "error (" << ndr_status_name(rc) << "): " << ndr_last_error() << "\n";
      return exit_code_for(rc);
    }
    if (summary && !opts.quiet) {
      json s = json::parse(summary);
      if (s.contains("table")) std::cout << s["table"].get<std::string>();
      if (s.contains("check")) std::cout << "check: pass\n";
    }
    ndr_string_free(summary);
    return kExitOk;
  }

  if (rerun->parsed()) {
    std::ifstream in(manifest_path);
    if (!in) {
      std::cerr << "error: cannot read " << manifest_path << "\n";
      return kExitConfig;
    }
    std::stringstream ss;
    ss << in.rdbuf();
    json manifest;
    try {
      manifest = json::parse(ss.str());
    } catch (const std::exception& e) {
      std::cerr << "error: bad manifest: " << e.what() << "\n";
      return kExitConfig;
    }
    std::string command = manifest.value("command", "");
    json cfg = manifest.value("config", json::object());
    for (const auto& o : opts.overrides) apply_override(cfg, o);
    const char* dir = opts.out_dir.empty() ? nullptr : opts.out_dir.c_str();
    char* summary = nullptr;
    int rc;
    if (command == "simulate")
      rc = ndr_cmd_simulate(cfg.dump().c_str(), dir, &summary);
    else if (command == "train")
      rc = ndr_cmd_train(cfg.dump().c_str(), dir, &summary);
    else if (command == "eval")
      rc = ndr_cmd_eval(cfg.dump().c_str(), 0, dir, &summary);
    else if (command == "ablate")
      rc = ndr_cmd_ablate(cfg.dump().c_str(), dir, &summary);
    else if (command == "transfer")
      rc = ndr_cmd_transfer(cfg.dump().c_str(), dir, &summary);
    else if (command == "profile")
      rc = ndr_cmd_profile(cfg.dump().c_str(), dir, &summary);
    else {
      std::cerr << "error: manifest has unknown command '" << command << "'\n";
      return kExitConfig;
    }
    if (rc != NDR_OK) {
      std::cerr << "error (" << ndr_status_name(rc) << "): " << ndr_last_error() << "\n";
      return exit_code_for(rc);
    }
    ndr_string_free(summary);
    return kExitOk;
  }

  return kExitConfig;
}
