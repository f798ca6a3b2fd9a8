#include "ndrshkf.h"

#include <cstring>
#include <memory>
#include <string>

#include "core/chaos.hpp"
#include "core/drivers.hpp"
#include "core/models.hpp"
#include "core/ndr_filter.hpp"
#include "core/uav.hpp"

namespace {

thread_local std::string g_last_error;

int set_error(const ndr::Error& e) {
  g_last_error = e.what();
  return int(e.code());
}

int set_error(const std::exception& e) {
  g_last_error = e.what();
  return NDR_ERR_RUNTIME;
}

template <class F>
int guarded(F&& f) {
  try {
    f();
    g_last_error.clear();
    return NDR_OK;
  } catch (const ndr::Error& e) {
    return set_error(e);
  } catch (const std::exception& e) {
    return set_error(e);
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

}  // namespace

struct ndr_model {
  ndr::SystemModel model;
  double dt = 0.01;
};

struct ndr_policy {
  ndr::PolicyArch arch;
  ndr::PolicyWeights weights;
};

struct ndr_filter {
  enum class Kind { Ekf, Shkf, Ndr } kind = Kind::Ekf;
  double b = 0.99;
  const ndr_model* model = nullptr;
  const ndr_policy* policy = nullptr;
  ndr::FilterState fs;
  ndr::NdrState ns;
  ndr::NdrConfig cfg;
  ndr::Tensor q_base, r_base;
  ndr::Safeguards sg;
  long long k = 0;
  bool initialized = false;
};

extern "C" {

const char* ndr_version(void) { return "0.1.0"; }

const char* ndr_status_name(int status) {
  switch (status) {
    case NDR_OK: return "ok";
    case NDR_ERR_CONFIG: return "config";
    case NDR_ERR_SHAPE: return "shape-mismatch";
    case NDR_ERR_NOT_SPD: return "not-positive-definite";
    case NDR_ERR_NONFINITE: return "non-finite-value";
    case NDR_ERR_SINGULAR: return "singular-innovation-covariance";
    case NDR_ERR_DEGENERATE: return "degenerate-observation";
    case NDR_ERR_GIMBAL_LOCK: return "gimbal-lock-proximity";
    case NDR_ERR_OFFSET_RANGE: return "offset-out-of-range";
    case NDR_ERR_DIVERGED: return "diverged";
    case NDR_ERR_IO: return "io";
    case NDR_ERR_NAN_STREAK: return "aborted-on-nan-streak";
    case NDR_ERR_ALL_DIVERGED: return "all-runs-diverged";
    case NDR_ERR_RUNTIME: return "runtime";
    case NDR_ERR_INVALID_ARG: return "invalid-argument";
    case NDR_ERR_CHECK_FAILED: return "check-failed";
    case NDR_ERR_NONFINITE_GRADIENT: return "non-finite-gradient";
  }
  return "unknown";
}

const char* ndr_last_error(void) { return g_last_error.c_str(); }

void ndr_string_free(char* s) { std::free(s); }

/* ---- models ---- */

ndr_status ndr_model_create_lorenz(double dt, ndr_model** out) {
  return ndr_status(guarded([&] {
    if (!out || dt <= 0.0) ndr::fail(ndr::Err::InvalidArg, "bad arguments");
    ndr::ChaosParams p;
    p.dt = dt;
    auto* m = new ndr_model;
    m->model = ndr::make_chaos_model(p);
    m->dt = dt;
    *out = m;
  }));
}

ndr_status ndr_model_create_rossler(double dt, ndr_model** out) {
  return ndr_status(guarded([&] {
    if (!out || dt <= 0.0) ndr::fail(ndr::Err::InvalidArg, "bad arguments");
    ndr::ChaosParams p;
    p.system = ndr::ChaosSystem::Rossler;
    p.dt = dt;
    auto* m = new ndr_model;
    m->model = ndr::make_chaos_model(p);
    m->dt = dt;
    *out = m;
  }));
}

ndr_status ndr_model_create_uav(int formulation, ndr_model** out) {
  return ndr_status(guarded([&] {
    if (!out || (formulation != 1 && formulation != 2))
      ndr::fail(ndr::Err::InvalidArg, "formulation must be 1 or 2");
    ndr::QdroneParams p;
    auto* m = new ndr_model;
    m->model = ndr::make_uav_model(
        formulation == 1 ? ndr::UavFormulation::Kinematic : ndr::UavFormulation::Dynamic, p);
    m->dt = 1e-3;
    *out = m;
  }));
}

ndr_status ndr_model_dims(const ndr_model* m, int* n_x, int* n_z) {
  return ndr_status(guarded([&] {
    if (!m || !n_x || !n_z) ndr::fail(ndr::Err::InvalidArg, "null argument");
    *n_x = m->model.n_x;
    *n_z = m->model.n_z;
  }));
}

void ndr_model_destroy(ndr_model* m) { delete m; }

/* ---- policies ---- */

ndr_status ndr_policy_create(const char* arch_json, uint64_t seed, ndr_policy** out) {
  return ndr_status(guarded([&] {
    if (!out) ndr::fail(ndr::Err::InvalidArg, "null output");
    ndr::json j = arch_json ? ndr::parse_json(arch_json) : ndr::json::object();
    ndr::check_keys(j, {{"",
                         {"n_x", "n_z", "depth", "d_enc", "d_e", "d_h", "d_pi", "variant",
                          "clip_bound", "epsilon"}}});
    ndr::PolicyArch arch;
    arch.n_x = j.value("n_x", 3);
    arch.n_z = j.value("n_z", 2);
    if (j.contains("depth")) arch.depth = j.at("depth").get<int>();
    if (j.contains("d_enc")) arch.d_enc = j.at("d_enc").get<int>();
    if (j.contains("d_e")) arch.d_e = j.at("d_e").get<int>();
    if (j.contains("d_h")) arch.d_h = j.at("d_h").get<int>();
    if (j.contains("d_pi")) arch.d_pi = j.at("d_pi").get<int>();
    if (j.contains("variant"))
      arch.features.variant = ndr::feature_variant_from_name(j.at("variant").get<std::string>());
    if (j.contains("clip_bound")) arch.features.clip_bound = j.at("clip_bound").get<double>();
    if (j.contains("epsilon")) arch.features.epsilon = j.at("epsilon").get<double>();
    auto* p = new ndr_policy;
    p->arch = arch;
    p->weights = ndr::init_weights(arch, seed);
    *out = p;
  }));
}

ndr_status ndr_policy_load(const char* checkpoint_path, ndr_policy** out) {
  return ndr_status(guarded([&] {
    if (!checkpoint_path || !out) ndr::fail(ndr::Err::InvalidArg, "null argument");
    ndr::Checkpoint c = ndr::load_checkpoint(checkpoint_path);
    auto* p = new ndr_policy;
    p->arch = c.arch;
    p->weights = std::move(c.weights);
    *out = p;
  }));
}

ndr_status ndr_policy_save(const ndr_policy* p, const char* checkpoint_path) {
  return ndr_status(guarded([&] {
    if (!p || !checkpoint_path) ndr::fail(ndr::Err::InvalidArg, "null argument");
    ndr::save_checkpoint(checkpoint_path, p->arch, p->weights);
  }));
}

ndr_status ndr_policy_num_params(const ndr_policy* p, long long* out) {
  return ndr_status(guarded([&] {
    if (!p || !out) ndr::fail(ndr::Err::InvalidArg, "null argument");
    *out = p->weights.num_params();
  }));
}

void ndr_policy_destroy(ndr_policy* p) { delete p; }

/* ---- filters ---- */

ndr_status ndr_filter_create(const ndr_model* m, const char* options_json,
                             const ndr_policy* policy, ndr_filter** out) {
  return ndr_status(guarded([&] {
    if (!m || !out) ndr::fail(ndr::Err::InvalidArg, "null argument");
    ndr::json j = options_json ? ndr::parse_json(options_json) : ndr::json::object();
    ndr::check_keys(j, {{"", {"kind", "b", "floor", "band_factor", "joseph"}}});
    std::string kind = j.value("kind", "ekf");
    auto* f = new ndr_filter;
    f->model = m;
    f->sg.floor = j.value("floor", 1e-8);
    f->sg.band_factor = j.value("band_factor", 100.0);
    f->sg.joseph_form = j.value("joseph", false);
    if (kind == "ekf") {
      f->kind = ndr_filter::Kind::Ekf;
    } else if (kind == "shkf") {
      f->kind = ndr_filter::Kind::Shkf;
      f->b = j.value("b", 0.99);
      if (!(f->b > 0.0 && f->b < 1.0)) {
        delete f;
        ndr::fail(ndr::Err::Config, "shkf b must be in (0,1)");
      }
    } else if (kind == "ndr") {
      if (!policy) {
        delete f;
        ndr::fail(ndr::Err::InvalidArg, "ndr filter requires a policy");
      }
      if (policy->arch.n_x != m->model.n_x || policy->arch.n_z != m->model.n_z) {
        delete f;
        ndr::fail(ndr::Err::Shape, "policy dimensions do not match the model");
      }
      f->kind = ndr_filter::Kind::Ndr;
      f->policy = policy;
    } else {
      delete f;
      ndr::fail(ndr::Err::Config, "filter kind must be ekf, shkf or ndr");
    }
    *out = f;
  }));
}

ndr_status ndr_filter_init(ndr_filter* f, const double* x0, const double* p0_diag,
                           const double* q_diag, const double* r_diag) {
  return ndr_status(guarded([&] {
    if (!f || !x0 || !p0_diag || !q_diag || !r_diag)
      ndr::fail(ndr::Err::InvalidArg, "null argument");
    int n_x = f->model->model.n_x, n_z = f->model->model.n_z;
    f->fs.x_hat = ndr::Tensor({n_x}, ndr::Buf(x0, x0 + n_x));
    f->fs.p = ndr::diag_matrix(ndr::Tensor({n_x}, ndr::Buf(p0_diag, p0_diag + n_x)));
    f->fs.q_diag = ndr::Tensor({n_x}, ndr::Buf(q_diag, q_diag + n_x));
    f->fs.r_diag = ndr::Tensor({n_z}, ndr::Buf(r_diag, r_diag + n_z));
    f->q_base = f->fs.q_diag;
    f->r_base = f->fs.r_diag;
    f->k = 0;
    if (f->kind == ndr_filter::Kind::Ndr) {
      f->ns.fs = f->fs;
      f->ns.ps = ndr::initial_policy_state(f->policy->arch);
      f->ns.k = 0;
      f->cfg.safeguards = f->sg;
      f->cfg.q_base = f->q_base;
      f->cfg.r_base = f->r_base;
      f->cfg.with_reconstruction = false;
    }
    f->initialized = true;
  }));
}

ndr_status ndr_filter_step(ndr_filter* f, const double* z, const double* u, double dt) {
  return ndr_status(guarded([&] {
    if (!f || !z) ndr::fail(ndr::Err::InvalidArg, "null argument");
    if (!f->initialized) ndr::fail(ndr::Err::InvalidArg, "filter not initialized");
    int n_z = f->model->model.n_z;
    ndr::Tensor zt({n_z}, ndr::Buf(z, z + n_z));
    ndr::Tensor ut;
    if (u) {
      int nu = f->model->model.name == "uav-dynamic" ? 4 : (f->model->model.name == "uav-kinematic" ? 6 : 0);
      if (nu > 0) ut = ndr::Tensor({nu}, ndr::Buf(u, u + nu));
    }
    switch (f->kind) {
      case ndr_filter::Kind::Ekf:
        f->fs = ndr::ekf_step(f->model->model, f->fs, zt, ut, dt, f->sg);
        break;
      case ndr_filter::Kind::Shkf:
        f->fs = ndr::shkf_step(f->model->model, f->fs, zt, ut, dt,
                               ndr::shkf_adaptation_factor(f->b, f->k), f->q_base, f->r_base, f->sg);
        break;
      case ndr_filter::Kind::Ndr: {
        ndr::PolicyAdapter adapter{&f->policy->weights, &f->policy->arch, nullptr};
        f->ns = ndr::ndr_step(f->model->model, adapter, f->cfg, f->ns, zt, ut, dt);
        f->fs = f->ns.fs;
        break;
      }
    }
    f->k += 1;
  }));
}

ndr_status ndr_filter_state(const ndr_filter* f, double* x_out, double* p_diag_out,
                            double* q_diag_out, double* r_diag_out) {
  return ndr_status(guarded([&] {
    if (!f) ndr::fail(ndr::Err::InvalidArg, "null argument");
    if (!f->initialized) ndr::fail(ndr::Err::InvalidArg, "filter not initialized");
    int n_x = f->model->model.n_x, n_z = f->model->model.n_z;
    if (x_out)
      for (int i = 0; i < n_x; ++i) x_out[i] = f->fs.x_hat(i);
    if (p_diag_out)
      for (int i = 0; i < n_x; ++i) p_diag_out[i] = f->fs.p(i, i);
    if (q_diag_out)
      for (int i = 0; i < n_x; ++i) q_diag_out[i] = f->fs.q_diag(i);
    if (r_diag_out)
      for (int i = 0; i < n_z; ++i) r_diag_out[i] = f->fs.r_diag(i);
  }));
}

void ndr_filter_destroy(ndr_filter* f) { delete f; }

/* ---- command drivers ---- */

namespace {

ndr_status run_cmd(const char* name, const char* config_json, bool check, const char* out_dir,
                   char** summary) {
  return ndr_status(guarded([&] {
    if (!config_json) ndr::fail(ndr::Err::InvalidArg, "null config");
    ndr::CommandResult res =
        ndr::run_command(name, config_json, check, out_dir ? out_dir : "");
    if (summary) *summary = dup_string(res.summary_json);
  }));
}

}  // namespace

ndr_status ndr_cmd_simulate(const char* c, const char* d, char** s) { return run_cmd("simulate", c, false, d, s); }
ndr_status ndr_cmd_train(const char* c, const char* d, char** s) { return run_cmd("train", c, false, d, s); }
ndr_status ndr_cmd_eval(const char* c, int check, const char* d, char** s) { return run_cmd("eval", c, check != 0, d, s); }
ndr_status ndr_cmd_ablate(const char* c, const char* d, char** s) { return run_cmd("ablate", c, false, d, s); }
ndr_status ndr_cmd_transfer(const char* c, const char* d, char** s) { return run_cmd("transfer", c, false, d, s); }
ndr_status ndr_cmd_profile(const char* c, const char* d, char** s) { return run_cmd("profile", c, false, d, s); }

ndr_status ndr_preset(const char* name, char** config_json) {
  return ndr_status(guarded([&] {
    if (!name || !config_json) ndr::fail(ndr::Err::InvalidArg, "null argument");
    *config_json = dup_string(ndr::preset_config(name).dump(2));
  }));
}

}  // extern "C"
