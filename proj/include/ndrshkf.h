/* ndrshkf: adaptive Kalman filtering with a learned memory-attenuation policy.
 *
 * C interface over the C++ core. All functions return ndr_status; outputs are
 * written through pointers. Handles are opaque and must be released with the
 * matching destroy function. Strings returned through char** are owned by the
 * caller and released with ndr_string_free.
 */
#ifndef NDRSHKF_H
#define NDRSHKF_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define NDRSHKF_API __declspec(dllexport)
#else
#define NDRSHKF_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ndr_status {
  NDR_OK = 0,
  NDR_ERR_CONFIG = 1,
  NDR_ERR_SHAPE = 2,
  NDR_ERR_NOT_SPD = 3,
  NDR_ERR_NONFINITE = 4,
  NDR_ERR_SINGULAR = 5,
  NDR_ERR_DEGENERATE = 6,
  NDR_ERR_GIMBAL_LOCK = 7,
  NDR_ERR_OFFSET_RANGE = 8,
  NDR_ERR_DIVERGED = 9,
  NDR_ERR_IO = 10,
  NDR_ERR_NAN_STREAK = 11,
  NDR_ERR_ALL_DIVERGED = 12,
  NDR_ERR_RUNTIME = 13,
  NDR_ERR_INVALID_ARG = 14,
  NDR_ERR_CHECK_FAILED = 15,
  NDR_ERR_NONFINITE_GRADIENT = 16
} ndr_status;

NDRSHKF_API const char* ndr_version(void);
NDRSHKF_API const char* ndr_status_name(int status);
/* Message for the most recent failure on this thread; empty when none. */
NDRSHKF_API const char* ndr_last_error(void);
NDRSHKF_API void ndr_string_free(char* s);

/* ---- system models -------------------------------------------------------- */

typedef struct ndr_model ndr_model;

NDRSHKF_API ndr_status ndr_model_create_lorenz(double dt, ndr_model** out);
NDRSHKF_API ndr_status ndr_model_create_rossler(double dt, ndr_model** out);
/* formulation 1 = imu-driven kinematics, 2 = control-driven dynamics */
NDRSHKF_API ndr_status ndr_model_create_uav(int formulation, ndr_model** out);
NDRSHKF_API ndr_status ndr_model_dims(const ndr_model* m, int* n_x, int* n_z);
NDRSHKF_API void ndr_model_destroy(ndr_model* m);

/* ---- policies --------------------------------------------------------------- */

typedef struct ndr_policy ndr_policy;

/* arch_json accepts {"n_x","n_z","depth","d_enc","d_e","d_h","d_pi",
 * "variant","clip_bound","epsilon"}; omitted keys use chaos defaults. */
NDRSHKF_API ndr_status ndr_policy_create(const char* arch_json, uint64_t seed, ndr_policy** out);
NDRSHKF_API ndr_status ndr_policy_load(const char* checkpoint_path, ndr_policy** out);
NDRSHKF_API ndr_status ndr_policy_save(const ndr_policy* p, const char* checkpoint_path);
NDRSHKF_API ndr_status ndr_policy_num_params(const ndr_policy* p, long long* out);
NDRSHKF_API void ndr_policy_destroy(ndr_policy* p);

/* ---- filters ---------------------------------------------------------------- */

typedef struct ndr_filter ndr_filter;

/* options_json: {"kind":"ekf"} | {"kind":"shkf","b":0.99} | {"kind":"ndr"}.
 * The ndr kind requires a policy whose dimensions match the model. */
NDRSHKF_API ndr_status ndr_filter_create(const ndr_model* m, const char* options_json,
                                         const ndr_policy* policy, ndr_filter** out);
/* x0 has n_x entries; p0/q/r are diagonal vectors (n_x, n_x, n_z). */
NDRSHKF_API ndr_status ndr_filter_init(ndr_filter* f, const double* x0, const double* p0_diag,
                                       const double* q_diag, const double* r_diag);
/* z has n_z entries; u may be NULL for models without inputs. */
NDRSHKF_API ndr_status ndr_filter_step(ndr_filter* f, const double* z, const double* u, double dt);
NDRSHKF_API ndr_status ndr_filter_state(const ndr_filter* f, double* x_out, double* p_diag_out,
                                        double* q_diag_out, double* r_diag_out);
NDRSHKF_API void ndr_filter_destroy(ndr_filter* f);

/* ---- command drivers ---------------------------------------------------------
 * The same engines behind the CLI subcommands. config_json is validated
 * against the subcommand schema (unknown keys rejected). On success an
 * optional JSON summary is returned. out_dir overrides NDRSHKF_OUT_DIR. */

NDRSHKF_API ndr_status ndr_cmd_simulate(const char* config_json, const char* out_dir, char** summary);
NDRSHKF_API ndr_status ndr_cmd_train(const char* config_json, const char* out_dir, char** summary);
NDRSHKF_API ndr_status ndr_cmd_eval(const char* config_json, int check, const char* out_dir, char** summary);
NDRSHKF_API ndr_status ndr_cmd_ablate(const char* config_json, const char* out_dir, char** summary);
NDRSHKF_API ndr_status ndr_cmd_transfer(const char* config_json, const char* out_dir, char** summary);
NDRSHKF_API ndr_status ndr_cmd_profile(const char* config_json, const char* out_dir, char** summary);

/* Built-in presets: "lorenz-train", "rossler-eval", "uav-bench". */
NDRSHKF_API ndr_status ndr_preset(const char* name, char** config_json);

#ifdef __cplusplus
}
#endif

#endif /* NDRSHKF_H */
