#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "chaos.hpp"
#include "ndr_filter.hpp"
#include "policy.hpp"
#include "uav.hpp"

namespace ndr {

struct SeqPoint {
  int epoch = 0;
  int t = 60;
};

struct LrPoint {
  double fraction = 0.0;  // of total epochs
  double factor = 1.0;
};

struct TrainConfig {
  int epochs = 300;
  int batches_per_epoch = 1;
  int batch_size = 64;
  std::vector<SeqPoint> seq_schedule{{0, 60}};
  double lr = 1e-3;
  std::vector<LrPoint> lr_schedule{{0.0, 1.0}};
  double grad_clip = 0.5;
  double lambda_aux = 0.1;
  double lambda_att = 10.0;  // uav only
  double huber_delta = 5.0;  // uav only
  std::uint64_t seed = 1;
  int threads = 1;
  double init_sigma = 10.0;  // std of the initial estimate error (chaos)
  double p0 = 0.1;           // initial covariance scale (chaos)
  int nan_streak_limit = 50;
  int checkpoint_every = 0;
  std::string checkpoint_path;
};

int seq_len_at(const TrainConfig& cfg, int epoch);
double lr_at(const TrainConfig& cfg, int epoch);

// ---- Losses -------------------------------------------------------------------

// Sum over steps of ||x_true - x_hat||^2 + lambda_aux ||y - y_hat||^2.
Tensor chaos_loss(const std::vector<Tensor>& x_hats, const std::vector<Tensor>& truths,
                  const std::vector<Tensor>& ys, const std::vector<Tensor>& y_hats,
                  double lambda_aux);

// Mean-over-time elementwise Huber position loss, quaternion cosine-distance
// attitude loss (double-cover safe), and mean reconstruction penalty.
// Quaternions must be unit norm within 1e-6.
Tensor uav_loss(const std::vector<Tensor>& positions, const std::vector<Tensor>& pos_truths,
                const std::vector<Tensor>& quats, const std::vector<Tensor>& quat_truths,
                const std::vector<Tensor>& ys, const std::vector<Tensor>& y_hats,
                double lambda_att, double lambda_aux, double huber_delta);

// ---- Optimization ---------------------------------------------------------------

struct AdamState {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  long long step = 0;
  std::vector<Buf> m, v;  // slots in PolicyWeights visit order
};

AdamState init_adam_state(const PolicyWeights& w);

// Scales all gradients by threshold/norm when the global L2 norm exceeds the
// threshold; returns the pre-clip norm.
double clip_global_norm(std::vector<Buf>& grads, double threshold);

void adam_step(PolicyWeights& w, const std::vector<Buf>& grads, AdamState& st, double lr);

// ---- Episode randomization -------------------------------------------------------

struct ChaosRandomization {
  double amp_min = 0.0, amp_max = 0.2;
  double omega_min = 0.1, omega_max = 1.0;
  double q_base = 0.01;
  std::vector<double> r_base{1.0, 2.0};
  double outlier_prob = 0.05;
  double outlier_scale = 5.0;
};

NoiseProfile randomize_chaos_episode(const ChaosRandomization& ranges, Rng& rng);

// Per-mechanism maxima for the stochastic degradation models; per-episode
// magnitudes are drawn from U(ratio * max, max).
struct DomainRandomization {
  double sigma_meas = 1.0;
  double sigma_out_meas = 5.0;
  double eps_meas = 0.05;
  double sigma_inp = 0.1;
  double sigma_out_inp = 5.0;
  double eps_inp = 0.01;
  double sigma_sf = 1e-3;
  double sigma_bias = 1e-3;
  double sigma_walk = 1e-5;
  double vib_amp = 0.1;
  double vib_omega = 628.0;
  double sigma_vib = 1.0;
  double ratio = 0.5;
};

struct DegradedStreams {
  std::vector<double> z;  // steps x 6 degraded pose
  std::vector<double> u;  // steps x 6 degraded imu
};

// Applies the degradation stack to clean pose/imu streams. Attitude channels
// receive Gaussian-only noise; position channels get the outlier mixture.
// meas_var_scale optionally scales the measurement-noise variance per step
// (transient-disturbance windows); empty means 1.0 everywhere.
DegradedStreams degrade_uav_signals(std::span<const double> z, std::span<const double> u,
                                    int steps, double dt, Rng& rng, const DomainRandomization& dr,
                                    std::span<const double> meas_var_scale = {});

// Uniform draw over all valid (log, start) windows; proportional to size.
struct WindowPick {
  int log_index = 0;
  int start = 0;
};
WindowPick sample_window(const std::vector<int>& log_steps, int t, Rng& rng);

// ---- Training loops ---------------------------------------------------------------

struct EpochLog {
  int epoch = 0;
  int t = 0;
  double lr = 0.0;
  double mean_loss = 0.0;
  double track_loss = 0.0;
  double aux_loss = 0.0;
  double att_loss = 0.0;
  double grad_norm = 0.0;
  int masked = 0;
};

struct TrainResult {
  PolicyWeights weights;
  std::vector<EpochLog> log;
};

std::string train_log_jsonl(const std::vector<EpochLog>& log);

TrainResult train_chaos(const PolicyArch& arch, const TrainConfig& cfg,
                        const ChaosRandomization& ranges);

struct UavFilterInit {
  std::vector<double> p0_diag;  // 19
  std::vector<double> q_diag;   // 19 nominal
  std::vector<double> r_diag;   // 6 nominal
};
UavFilterInit default_uav_filter_init();

TrainResult train_uav(const PolicyArch& arch, const TrainConfig& cfg,
                      const std::vector<FlightLog>& logs, const DomainRandomization& dr,
                      const QdroneParams& params);

}  // namespace ndr
