#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "common.hpp"
#include "rng.hpp"

namespace ndr {

enum class ChaosSystem { Lorenz, Rossler };

struct ChaosParams {
  ChaosSystem system = ChaosSystem::Lorenz;
  double sigma_l = 10.0, rho_l = 28.0, beta_l = 8.0 / 3.0;
  double a_r = 0.2, b_r = 0.2, c_r = 5.7;
  double dt = 0.01;
};

struct Harmonic {
  double amplitude = 0.0;  // A_i
  double omega = 0.0;      // rad/s
  double phase = 0.0;      // rad
};

// Time-varying process noise q_i(k) = q_base * (1 + A_i sin^2(w_i k dt + phi_i))
// plus a Gaussian-mixture measurement noise with outlier fraction epsilon.
struct NoiseProfile {
  double q_base = 0.01;
  std::vector<Harmonic> harmonics;  // one per state dimension
  std::vector<double> r_base;       // measurement noise diagonal
  double outlier_prob = 0.05;
  double outlier_scale = 5.0;
};

struct Trajectory {
  std::array<double, 3> x0{};
  std::vector<double> states;        // T x 3, row-major, state after step k
  std::vector<double> measurements;  // T x n_z
  std::vector<double> true_q_diag;   // T x 3
  int n_z = 2;
  int steps = 0;
  bool diverged = false;
  int diverged_at = -1;  // first bad step (1-based), -1 if none
  int outlier_count = 0;
};

int state_dim(const ChaosParams& p);
int meas_dim(const ChaosParams& p);

std::array<double, 3> deriv(const ChaosParams& p, const std::array<double, 3>& s);
std::array<double, 3> rk4_step(const ChaosParams& p, const std::array<double, 3>& s, double dt);

struct ProcessNoiseDraw {
  std::array<double, 3> noise{};
  std::array<double, 3> q_diag{};
};
ProcessNoiseDraw sample_process_noise(const NoiseProfile& profile, int k, double dt, Rng& rng);

struct MeasurementNoiseDraw {
  std::vector<double> noise;
  bool outlier = false;
};
MeasurementNoiseDraw sample_measurement_noise(const NoiseProfile& profile, Rng& rng);

// Noiseless observation. Lorenz: linear pick [x, z]. Rossler: range-bearing
// (sqrt(x^2+y^2), atan2(y, x)), bearing in (-pi, pi].
std::vector<double> observe(const ChaosParams& p, const std::array<double, 3>& s);

std::array<double, 3> draw_initial_state(const ChaosParams& p, Rng& rng);

// Integrates T steps of RK4 with additive post-step process noise and
// mixture-noised measurements. Noise draws are keyed by (seed, episode, step,
// channel). A non-finite or escaped state flags the trajectory as ground-truth
// diverged and truncates it; it is not an error.
Trajectory generate_trajectory(const ChaosParams& p, const NoiseProfile& profile, int T,
                               std::uint64_t seed, std::uint64_t episode);

// CSV with columns: k, x1..x3, z1..z_nz, q1(k)..q3(k).
std::string trajectory_csv(const Trajectory& t);

}  // namespace ndr
