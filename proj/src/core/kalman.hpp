#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace ndr {

// Differentiable process/observation model. f and h are tensor expressions so
// gradients can flow through the unrolled filter; the Jacobian callbacks may
// either build differentiable expressions (chaos models) or return constants
// from central differences (UAV models).
struct SystemModel {
  int n_x = 0;
  int n_z = 0;
  std::string name;
  std::function<Tensor(const Tensor& x, const Tensor& u, double dt)> f;
  std::function<Tensor(const Tensor& x, const Tensor& u)> h;
  std::function<Tensor(const Tensor& x, const Tensor& u, double dt)> jacobian_f;
  std::function<Tensor(const Tensor& x, const Tensor& u)> jacobian_h;
  std::vector<int> innovation_wrap;  // per-channel angle-wrap flags, empty = none
};

struct FilterState {
  Tensor x_hat;   // n_x
  Tensor p;       // n_x x n_x, SPD
  Tensor q_diag;  // n_x, > 0
  Tensor r_diag;  // n_z, > 0
};

struct Safeguards {
  double floor = 1e-8;
  double band_factor = 100.0;  // kappa
  bool symmetrize = true;
  bool joseph_form = false;
};

struct UpdateResult {
  FilterState fs;
  Tensor nu;  // innovation, wrapped
  Tensor s;   // innovation covariance
  Tensor k;   // Kalman gain
  Tensor h;   // observation Jacobian at the prior
};

struct PredictResult {
  FilterState fs;
  Tensor f_jac;
};

PredictResult ekf_predict(const SystemModel& m, const FilterState& fs, const Tensor& u, double dt,
                          const Safeguards& sg);

UpdateResult ekf_update(const SystemModel& m, const FilterState& fs, const Tensor& z,
                        const Tensor& u, const Safeguards& sg);

// d_k = (1 - b) / (1 - b^(k+1)) for b in (0,1), k >= 0.
double shkf_adaptation_factor(double b, long long k);

struct EmpiricalMoments {
  Tensor r_hat;  // n_z
  Tensor q_hat;  // n_x
};

// Diagonals of R_hat = nu nu^T - H P_prior H^T and
// Q_hat = K nu nu^T K^T + P_post - F P_prev F^T. May be negative; clamping is
// the caller's job.
EmpiricalMoments shkf_empirical_moments(const Tensor& nu, const Tensor& h, const Tensor& p_prior,
                                        const Tensor& k, const Tensor& p_post, const Tensor& f,
                                        const Tensor& p_prev);

// Convex blend (1-d) prev + d emp per element, then clamp into
// [max(floor, base/kappa), base*kappa]. d is a scalar or an n-vector.
Tensor blend_and_safeguard(const Tensor& prev_diag, const Tensor& emp_diag, const Tensor& d,
                           const Tensor& base_diag, const Safeguards& sg);

std::vector<double> numeric_jacobian(
    const std::function<std::vector<double>(std::span<const double>)>& fn,
    std::span<const double> point, double step);

// ---- Classical filters ------------------------------------------------------

struct ClassicalDiag {
  Tensor nu, s, k;
};

// One EKF step: predict with q_diag then update with z. Returns diagnostics.
FilterState ekf_step(const SystemModel& m, const FilterState& fs, const Tensor& z, const Tensor& u,
                     double dt, const Safeguards& sg, ClassicalDiag* diag = nullptr);

// One classical Sage-Husa step with an explicit scalar adaptation factor d,
// applied to both q and r (Algorithm-style: adaptation happens after the
// measurement update and takes effect on the next step).
FilterState shkf_step(const SystemModel& m, const FilterState& fs, const Tensor& z, const Tensor& u,
                      double dt, double d, const Tensor& q_base, const Tensor& r_base,
                      const Safeguards& sg, ClassicalDiag* diag = nullptr);

}  // namespace ndr
