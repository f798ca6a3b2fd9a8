#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "kalman.hpp"

namespace ndr {

// Table of QDrone physical parameters.
struct QdroneParams {
  double mass = 1.121;     // kg
  double gravity = 9.81;   // m/s^2
  double jxx = 1.00e-2;    // kg m^2
  double jyy = 8.20e-3;
  double jzz = 1.48e-2;
  double l_roll = 0.2136;  // m, motor-to-motor
  double l_pitch = 0.1758;
  double k_f = 5.11;    // N per unit command
  double k_t = 0.0487;  // N m per unit command
  double u_hover = 0.538;
  double drag = 0.001;  // diagonal drag coefficient, N s/m
};

// State layout: [r(3), v(3), q(4), w(3), b_a(3), b_g(3)].
namespace uav_idx {
constexpr int r = 0;
constexpr int v = 3;
constexpr int q = 6;
constexpr int w = 10;
constexpr int ba = 13;
constexpr int bg = 16;
constexpr int dim = 19;
}  // namespace uav_idx

using Vec19 = std::array<double, 19>;
using Quat = std::array<double, 4>;  // (w, x, y, z)

Quat quat_mul(const Quat& a, const Quat& b);
Quat quat_normalize(const Quat& q);
Quat quat_from_euler(double roll, double pitch, double yaw);
// Z-Y-X Euler angles; throws GimbalLockProximity near pitch = +-pi/2.
std::array<double, 3> euler_from_quat(const Quat& q);
// Body-to-earth rotation matrix, row-major.
std::array<double, 9> dcm_from_quat(const Quat& q);

struct ThrustTorque {
  double f = 0.0;
  std::array<double, 3> tau{};
};
ThrustTorque mix_motor_commands(const std::array<double, 4>& delta, const QdroneParams& p);
// Inverse mixing; used by the synthetic-log controller. Result is not clamped.
std::array<double, 4> unmix_motor_commands(const ThrustTorque& ft, const QdroneParams& p);

// Continuous dynamics. u is the 6-dim IMU vector for the kinematic
// formulation and the 4-dim (F, tau) vector for the dynamic one.
Vec19 kinematic_deriv(const Vec19& s, const std::array<double, 6>& u_imu, const QdroneParams& p);
Vec19 dynamic_deriv(const Vec19& s, const std::array<double, 4>& u_ctl, const QdroneParams& p);

enum class UavFormulation { Kinematic = 1, Dynamic = 2 };

// RK4 step with zero-order-hold input and post-step quaternion renormalization.
Vec19 uav_rk4(UavFormulation form, const Vec19& s, std::span<const double> u, double dt,
              const QdroneParams& p);

std::array<double, 6> observe_pose(const Vec19& s);
std::array<double, 6> observe_imu(const Vec19& s, const std::array<double, 4>& u_ctl,
                                  const QdroneParams& p);

// Filter-side models. f is a tensor expression (differentiable); F and H come
// from central differences over the raw dynamics with the quaternion columns
// following the renormalized map, so they enter the tape as constants.
SystemModel make_uav_model(UavFormulation form, const QdroneParams& p);

// Synthetic flight log: the control-driven model flown along a scripted
// circular reference by a cascaded PD loop, recorded at 1 kHz. Streams are
// clean; degradations are injected at train/eval time.
struct FlightLog {
  double dt = 1e-3;
  int steps = 0;
  std::vector<double> delta;  // n x 4
  std::vector<double> imu;    // n x 6, specific force + body rates
  std::vector<double> pose;   // n x 6, position + euler truth
  std::vector<double> truth;  // n x 19
};

struct CircleSpec {
  double radius = 1.0;
  double omega = 0.8;  // rad/s
  double altitude = 1.0;
  double duration = 10.0;
  double phase = 0.0;
};

FlightLog generate_flight_log(const QdroneParams& p, const CircleSpec& spec, double dt);

std::string flight_log_csv(const FlightLog& log);
FlightLog flight_log_from_csv(const std::string& csv);

}  // namespace ndr
