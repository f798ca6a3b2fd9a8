#include "uav.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace ndr {

Quat quat_mul(const Quat& a, const Quat& b) {
  return {a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
          a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
          a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
          a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]};
}

Quat quat_normalize(const Quat& q) {
  double n = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
  if (!(n > 0.0)) fail(Err::NonFinite, "zero-norm quaternion");
  return {q[0] / n, q[1] / n, q[2] / n, q[3] / n};
}

Quat quat_from_euler(double roll, double pitch, double yaw) {
  double cr = std::cos(roll / 2), sr = std::sin(roll / 2);
  double cp = std::cos(pitch / 2), sp = std::sin(pitch / 2);
  double cy = std::cos(yaw / 2), sy = std::sin(yaw / 2);
  return {cy * cp * cr + sy * sp * sr, cy * cp * sr - sy * sp * cr,
          cy * sp * cr + sy * cp * sr, sy * cp * cr - cy * sp * sr};
}

std::array<double, 3> euler_from_quat(const Quat& q) {
  double s = 2.0 * (q[0] * q[2] - q[3] * q[1]);
  if (std::fabs(s) > 1.0 - 5e-13)
    fail(Err::GimbalLockProximity, "pitch too close to +-pi/2 for the euler parameterization");
  double roll = std::atan2(2.0 * (q[0] * q[1] + q[2] * q[3]), 1.0 - 2.0 * (q[1] * q[1] + q[2] * q[2]));
  double pitch = std::asin(s);
  double yaw = std::atan2(2.0 * (q[0] * q[3] + q[1] * q[2]), 1.0 - 2.0 * (q[2] * q[2] + q[3] * q[3]));
  return {roll, pitch, yaw};
}

std::array<double, 9> dcm_from_quat(const Quat& q) {
  double w = q[0], x = q[1], y = q[2], z = q[3];
  return {1 - 2 * (y * y + z * z), 2 * (x * y - w * z),     2 * (x * z + w * y),
          2 * (x * y + w * z),     1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
          2 * (x * z - w * y),     2 * (y * z + w * x),     1 - 2 * (x * x + y * y)};
}

ThrustTorque mix_motor_commands(const std::array<double, 4>& d, const QdroneParams& p) {
  ThrustTorque out;
  out.f = p.k_f * (d[0] + d[1] + d[2] + d[3]);
  out.tau[0] = p.k_f * p.l_roll / 2.0 * (-d[0] - d[1] + d[2] + d[3]);
  out.tau[1] = p.k_f * p.l_pitch / 2.0 * (d[0] - d[1] + d[2] - d[3]);
  out.tau[2] = p.k_t * (d[0] - d[1] - d[2] + d[3]);
  return out;
}

std::array<double, 4> unmix_motor_commands(const ThrustTorque& ft, const QdroneParams& p) {
  // The mixing matrix rows are mutually orthogonal sign patterns, so the
  // inverse has the same patterns scaled by the row gains.
  double a = ft.f / (4.0 * p.k_f);
  double b = ft.tau[0] / (2.0 * p.k_f * p.l_roll);
  double c = ft.tau[1] / (2.0 * p.k_f * p.l_pitch);
  double d = ft.tau[2] / (4.0 * p.k_t);
  return {a - b + c + d, a - b - c - d, a + b + c - d, a + b - c + d};
}

namespace {

std::array<double, 3> cross(const std::array<double, 3>& a, const std::array<double, 3>& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

std::array<double, 3> body_gravity(const Quat& q, double g) {
  // R^T * [0,0,-g]: third row of R scaled.
  auto r = dcm_from_quat(q);
  return {-g * r[6], -g * r[7], -g * r[8]};
}

}  // namespace

Vec19 kinematic_deriv(const Vec19& s, const std::array<double, 6>& u_imu, const QdroneParams& p) {
  using namespace uav_idx;
  Quat qv{s[q], s[q + 1], s[q + 2], s[q + 3]};
  std::array<double, 3> vel{s[v], s[v + 1], s[v + 2]};
  std::array<double, 3> a_t{u_imu[0] - s[ba], u_imu[1] - s[ba + 1], u_imu[2] - s[ba + 2]};
  std::array<double, 3> w_t{u_imu[3] - s[bg], u_imu[4] - s[bg + 1], u_imu[5] - s[bg + 2]};

  Vec19 d{};
  auto rot = dcm_from_quat(qv);
  for (int i = 0; i < 3; ++i)
    d[r + i] = rot[size_t(i) * 3] * vel[0] + rot[size_t(i) * 3 + 1] * vel[1] + rot[size_t(i) * 3 + 2] * vel[2];
  auto gb = body_gravity(qv, p.gravity);
  auto wxv = cross(w_t, vel);
  for (int i = 0; i < 3; ++i) d[v + i] = a_t[size_t(i)] + gb[size_t(i)] - wxv[size_t(i)];
  Quat qd = quat_mul(qv, {0.0, w_t[0], w_t[1], w_t[2]});
  for (int i = 0; i < 4; ++i) d[q + i] = 0.5 * qd[size_t(i)];
  // w, b_a, b_g carry zero dynamics
  return d;
}

Vec19 dynamic_deriv(const Vec19& s, const std::array<double, 4>& u_ctl, const QdroneParams& p) {
  using namespace uav_idx;
  Quat qv{s[q], s[q + 1], s[q + 2], s[q + 3]};
  std::array<double, 3> vel{s[v], s[v + 1], s[v + 2]};
  std::array<double, 3> omega{s[w], s[w + 1], s[w + 2]};

  Vec19 d{};
  auto rot = dcm_from_quat(qv);
  for (int i = 0; i < 3; ++i)
    d[r + i] = rot[size_t(i) * 3] * vel[0] + rot[size_t(i) * 3 + 1] * vel[1] + rot[size_t(i) * 3 + 2] * vel[2];

  // specific force: thrust along body z minus linear drag, per unit mass
  std::array<double, 3> f_b{-p.drag * vel[0] / p.mass, -p.drag * vel[1] / p.mass,
                            (u_ctl[0] - p.drag * vel[2]) / p.mass};
  auto gb = body_gravity(qv, p.gravity);
  auto wxv = cross(omega, vel);
  for (int i = 0; i < 3; ++i) d[v + i] = f_b[size_t(i)] + gb[size_t(i)] - wxv[size_t(i)];

  Quat qd = quat_mul(qv, {0.0, omega[0], omega[1], omega[2]});
  for (int i = 0; i < 4; ++i) d[q + i] = 0.5 * qd[size_t(i)];

  std::array<double, 3> jw{p.jxx * omega[0], p.jyy * omega[1], p.jzz * omega[2]};
  auto wxjw = cross(omega, jw);
  d[w] = (u_ctl[1] - wxjw[0]) / p.jxx;
  d[w + 1] = (u_ctl[2] - wxjw[1]) / p.jyy;
  d[w + 2] = (u_ctl[3] - wxjw[2]) / p.jzz;
  return d;
}

Vec19 uav_rk4(UavFormulation form, const Vec19& s, std::span<const double> u, double dt,
              const QdroneParams& p) {
  auto f = [&](const Vec19& x) {
    if (form == UavFormulation::Kinematic) {
      std::array<double, 6> ui{u[0], u[1], u[2], u[3], u[4], u[5]};
      return kinematic_deriv(x, ui, p);
    }
    std::array<double, 4> uc{u[0], u[1], u[2], u[3]};
    return dynamic_deriv(x, uc, p);
  };
  Vec19 k1 = f(s), t{};
  for (int i = 0; i < 19; ++i) t[size_t(i)] = s[size_t(i)] + 0.5 * dt * k1[size_t(i)];
  Vec19 k2 = f(t);
  for (int i = 0; i < 19; ++i) t[size_t(i)] = s[size_t(i)] + 0.5 * dt * k2[size_t(i)];
  Vec19 k3 = f(t);
  for (int i = 0; i < 19; ++i) t[size_t(i)] = s[size_t(i)] + dt * k3[size_t(i)];
  Vec19 k4 = f(t);
  Vec19 out{};
  for (int i = 0; i < 19; ++i)
    out[size_t(i)] = s[size_t(i)] + dt / 6.0 * (k1[size_t(i)] + 2.0 * k2[size_t(i)] + 2.0 * k3[size_t(i)] + k4[size_t(i)]);
  Quat qn = quat_normalize({out[uav_idx::q], out[uav_idx::q + 1], out[uav_idx::q + 2], out[uav_idx::q + 3]});
  for (int i = 0; i < 4; ++i) out[uav_idx::q + i] = qn[size_t(i)];
  return out;
}

std::array<double, 6> observe_pose(const Vec19& s) {
  using namespace uav_idx;
  auto e = euler_from_quat({s[q], s[q + 1], s[q + 2], s[q + 3]});
  return {s[r], s[r + 1], s[r + 2], e[0], e[1], e[2]};
}

std::array<double, 6> observe_imu(const Vec19& s, const std::array<double, 4>& u_ctl,
                                  const QdroneParams& p) {
  using namespace uav_idx;
  std::array<double, 3> vel{s[v], s[v + 1], s[v + 2]};
  std::array<double, 3> f_b{-p.drag * vel[0] / p.mass, -p.drag * vel[1] / p.mass,
                            (u_ctl[0] - p.drag * vel[2]) / p.mass};
  return {f_b[0] + s[ba], f_b[1] + s[ba + 1], f_b[2] + s[ba + 2],
          s[w] + s[bg],   s[w + 1] + s[bg + 1], s[w + 2] + s[bg + 2]};
}

// ---- Tensor-side model ----------------------------------------------------

namespace {

Tensor cross_t(const Tensor& a, const Tensor& b) {
  Tensor ax = slice(a, 0, 1), ay = slice(a, 1, 1), az = slice(a, 2, 1);
  Tensor bx = slice(b, 0, 1), by = slice(b, 1, 1), bz = slice(b, 2, 1);
  return concat({sub(mul(ay, bz), mul(az, by)), sub(mul(az, bx), mul(ax, bz)),
                 sub(mul(ax, by), mul(ay, bx))});
}

Tensor quat_mul_t(const Tensor& a, const Tensor& b) {
  Tensor aw = slice(a, 0, 1), ax = slice(a, 1, 1), ay = slice(a, 2, 1), az = slice(a, 3, 1);
  Tensor bw = slice(b, 0, 1), bx = slice(b, 1, 1), by = slice(b, 2, 1), bz = slice(b, 3, 1);
  Tensor w = sub(sub(sub(mul(aw, bw), mul(ax, bx)), mul(ay, by)), mul(az, bz));
  Tensor x = sub(add(add(mul(aw, bx), mul(ax, bw)), mul(ay, bz)), mul(az, by));
  Tensor y = add(add(sub(mul(aw, by), mul(ax, bz)), mul(ay, bw)), mul(az, bx));
  Tensor z = add(sub(add(mul(aw, bz), mul(ax, by)), mul(ay, bx)), mul(az, bw));
  return concat({w, x, y, z});
}

Tensor dcm_t(const Tensor& q) {
  Tensor w = slice(q, 0, 1), x = slice(q, 1, 1), y = slice(q, 2, 1), z = slice(q, 3, 1);
  auto two = [](const Tensor& t) { return scale(t, 2.0); };
  Tensor r00 = add_const(scale(add(mul(y, y), mul(z, z)), -2.0), 1.0);
  Tensor r01 = two(sub(mul(x, y), mul(w, z)));
  Tensor r02 = two(add(mul(x, z), mul(w, y)));
  Tensor r10 = two(add(mul(x, y), mul(w, z)));
  Tensor r11 = add_const(scale(add(mul(x, x), mul(z, z)), -2.0), 1.0);
  Tensor r12 = two(sub(mul(y, z), mul(w, x)));
  Tensor r20 = two(sub(mul(x, z), mul(w, y)));
  Tensor r21 = two(add(mul(y, z), mul(w, x)));
  Tensor r22 = add_const(scale(add(mul(x, x), mul(y, y)), -2.0), 1.0);
  return reshape(concat({r00, r01, r02, r10, r11, r12, r20, r21, r22}), {3, 3});
}

struct UavDerivT {
  UavFormulation form;
  QdroneParams p;

  Tensor operator()(const Tensor& s, const Tensor& u) const {
    using namespace uav_idx;
    Tensor vel = slice(s, v, 3);
    Tensor qv = slice(s, q, 4);
    Tensor rot = dcm_t(qv);
    Tensor g_earth = Tensor::vector({0.0, 0.0, -p.gravity});
    Tensor r_dot = matmul(rot, vel);
    Tensor g_body = matmul(transpose(rot), g_earth);

    if (form == UavFormulation::Kinematic) {
      Tensor a_t = sub(slice(u, 0, 3), slice(s, ba, 3));
      Tensor w_t = sub(slice(u, 3, 3), slice(s, bg, 3));
      Tensor v_dot = sub(add(a_t, g_body), cross_t(w_t, vel));
      Tensor q_dot = scale(quat_mul_t(qv, concat({Tensor::zeros({1}), w_t})), 0.5);
      return concat({r_dot, v_dot, q_dot, Tensor::zeros({9})});
    }

    Tensor omega = slice(s, w, 3);
    Tensor thrust = mul(slice(u, 0, 1), Tensor::vector({0.0, 0.0, 1.0}));
    Tensor f_b = scale(sub(thrust, scale(vel, p.drag)), 1.0 / p.mass);
    Tensor v_dot = sub(add(f_b, g_body), cross_t(omega, vel));
    Tensor q_dot = scale(quat_mul_t(qv, concat({Tensor::zeros({1}), omega})), 0.5);
    Tensor j_diag = Tensor::vector({p.jxx, p.jyy, p.jzz});
    Tensor jw = mul(j_diag, omega);
    Tensor tau = slice(u, 1, 3);
    Tensor w_dot = mul(sub(tau, cross_t(omega, jw)),
                       Tensor::vector({1.0 / p.jxx, 1.0 / p.jyy, 1.0 / p.jzz}));
    return concat({r_dot, v_dot, q_dot, w_dot, Tensor::zeros({6})});
  }
};

Tensor uav_f_tensor(const UavDerivT& d, const Tensor& s, const Tensor& u, double dt) {
  Tensor k1 = d(s, u);
  Tensor s1 = add(s, scale(k1, 0.5 * dt));
  Tensor k2 = d(s1, u);
  Tensor s2 = add(s, scale(k2, 0.5 * dt));
  Tensor k3 = d(s2, u);
  Tensor s3 = add(s, scale(k3, dt));
  Tensor k4 = d(s3, u);
  Tensor acc = add(add(add(k1, scale(k2, 2.0)), scale(k3, 2.0)), k4);
  Tensor out = add(s, scale(acc, dt / 6.0));
  using namespace uav_idx;
  Tensor qv = slice(out, q, 4);
  Tensor qn = mul(qv, pow_const(sqnorm(qv), -0.5));
  return concat({slice(out, 0, q), qn, slice(out, w, 9)});
}

Vec19 to_vec19(std::span<const double> v) {
  Vec19 out{};
  for (int i = 0; i < 19; ++i) out[size_t(i)] = v[size_t(i)];
  return out;
}

}  // namespace

SystemModel make_uav_model(UavFormulation form, const QdroneParams& p) {
  SystemModel m;
  m.n_x = uav_idx::dim;
  m.n_z = 6;
  m.name = form == UavFormulation::Kinematic ? "uav-kinematic" : "uav-dynamic";
  UavDerivT d{form, p};

  m.f = [d](const Tensor& x, const Tensor& u, double dt) { return uav_f_tensor(d, x, u, dt); };

  m.jacobian_f = [form, p](const Tensor& x, const Tensor& u, double dt) {
    auto ud = u.data();
    std::vector<double> uv(ud.begin(), ud.end());
    auto fn = [&](std::span<const double> v) {
      Vec19 out = uav_rk4(form, to_vec19(v), uv, dt, p);
      return std::vector<double>(out.begin(), out.end());
    };
    return Tensor({19, 19}, numeric_jacobian(fn, x.data(), 1e-6));
  };

  if (form == UavFormulation::Kinematic) {
    m.h = [](const Tensor& x, const Tensor&) {
      using namespace uav_idx;
      Tensor qv = slice(x, q, 4);
      // refuse ill-conditioned euler extraction before building the graph
      auto qd = qv.data();
      double s = 2.0 * (qd[0] * qd[2] - qd[3] * qd[1]);
      if (std::fabs(s) > 1.0 - 5e-13)
        fail(Err::GimbalLockProximity, "pitch too close to +-pi/2 in pose observation");
      Tensor w = slice(qv, 0, 1), xq = slice(qv, 1, 1), yq = slice(qv, 2, 1), zq = slice(qv, 3, 1);
      Tensor sin_p = scale(sub(mul(w, yq), mul(zq, xq)), 2.0);
      Tensor roll = ndr::atan2(scale(add(mul(w, xq), mul(yq, zq)), 2.0),
                               add_const(scale(add(mul(xq, xq), mul(yq, yq)), -2.0), 1.0));
      Tensor pitch = ndr::atan2(sin_p, pow_const(sub(Tensor::full({1}, 1.0), mul(sin_p, sin_p)), 0.5));
      Tensor yaw = ndr::atan2(scale(add(mul(w, zq), mul(xq, yq)), 2.0),
                              add_const(scale(add(mul(yq, yq), mul(zq, zq)), -2.0), 1.0));
      return concat({slice(x, uav_idx::r, 3), roll, pitch, yaw});
    };
    m.jacobian_h = [](const Tensor& x, const Tensor&) {
      auto fn = [&](std::span<const double> v) {
        auto z = observe_pose(to_vec19(v));
        return std::vector<double>(z.begin(), z.end());
      };
      return Tensor({6, 19}, numeric_jacobian(fn, x.data(), 1e-6));
    };
    m.innovation_wrap = {0, 0, 0, 1, 1, 1};
  } else {
    m.h = [p](const Tensor& x, const Tensor& u) {
      using namespace uav_idx;
      Tensor vel = slice(x, v, 3);
      Tensor thrust = mul(slice(u, 0, 1), Tensor::vector({0.0, 0.0, 1.0}));
      Tensor f_b = scale(sub(thrust, scale(vel, p.drag)), 1.0 / p.mass);
      return concat({add(f_b, slice(x, ba, 3)), add(slice(x, w, 3), slice(x, bg, 3))});
    };
    m.jacobian_h = [p](const Tensor& x, const Tensor& u) {
      auto ud = u.data();
      std::array<double, 4> uc{ud[0], ud[1], ud[2], ud[3]};
      auto fn = [&](std::span<const double> v) {
        auto z = observe_imu(to_vec19(v), uc, p);
        return std::vector<double>(z.begin(), z.end());
      };
      return Tensor({6, 19}, numeric_jacobian(fn, x.data(), 1e-6));
    };
  }
  return m;
}

// ---- Synthetic flight log ---------------------------------------------------

FlightLog generate_flight_log(const QdroneParams& p, const CircleSpec& spec, double dt) {
  FlightLog log;
  log.dt = dt;
  int n = int(spec.duration / dt);
  log.delta.reserve(size_t(n) * 4);
  log.imu.reserve(size_t(n) * 6);
  log.pose.reserve(size_t(n) * 6);
  log.truth.reserve(size_t(n) * 19);

  using namespace uav_idx;
  Vec19 s{};
  s[r] = spec.radius * std::cos(spec.phase);
  s[r + 1] = spec.radius * std::sin(spec.phase);
  s[r + 2] = spec.altitude;
  s[q] = 1.0;

  const double kp_pos = 6.0, kd_pos = 4.5;
  const double kp_att = 180.0, kd_att = 26.0;

  for (int k = 0; k < n; ++k) {
    double t = double(k) * dt;
    double a = spec.omega * t + spec.phase;
    std::array<double, 3> r_ref{spec.radius * std::cos(a), spec.radius * std::sin(a), spec.altitude};
    std::array<double, 3> v_ref{-spec.radius * spec.omega * std::sin(a),
                                spec.radius * spec.omega * std::cos(a), 0.0};
    std::array<double, 3> a_ref{-spec.radius * spec.omega * spec.omega * std::cos(a),
                                -spec.radius * spec.omega * spec.omega * std::sin(a), 0.0};

    Quat qv{s[q], s[q + 1], s[q + 2], s[q + 3]};
    auto rot = dcm_from_quat(qv);
    std::array<double, 3> v_earth{};
    for (int i = 0; i < 3; ++i)
      v_earth[size_t(i)] = rot[size_t(i) * 3] * s[v] + rot[size_t(i) * 3 + 1] * s[v + 1] + rot[size_t(i) * 3 + 2] * s[v + 2];

    std::array<double, 3> a_des{};
    for (int i = 0; i < 3; ++i)
      a_des[size_t(i)] = a_ref[size_t(i)] + kp_pos * (r_ref[size_t(i)] - s[r + i]) +
                         kd_pos * (v_ref[size_t(i)] - v_earth[size_t(i)]);

    // thrust vector per unit mass, earth frame
    std::array<double, 3> tv{a_des[0], a_des[1], a_des[2] + p.gravity};
    double tnorm = std::sqrt(tv[0] * tv[0] + tv[1] * tv[1] + tv[2] * tv[2]);
    double pitch_d = std::atan2(tv[0], tv[2]);
    double roll_d = std::atan2(-tv[1], std::sqrt(tv[0] * tv[0] + tv[2] * tv[2]));

    auto eul = euler_from_quat(qv);
    std::array<double, 3> att_err{roll_d - eul[0], pitch_d - eul[1], 0.0 - eul[2]};
    for (double& e : att_err) e = wrap_angle(e);
    ThrustTorque ft;
    ft.f = p.mass * tnorm;
    ft.tau[0] = p.jxx * (kp_att * att_err[0] - kd_att * s[w]);
    ft.tau[1] = p.jyy * (kp_att * att_err[1] - kd_att * s[w + 1]);
    ft.tau[2] = p.jzz * (kp_att * att_err[2] - kd_att * s[w + 2]);

    auto delta = unmix_motor_commands(ft, p);
    for (double& dv : delta) dv = std::min(std::max(dv, 0.0), 1.0);
    ThrustTorque applied = mix_motor_commands(delta, p);

    std::array<double, 4> u_ctl{applied.f, applied.tau[0], applied.tau[1], applied.tau[2]};
    auto imu = observe_imu(s, u_ctl, p);  // biases are zero in the log truth
    auto pose = observe_pose(s);

    log.delta.insert(log.delta.end(), delta.begin(), delta.end());
    log.imu.insert(log.imu.end(), imu.begin(), imu.end());
    log.pose.insert(log.pose.end(), pose.begin(), pose.end());
    log.truth.insert(log.truth.end(), s.begin(), s.end());
    ++log.steps;

    s = uav_rk4(UavFormulation::Dynamic, s, u_ctl, dt, p);
  }
  return log;
}

std::string flight_log_csv(const FlightLog& log) {
  std::string s =
      "t,d1,d2,d3,d4,ax,ay,az,gx,gy,gz,px,py,pz,roll,pitch,yaw";
  for (int i = 0; i < 19; ++i) s += ",s" + std::to_string(i);
  s += "\n";
  char buf[64];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof(buf), ",%.17g", v);
    s += buf;
  };
  for (int k = 0; k < log.steps; ++k) {
    std::snprintf(buf, sizeof(buf), "%.6f", double(k) * log.dt);
    s += buf;
    for (int i = 0; i < 4; ++i) put(log.delta[size_t(k) * 4 + size_t(i)]);
    for (int i = 0; i < 6; ++i) put(log.imu[size_t(k) * 6 + size_t(i)]);
    for (int i = 0; i < 6; ++i) put(log.pose[size_t(k) * 6 + size_t(i)]);
    for (int i = 0; i < 19; ++i) put(log.truth[size_t(k) * 19 + size_t(i)]);
    s += "\n";
  }
  return s;
}

FlightLog flight_log_from_csv(const std::string& csv) {
  FlightLog log;
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line)) fail(Err::Io, "empty flight log");
  double prev_t = 0.0;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    std::vector<double> row;
    while (std::getline(ls, cell, ',')) row.push_back(std::stod(cell));
    if (row.size() != 1 + 4 + 6 + 6 + 19) fail(Err::Io, "bad flight log row");
    if (!first) log.dt = row[0] - prev_t;
    prev_t = row[0];
    first = false;
    log.delta.insert(log.delta.end(), row.begin() + 1, row.begin() + 5);
    log.imu.insert(log.imu.end(), row.begin() + 5, row.begin() + 11);
    log.pose.insert(log.pose.end(), row.begin() + 11, row.begin() + 17);
    log.truth.insert(log.truth.end(), row.begin() + 17, row.end());
    ++log.steps;
  }
  return log;
}

}  // namespace ndr
