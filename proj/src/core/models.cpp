#include "models.hpp"

namespace ndr {

namespace {

struct ChaosDeriv {
  ChaosParams p;

  Tensor operator()(const Tensor& s) const {
    Tensor x = slice(s, 0, 1), y = slice(s, 1, 1), z = slice(s, 2, 1);
    if (p.system == ChaosSystem::Lorenz) {
      Tensor dx = scale(sub(y, x), p.sigma_l);
      Tensor dy = sub(mul(x, add_const(scale(z, -1.0), p.rho_l)), y);
      Tensor dz = sub(mul(x, y), scale(z, p.beta_l));
      return concat({dx, dy, dz});
    }
    Tensor dx = sub(scale(y, -1.0), z);
    Tensor dy = add(x, scale(y, p.a_r));
    Tensor dz = add_const(mul(z, add_const(x, -p.c_r)), p.b_r);
    return concat({dx, dy, dz});
  }

  // Jacobian of the continuous dynamics; affine in the state for both systems.
  Tensor jac(const Tensor& s) const {
    Tensor x = slice(s, 0, 1), y = slice(s, 1, 1), z = slice(s, 2, 1);
    if (p.system == ChaosSystem::Lorenz) {
      Tensor c0({3, 3}, Buf{-p.sigma_l, p.sigma_l, 0, p.rho_l, -1, 0, 0, 0, -p.beta_l});
      Tensor cx({3, 3}, Buf{0, 0, 0, 0, 0, -1, 0, 1, 0});
      Tensor cy({3, 3}, Buf{0, 0, 0, 0, 0, 0, 1, 0, 0});
      Tensor cz({3, 3}, Buf{0, 0, 0, -1, 0, 0, 0, 0, 0});
      return add(add(c0, mul(x, cx)), add(mul(y, cy), mul(z, cz)));
    }
    Tensor c0({3, 3}, Buf{0, -1, -1, 1, p.a_r, 0, 0, 0, -p.c_r});
    Tensor cx({3, 3}, Buf{0, 0, 0, 0, 0, 0, 0, 0, 1});
    Tensor cz({3, 3}, Buf{0, 0, 0, 0, 0, 0, 1, 0, 0});
    return add(add(c0, mul(x, cx)), mul(z, cz));
  }
};

// Mirrors the arithmetic order of the raw rk4_step so both paths agree.
Tensor rk4_tensor(const ChaosDeriv& d, const Tensor& s, double dt) {
  Tensor k1 = d(s);
  Tensor s1 = add(s, scale(k1, 0.5 * dt));
  Tensor k2 = d(s1);
  Tensor s2 = add(s, scale(k2, 0.5 * dt));
  Tensor k3 = d(s2);
  Tensor s3 = add(s, scale(k3, dt));
  Tensor k4 = d(s3);
  Tensor acc = add(add(add(k1, scale(k2, 2.0)), scale(k3, 2.0)), k4);
  return add(s, scale(acc, dt / 6.0));
}

// Exact Jacobian of the RK4 map via the stage chain rule.
Tensor rk4_jacobian(const ChaosDeriv& d, const Tensor& s, double dt) {
  Tensor eye = Tensor::eye(3);
  Tensor k1 = d(s);
  Tensor a1 = d.jac(s);
  Tensor s1 = add(s, scale(k1, 0.5 * dt));
  Tensor a2 = matmul(d.jac(s1), add(eye, scale(a1, 0.5 * dt)));
  Tensor k2 = d(s1);
  Tensor s2 = add(s, scale(k2, 0.5 * dt));
  Tensor a3 = matmul(d.jac(s2), add(eye, scale(a2, 0.5 * dt)));
  Tensor k3 = d(s2);
  Tensor s3 = add(s, scale(k3, dt));
  Tensor a4 = matmul(d.jac(s3), add(eye, scale(a3, dt)));
  Tensor acc = add(add(add(a1, scale(a2, 2.0)), scale(a3, 2.0)), a4);
  return add(eye, scale(acc, dt / 6.0));
}

}  // namespace

SystemModel make_chaos_model(const ChaosParams& p) {
  SystemModel m;
  m.n_x = 3;
  m.n_z = 2;
  ChaosDeriv d{p};
  m.f = [d](const Tensor& x, const Tensor&, double dt) { return rk4_tensor(d, x, dt); };
  m.jacobian_f = [d](const Tensor& x, const Tensor&, double dt) { return rk4_jacobian(d, x, dt); };

  if (p.system == ChaosSystem::Lorenz) {
    m.name = "lorenz";
    Tensor h_mat({2, 3}, Buf{1, 0, 0, 0, 0, 1});
    m.h = [h_mat](const Tensor& x, const Tensor&) { return matmul(h_mat, x); };
    m.jacobian_h = [h_mat](const Tensor&, const Tensor&) { return h_mat; };
  } else {
    m.name = "rossler";
    m.h = [](const Tensor& s, const Tensor&) {
      Tensor x = slice(s, 0, 1), y = slice(s, 1, 1);
      Tensor r = pow_const(add(mul(x, x), mul(y, y)), 0.5);
      Tensor bearing = ndr::atan2(y, x);
      return concat({r, bearing});
    };
    m.jacobian_h = [](const Tensor& s, const Tensor&) {
      Tensor x = slice(s, 0, 1), y = slice(s, 1, 1);
      Tensor r2 = add(mul(x, x), mul(y, y));
      Tensor r = pow_const(r2, 0.5);
      Tensor zero = Tensor::zeros({1});
      Tensor row1 = concat({mul(x, pow_const(r, -1.0)), mul(y, pow_const(r, -1.0)), zero});
      Tensor row2 = concat({scale(mul(y, pow_const(r2, -1.0)), -1.0), mul(x, pow_const(r2, -1.0)), zero});
      return reshape(concat({row1, row2}), {2, 3});
    };
    m.innovation_wrap = {0, 1};
  }
  return m;
}

}  // namespace ndr
