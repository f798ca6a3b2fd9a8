#include "kalman.hpp"

#include <cmath>

namespace ndr {

PredictResult ekf_predict(const SystemModel& m, const FilterState& fs, const Tensor& u, double dt,
                          const Safeguards& sg) {
  PredictResult out;
  out.f_jac = m.jacobian_f(fs.x_hat, u, dt);
  out.fs.x_hat = m.f(fs.x_hat, u, dt);
  Tensor p = add(matmul(matmul(out.f_jac, fs.p), transpose(out.f_jac)), diag_matrix(fs.q_diag));
  out.fs.p = sg.symmetrize ? symmetrize(p) : p;
  out.fs.q_diag = fs.q_diag;
  out.fs.r_diag = fs.r_diag;
  return out;
}

UpdateResult ekf_update(const SystemModel& m, const FilterState& fs, const Tensor& z,
                        const Tensor& u, const Safeguards& sg) {
  UpdateResult out;
  out.h = m.jacobian_h(fs.x_hat, u);
  Tensor nu = sub(z, m.h(fs.x_hat, u));
  if (!m.innovation_wrap.empty()) nu = angle_wrap(nu, m.innovation_wrap);
  out.nu = nu;
  Tensor pht = matmul(fs.p, transpose(out.h));
  out.s = add(matmul(out.h, pht), diag_matrix(fs.r_diag));
  Tensor s_inv;
  try {
    s_inv = inverse(out.s);
  } catch (const Error& e) {
    if (e.code() == Err::SingularInnovationCovariance) throw;
    fail(Err::SingularInnovationCovariance, std::string("innovation covariance: ") + e.what());
  }
  out.k = matmul(pht, s_inv);
  out.fs.x_hat = add(fs.x_hat, matmul(out.k, nu));
  Tensor kh = matmul(out.k, out.h);
  Tensor i_kh = sub(Tensor::eye(m.n_x), kh);
  Tensor p;
  if (sg.joseph_form) {
    p = add(matmul(matmul(i_kh, fs.p), transpose(i_kh)),
            matmul(matmul(out.k, diag_matrix(fs.r_diag)), transpose(out.k)));
  } else {
    p = matmul(i_kh, fs.p);
  }
  out.fs.p = sg.symmetrize ? symmetrize(p) : p;
  out.fs.q_diag = fs.q_diag;
  out.fs.r_diag = fs.r_diag;
  return out;
}

double shkf_adaptation_factor(double b, long long k) {
  if (!(b > 0.0 && b < 1.0)) fail(Err::InvalidArg, "shkf_adaptation_factor: b must be in (0,1)");
  if (k < 0) fail(Err::InvalidArg, "shkf_adaptation_factor: k must be >= 0");
  return (1.0 - b) / (1.0 - std::pow(b, double(k + 1)));
}

EmpiricalMoments shkf_empirical_moments(const Tensor& nu, const Tensor& h, const Tensor& p_prior,
                                        const Tensor& k, const Tensor& p_post, const Tensor& f,
                                        const Tensor& p_prev) {
  EmpiricalMoments out;
  Tensor hpht_diag = diag_part(matmul(matmul(h, p_prior), transpose(h)));
  out.r_hat = sub(mul(nu, nu), hpht_diag);
  Tensor knu = matmul(k, nu);
  Tensor fpf_diag = diag_part(matmul(matmul(f, p_prev), transpose(f)));
  out.q_hat = sub(add(mul(knu, knu), diag_part(p_post)), fpf_diag);
  return out;
}

Tensor blend_and_safeguard(const Tensor& prev_diag, const Tensor& emp_diag, const Tensor& d,
                           const Tensor& base_diag, const Safeguards& sg) {
  Tensor one_minus_d = d.size() == 1 ? Tensor::scalar(1.0 - d.value())
                                     : sub(Tensor::full(d.shape(), 1.0), d);
  Tensor blended = add(mul(one_minus_d, prev_diag), mul(d, emp_diag));
  Buf lo(size_t(base_diag.size())), hi(size_t(base_diag.size()));
  auto bd = base_diag.data();
  for (size_t i = 0; i < lo.size(); ++i) {
    lo[i] = std::max(sg.floor, bd[i] / sg.band_factor);
    hi[i] = bd[i] * sg.band_factor;
  }
  return clip(blended, Tensor(base_diag.shape(), std::move(lo)), Tensor(base_diag.shape(), std::move(hi)));
}

std::vector<double> numeric_jacobian(
    const std::function<std::vector<double>(std::span<const double>)>& fn,
    std::span<const double> point, double step) {
  std::vector<double> p(point.begin(), point.end());
  std::vector<double> f0 = fn(p);
  size_t m = f0.size(), n = p.size();
  std::vector<double> jac(m * n, 0.0);
  for (size_t j = 0; j < n; ++j) {
    double keep = p[j];
    p[j] = keep + step;
    std::vector<double> fp = fn(p);
    p[j] = keep - step;
    std::vector<double> fm = fn(p);
    p[j] = keep;
    for (size_t i = 0; i < m; ++i) jac[i * n + j] = (fp[i] - fm[i]) / (2.0 * step);
  }
  return jac;
}

FilterState ekf_step(const SystemModel& m, const FilterState& fs, const Tensor& z, const Tensor& u,
                     double dt, const Safeguards& sg, ClassicalDiag* diag) {
  PredictResult pr = ekf_predict(m, fs, u, dt, sg);
  UpdateResult ur = ekf_update(m, pr.fs, z, u, sg);
  if (diag) *diag = {ur.nu, ur.s, ur.k};
  return ur.fs;
}

FilterState shkf_step(const SystemModel& m, const FilterState& fs, const Tensor& z, const Tensor& u,
                      double dt, double d, const Tensor& q_base, const Tensor& r_base,
                      const Safeguards& sg, ClassicalDiag* diag) {
  PredictResult pr = ekf_predict(m, fs, u, dt, sg);
  UpdateResult ur = ekf_update(m, pr.fs, z, u, sg);
  EmpiricalMoments em =
      shkf_empirical_moments(ur.nu, ur.h, pr.fs.p, ur.k, ur.fs.p, pr.f_jac, fs.p);
  FilterState next = ur.fs;
  Tensor ds = Tensor::scalar(d);
  next.r_diag = blend_and_safeguard(fs.r_diag, em.r_hat, ds, r_base, sg);
  next.q_diag = blend_and_safeguard(fs.q_diag, em.q_hat, ds, q_base, sg);
  if (diag) *diag = {ur.nu, ur.s, ur.k};
  return next;
}

}  // namespace ndr
