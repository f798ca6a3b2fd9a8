#include "ndr_filter.hpp"

namespace ndr {

void TransferMap::validate() const {
  if (x_off < 0 || z_off < 0 || x_off + n_x_sim > n_x_uav || z_off + n_z_sim > n_z_uav)
    fail(Err::OffsetOutOfRange, "transfer offsets (" + std::to_string(x_off) + "," +
                                    std::to_string(z_off) + ") do not fit the target dims");
}

Tensor embed_cross_domain(const TransferMap& map, const Tensor& nu_t_sim, const Tensor& l_sim,
                          const Tensor& k_sim) {
  map.validate();
  if (nu_t_sim.dim(0) != map.n_z_sim || l_sim.dim(0) != map.n_z_sim)
    fail(Err::Shape, "embed_cross_domain: whitened input dims do not match the map");
  if (k_sim.rank() != 2 || k_sim.dim(0) != map.n_x_sim || k_sim.dim(1) != map.n_z_sim)
    fail(Err::Shape, "embed_cross_domain: gain dims do not match the map");

  int zn = map.n_z_uav;
  std::vector<Tensor> parts;
  auto pad = [&](int len) {
    if (len > 0) parts.push_back(Tensor::zeros({len}));
  };
  pad(map.z_off);
  parts.push_back(nu_t_sim);
  pad(zn - map.z_off - map.n_z_sim);
  pad(map.z_off);
  parts.push_back(l_sim);
  pad(zn - map.z_off - map.n_z_sim);
  // vec of a 19x6 zero matrix holding K_sim as a block, row-major
  for (int row = 0; row < map.n_x_uav; ++row) {
    if (row >= map.x_off && row < map.x_off + map.n_x_sim) {
      pad(map.z_off);
      parts.push_back(slice(reshape(k_sim, {map.n_x_sim * map.n_z_sim}),
                            (row - map.x_off) * map.n_z_sim, map.n_z_sim));
      pad(zn - map.z_off - map.n_z_sim);
    } else {
      pad(zn);
    }
  }
  return concat(parts);
}

ExtractedAdaptation extract_adaptation(const TransferMap& map, const Tensor& d_uav) {
  map.validate();
  if (d_uav.dim(0) != map.n_x_uav + map.n_z_uav)
    fail(Err::Shape, "extract_adaptation: adaptation vector has the wrong length");
  ExtractedAdaptation out;
  out.d_q = slice(d_uav, map.x_off, map.n_x_sim);
  out.d_r = slice(d_uav, map.n_x_uav + map.z_off, map.n_z_sim);
  return out;
}

NdrState ndr_step(const SystemModel& m, const PolicyAdapter& policy, const NdrConfig& cfg,
                  const NdrState& ns, const Tensor& z, const Tensor& u, double dt,
                  StepDiagnostics* diag) {
  const PolicyArch& arch = *policy.arch;
  PredictResult pr = ekf_predict(m, ns.fs, u, dt, cfg.safeguards);
  UpdateResult ur = ekf_update(m, pr.fs, z, u, cfg.safeguards);

  Tensor y;
  Tensor d_q, d_r;
  PolicyOutput po;
  if (policy.transfer) {
    const FeatureConfig& fc = arch.features;
    if (fc.variant != FeatureVariant::Whitened)
      fail(Err::Config, "cross-domain transfer requires the whitened input variant");
    Tensor l = cholesky(add(ur.s, scale(Tensor::eye(m.n_z), fc.epsilon)));
    Tensor nu_t = tri_solve_lower(l, ur.nu);
    Tensor logs = log(add_const(diag_part(l), fc.epsilon));
    y = clip(embed_cross_domain(*policy.transfer, nu_t, logs, ur.k), -fc.clip_bound, fc.clip_bound);
    po = policy_forward(*policy.weights, arch, y, ns.ps, cfg.with_reconstruction);
    auto ex = extract_adaptation(*policy.transfer, po.d);
    d_q = ex.d_q;
    d_r = ex.d_r;
  } else {
    y = build_features(arch.features, ur.nu, ur.s, ur.k);
    po = policy_forward(*policy.weights, arch, y, ns.ps, cfg.with_reconstruction);
    d_q = slice(po.d, 0, m.n_x);
    d_r = slice(po.d, m.n_x, m.n_z);
  }

  EmpiricalMoments em = shkf_empirical_moments(ur.nu, ur.h, pr.fs.p, ur.k, ur.fs.p, pr.f_jac, ns.fs.p);

  NdrState next;
  next.fs = ur.fs;
  next.fs.r_diag = blend_and_safeguard(ns.fs.r_diag, em.r_hat, d_r, cfg.r_base, cfg.safeguards);
  next.fs.q_diag = blend_and_safeguard(ns.fs.q_diag, em.q_hat, d_q, cfg.q_base, cfg.safeguards);
  next.ps = po.state;
  next.k = ns.k + 1;
  if (diag) *diag = {ur.nu, ur.s, ur.k, po.d, y, po.y_hat};
  return next;
}

RolloutResult rollout(const SystemModel& m, const PolicyAdapter& policy, const NdrConfig& cfg,
                      NdrState ns, const std::vector<Tensor>& zs, const std::vector<Tensor>& us,
                      double dt, bool keep_diagnostics) {
  RolloutResult out;
  out.x_hats.reserve(zs.size());
  for (size_t k = 0; k < zs.size(); ++k) {
    StepDiagnostics diag;
    try {
      ns = ndr_step(m, policy, cfg, ns, zs[k], us.empty() ? Tensor{} : us[k], dt,
                    keep_diagnostics ? &diag : nullptr);
    } catch (const Error&) {
      out.diverged = true;
      break;
    }
    out.x_hats.push_back(ns.fs.x_hat);
    if (keep_diagnostics) out.diags.push_back(std::move(diag));
    out.steps = int(k) + 1;
  }
  return out;
}

}  // namespace ndr
