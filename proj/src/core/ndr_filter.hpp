#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "kalman.hpp"
#include "policy.hpp"

namespace ndr {

struct NdrState {
  FilterState fs;
  PolicyState ps;
  long long k = 0;
};

// Semantic zero-fill embedding of a low-dimensional filter's whitened inputs
// into a policy trained on a larger state space, with positional offsets for
// the state and measurement channels.
struct TransferMap {
  int x_off = 0;
  int z_off = 0;
  int n_x_sim = 3;
  int n_z_sim = 2;
  int n_x_uav = 19;
  int n_z_uav = 6;

  void validate() const;
};

struct NdrConfig {
  Safeguards safeguards;
  Tensor q_base;  // nominal diagonals anchoring the safeguard band
  Tensor r_base;
  bool with_reconstruction = true;
};

struct StepDiagnostics {
  Tensor nu, s, k, d, y, y_hat;
};

// Either the policy applied directly, or through a TransferMap when the
// policy's dimensions differ from the filter's.
struct PolicyAdapter {
  const PolicyWeights* weights = nullptr;
  const PolicyArch* arch = nullptr;
  const TransferMap* transfer = nullptr;
};

// One Algorithm-style recursive update: predict, gain, whitened features,
// policy synthesis, state update, empirical moments, Hadamard blend,
// safeguards. Differentiable end to end when the weights are tape-tracked.
NdrState ndr_step(const SystemModel& m, const PolicyAdapter& policy, const NdrConfig& cfg,
                  const NdrState& ns, const Tensor& z, const Tensor& u, double dt,
                  StepDiagnostics* diag = nullptr);

struct RolloutResult {
  std::vector<Tensor> x_hats;  // posterior state per step
  std::vector<StepDiagnostics> diags;
  bool diverged = false;
  int steps = 0;  // completed steps
};

// Chains ndr_step over T measurements. A step error marks the trajectory
// diverged and truncates it rather than throwing.
RolloutResult rollout(const SystemModel& m, const PolicyAdapter& policy, const NdrConfig& cfg,
                      NdrState ns, const std::vector<Tensor>& zs, const std::vector<Tensor>& us,
                      double dt, bool keep_diagnostics = true);

// y_uav embedding and adaptation extraction for the cross-dynamics transfer.
Tensor embed_cross_domain(const TransferMap& map, const Tensor& nu_t_sim, const Tensor& l_sim,
                          const Tensor& k_sim);
struct ExtractedAdaptation {
  Tensor d_q;
  Tensor d_r;
};
ExtractedAdaptation extract_adaptation(const TransferMap& map, const Tensor& d_uav);

}  // namespace ndr
