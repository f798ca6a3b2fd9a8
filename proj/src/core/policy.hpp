#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace ndr {

enum class FeatureVariant { Whitened, Raw, WhitenedNoLog, Nis };

const char* feature_variant_name(FeatureVariant v);
FeatureVariant feature_variant_from_name(const std::string& s);

struct FeatureConfig {
  FeatureVariant variant = FeatureVariant::Whitened;
  double clip_bound = 10.0;
  double epsilon = 1e-6;
};

int feature_dim(FeatureVariant v, int n_x, int n_z);

// Hyper-controller sizes. Chaos defaults below; the UAV configuration widens
// the policy head to 32 and swaps the state/measurement dimensions.
struct PolicyArch {
  int n_x = 3;
  int n_z = 2;
  int depth = 3;  // N
  int d_enc = 32;
  int d_e = 16;
  int d_h = 32;
  int d_ctx_hidden = 32;
  int d_ctx = 32;
  int d_dec1 = 16;
  int d_dec2 = 32;
  int d_pi = 16;
  FeatureConfig features;

  int in_dim() const { return feature_dim(features.variant, n_x, n_z); }
  int out_dim() const { return n_x + n_z; }
  int p_dim() const { return depth > 1 ? d_ctx + d_h : d_ctx; }
};

struct GruWeights {
  Tensor wz, wr, wn;  // d_h x in
  Tensor uz, ur, un;  // d_h x d_h
  Tensor bz, br, bn;  // d_h
};

struct PolicyWeights {
  Tensor enc_w1, enc_b1, enc_w2, enc_b2;
  std::vector<GruWeights> gru;
  Tensor ctx_w1, ctx_b1, ctx_w2, ctx_b2;
  Tensor dec_w1, dec_b1, dec_w2, dec_b2, dec_w3, dec_b3;
  Tensor pi_w1, pi_b1, pi_w2, pi_b2, pi_w3, pi_b3;

  // Visits every tensor in a fixed order with a stable name; the order defines
  // checkpoint layout, optimizer slots, and gradient flattening.
  void visit(const std::function<void(const std::string&, Tensor&)>& f);
  void visit(const std::function<void(const std::string&, const Tensor&)>& f) const;
  long long num_params() const;
};

struct PolicyState {
  std::vector<Tensor> h;  // depth vectors of size d_h
};

PolicyState initial_policy_state(const PolicyArch& arch);

// Whitened feature construction: L L^T = S + eps I, nu_t = L^{-1} nu,
// l = log(diag(L) + eps), y = clip([nu_t; l; vec(K)]). The alternate variants
// swap the first block per the ablation table.
Tensor build_features(const FeatureConfig& cfg, const Tensor& nu, const Tensor& s, const Tensor& k);

Tensor gru_cell(const GruWeights& w, const Tensor& x, const Tensor& h);

struct PolicyOutput {
  Tensor d;      // adaptation vector in (0,1)^(n_x+n_z)
  Tensor y_hat;  // reconstruction (empty when skipped)
  PolicyState state;
  Tensor c;  // shallow context
};

PolicyOutput policy_forward(const PolicyWeights& w, const PolicyArch& arch, const Tensor& y,
                            const PolicyState& state, bool with_reconstruction);

PolicyWeights init_weights(const PolicyArch& arch, std::uint64_t seed);

// Tracked copies of all weight tensors on the given tape.
PolicyWeights watch_all(Tape& tape, const PolicyWeights& w);

// Checkpoints: <path> holds the JSON manifest (version "ndr-shkf-ckpt-1",
// arch, tensor names/shapes/offsets), <path>.bin the little-endian f64 blob.
void save_checkpoint(const std::string& path, const PolicyArch& arch, const PolicyWeights& w);

struct Checkpoint {
  PolicyArch arch;
  PolicyWeights weights;
};
Checkpoint load_checkpoint(const std::string& path);

}  // namespace ndr
