#include "policy.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "rng.hpp"

namespace ndr {

using nlohmann::json;

const char* feature_variant_name(FeatureVariant v) {
  switch (v) {
    case FeatureVariant::Whitened: return "whitened";
    case FeatureVariant::Raw: return "raw";
    case FeatureVariant::WhitenedNoLog: return "whitened-no-log";
    case FeatureVariant::Nis: return "nis";
  }
  return "?";
}

FeatureVariant feature_variant_from_name(const std::string& s) {
  if (s == "whitened") return FeatureVariant::Whitened;
  if (s == "raw") return FeatureVariant::Raw;
  if (s == "whitened-no-log") return FeatureVariant::WhitenedNoLog;
  if (s == "nis") return FeatureVariant::Nis;
  fail(Err::Config, "unknown feature variant: " + s);
}

int feature_dim(FeatureVariant v, int n_x, int n_z) {
  switch (v) {
    case FeatureVariant::Whitened:
    case FeatureVariant::Raw: return 2 * n_z + n_x * n_z;
    case FeatureVariant::WhitenedNoLog: return n_z + n_x * n_z;
    case FeatureVariant::Nis: return 1 + n_x * n_z;
  }
  return 0;
}

void PolicyWeights::visit(const std::function<void(const std::string&, Tensor&)>& f) {
  f("enc.w1", enc_w1);
  f("enc.b1", enc_b1);
  f("enc.w2", enc_w2);
  f("enc.b2", enc_b2);
  for (size_t i = 0; i < gru.size(); ++i) {
    std::string p = "gru" + std::to_string(i + 1) + ".";
    f(p + "wz", gru[i].wz);
    f(p + "wr", gru[i].wr);
    f(p + "wn", gru[i].wn);
    f(p + "uz", gru[i].uz);
    f(p + "ur", gru[i].ur);
    f(p + "un", gru[i].un);
    f(p + "bz", gru[i].bz);
    f(p + "br", gru[i].br);
    f(p + "bn", gru[i].bn);
  }
  f("ctx.w1", ctx_w1);
  f("ctx.b1", ctx_b1);
  f("ctx.w2", ctx_w2);
  f("ctx.b2", ctx_b2);
  f("dec.w1", dec_w1);
  f("dec.b1", dec_b1);
  f("dec.w2", dec_w2);
  f("dec.b2", dec_b2);
  f("dec.w3", dec_w3);
  f("dec.b3", dec_b3);
  f("pi.w1", pi_w1);
  f("pi.b1", pi_b1);
  f("pi.w2", pi_w2);
  f("pi.b2", pi_b2);
  f("pi.w3", pi_w3);
  f("pi.b3", pi_b3);
}

void PolicyWeights::visit(const std::function<void(const std::string&, const Tensor&)>& f) const {
  const_cast<PolicyWeights*>(this)->visit(
      [&](const std::string& n, Tensor& t) { f(n, t); });
}

long long PolicyWeights::num_params() const {
  long long n = 0;
  visit([&](const std::string&, const Tensor& t) { n += t.size(); });
  return n;
}

PolicyState initial_policy_state(const PolicyArch& arch) {
  PolicyState s;
  for (int i = 0; i < arch.depth; ++i) s.h.push_back(Tensor::zeros({arch.d_h}));
  return s;
}

Tensor build_features(const FeatureConfig& cfg, const Tensor& nu, const Tensor& s, const Tensor& k) {
  int n_z = nu.dim(0);
  Tensor vec_k = reshape(k, {int(k.size())});
  Tensor y;
  switch (cfg.variant) {
    case FeatureVariant::Whitened: {
      Tensor l = cholesky(add(s, scale(Tensor::eye(n_z), cfg.epsilon)));
      Tensor nu_t = tri_solve_lower(l, nu);
      Tensor logs = log(add_const(diag_part(l), cfg.epsilon));
      y = concat({nu_t, logs, vec_k});
      break;
    }
    case FeatureVariant::Raw:
      y = concat({nu, diag_part(s), vec_k});
      break;
    case FeatureVariant::WhitenedNoLog: {
      Tensor l = cholesky(add(s, scale(Tensor::eye(n_z), cfg.epsilon)));
      y = concat({tri_solve_lower(l, nu), vec_k});
      break;
    }
    case FeatureVariant::Nis: {
      Tensor l = cholesky(add(s, scale(Tensor::eye(n_z), cfg.epsilon)));
      y = concat({sqnorm(tri_solve_lower(l, nu)), vec_k});
      break;
    }
  }
  return clip(y, -cfg.clip_bound, cfg.clip_bound);
}

Tensor gru_cell(const GruWeights& w, const Tensor& x, const Tensor& h) {
  Tensor z = sigmoid(add(add(matmul(w.wz, x), matmul(w.uz, h)), w.bz));
  Tensor r = sigmoid(add(add(matmul(w.wr, x), matmul(w.ur, h)), w.br));
  Tensor n = tanh(add(add(matmul(w.wn, x), mul(r, matmul(w.un, h))), w.bn));
  Tensor one_minus_z = add_const(scale(z, -1.0), 1.0);
  return add(mul(one_minus_z, n), mul(z, h));
}

namespace {

Tensor linear(const Tensor& w, const Tensor& b, const Tensor& x) { return add(matmul(w, x), b); }

}  // namespace

PolicyOutput policy_forward(const PolicyWeights& w, const PolicyArch& arch, const Tensor& y,
                            const PolicyState& state, bool with_reconstruction) {
  if (int(state.h.size()) != arch.depth) fail(Err::Shape, "policy state depth mismatch");
  Tensor e = relu(linear(w.enc_w2, w.enc_b2, relu(linear(w.enc_w1, w.enc_b1, y))));

  PolicyOutput out;
  out.state.h.reserve(size_t(arch.depth));
  Tensor input = e;
  for (int i = 0; i < arch.depth; ++i) {
    Tensor h_new = gru_cell(w.gru[size_t(i)], input, state.h[size_t(i)]);
    out.state.h.push_back(h_new);
    input = h_new;
  }

  out.c = relu(linear(w.ctx_w2, w.ctx_b2, relu(linear(w.ctx_w1, w.ctx_b1, out.state.h[0]))));
  Tensor p = arch.depth > 1 ? concat({out.c, out.state.h.back()}) : out.c;
  Tensor hidden = relu(linear(w.pi_w2, w.pi_b2, relu(linear(w.pi_w1, w.pi_b1, p))));
  out.d = sigmoid(linear(w.pi_w3, w.pi_b3, hidden));

  if (with_reconstruction) {
    Tensor d1 = relu(linear(w.dec_w1, w.dec_b1, out.c));
    Tensor d2 = relu(linear(w.dec_w2, w.dec_b2, d1));
    out.y_hat = linear(w.dec_w3, w.dec_b3, d2);
  }
  return out;
}

namespace {

Tensor he_normal(int rows, int cols, Rng& rng) {
  Buf b(size_t(rows) * size_t(cols));
  double std = std::sqrt(2.0 / double(cols));
  for (auto& v : b) v = std * rng.normal();
  return Tensor({rows, cols}, std::move(b));
}

Tensor uniform_pm(int rows, int cols, double bound, Rng& rng) {
  Buf b(size_t(rows) * size_t(cols));
  for (auto& v : b) v = rng.uniform(-bound, bound);
  return Tensor({rows, cols}, std::move(b));
}

}  // namespace

PolicyWeights init_weights(const PolicyArch& arch, std::uint64_t seed) {
  PolicyWeights w;
  std::uint64_t idx = 0;
  auto next_rng = [&]() { return Rng(seed, 0xfeed, idx++); };

  {
    Rng r = next_rng();
    w.enc_w1 = he_normal(arch.d_enc, arch.in_dim(), r);
  }
  w.enc_b1 = Tensor::zeros({arch.d_enc});
  {
    Rng r = next_rng();
    w.enc_w2 = he_normal(arch.d_e, arch.d_enc, r);
  }
  w.enc_b2 = Tensor::zeros({arch.d_e});

  double gb = 1.0 / std::sqrt(double(arch.d_h));
  for (int i = 0; i < arch.depth; ++i) {
    GruWeights g;
    int in = i == 0 ? arch.d_e : arch.d_h;
    Rng r = next_rng();
    g.wz = uniform_pm(arch.d_h, in, gb, r);
    g.wr = uniform_pm(arch.d_h, in, gb, r);
    g.wn = uniform_pm(arch.d_h, in, gb, r);
    g.uz = uniform_pm(arch.d_h, arch.d_h, gb, r);
    g.ur = uniform_pm(arch.d_h, arch.d_h, gb, r);
    g.un = uniform_pm(arch.d_h, arch.d_h, gb, r);
    g.bz = Tensor::zeros({arch.d_h});
    g.br = Tensor::zeros({arch.d_h});
    g.bn = Tensor::zeros({arch.d_h});
    w.gru.push_back(std::move(g));
  }

  {
    Rng r = next_rng();
    w.ctx_w1 = he_normal(arch.d_ctx_hidden, arch.d_h, r);
  }
  w.ctx_b1 = Tensor::zeros({arch.d_ctx_hidden});
  {
    Rng r = next_rng();
    w.ctx_w2 = he_normal(arch.d_ctx, arch.d_ctx_hidden, r);
  }
  w.ctx_b2 = Tensor::zeros({arch.d_ctx});

  {
    Rng r = next_rng();
    w.dec_w1 = he_normal(arch.d_dec1, arch.d_ctx, r);
  }
  w.dec_b1 = Tensor::zeros({arch.d_dec1});
  {
    Rng r = next_rng();
    w.dec_w2 = he_normal(arch.d_dec2, arch.d_dec1, r);
  }
  w.dec_b2 = Tensor::zeros({arch.d_dec2});
  {
    Rng r = next_rng();
    w.dec_w3 = uniform_pm(arch.in_dim(), arch.d_dec2, 1.0 / std::sqrt(double(arch.d_dec2)), r);
  }
  w.dec_b3 = Tensor::zeros({arch.in_dim()});

  {
    Rng r = next_rng();
    w.pi_w1 = he_normal(arch.d_pi, arch.p_dim(), r);
  }
  w.pi_b1 = Tensor::zeros({arch.d_pi});
  {
    Rng r = next_rng();
    w.pi_w2 = he_normal(arch.d_pi, arch.d_pi, r);
  }
  w.pi_b2 = Tensor::zeros({arch.d_pi});
  {
    Rng r = next_rng();
    w.pi_w3 = uniform_pm(arch.out_dim(), arch.d_pi, 1.0 / std::sqrt(double(arch.d_pi)), r);
  }
  w.pi_b3 = Tensor::zeros({arch.out_dim()});
  return w;
}

PolicyWeights watch_all(Tape& tape, const PolicyWeights& w) {
  PolicyWeights out = w;
  out.visit([&](const std::string&, Tensor& t) { t = tape.watch(t); });
  return out;
}

// ---- Checkpoint io ----------------------------------------------------------

namespace {

json arch_to_json(const PolicyArch& a) {
  return json{{"n_x", a.n_x},
              {"n_z", a.n_z},
              {"depth", a.depth},
              {"d_enc", a.d_enc},
              {"d_e", a.d_e},
              {"d_h", a.d_h},
              {"d_ctx_hidden", a.d_ctx_hidden},
              {"d_ctx", a.d_ctx},
              {"d_dec1", a.d_dec1},
              {"d_dec2", a.d_dec2},
              {"d_pi", a.d_pi},
              {"variant", feature_variant_name(a.features.variant)},
              {"clip_bound", a.features.clip_bound},
              {"epsilon", a.features.epsilon}};
}

PolicyArch arch_from_json(const json& j) {
  PolicyArch a;
  a.n_x = j.at("n_x").get<int>();
  a.n_z = j.at("n_z").get<int>();
  a.depth = j.at("depth").get<int>();
  a.d_enc = j.at("d_enc").get<int>();
  a.d_e = j.at("d_e").get<int>();
  a.d_h = j.at("d_h").get<int>();
  a.d_ctx_hidden = j.at("d_ctx_hidden").get<int>();
  a.d_ctx = j.at("d_ctx").get<int>();
  a.d_dec1 = j.at("d_dec1").get<int>();
  a.d_dec2 = j.at("d_dec2").get<int>();
  a.d_pi = j.at("d_pi").get<int>();
  a.features.variant = feature_variant_from_name(j.at("variant").get<std::string>());
  a.features.clip_bound = j.at("clip_bound").get<double>();
  a.features.epsilon = j.at("epsilon").get<double>();
  return a;
}

std::string basename_of(const std::string& path) {
  size_t p = path.find_last_of('/');
  return p == std::string::npos ? path : path.substr(p + 1);
}

}  // namespace

void save_checkpoint(const std::string& path, const PolicyArch& arch, const PolicyWeights& w) {
  std::string blob_path = path + ".bin";
  json manifest;
  manifest["version"] = "ndr-shkf-ckpt-1";
  manifest["blob"] = basename_of(blob_path);
  manifest["arch"] = arch_to_json(arch);
  json tensors = json::array();

  std::ofstream blob(blob_path, std::ios::binary | std::ios::trunc);
  if (!blob) fail(Err::Io, "cannot write " + blob_path);
  long long offset = 0;
  w.visit([&](const std::string& name, const Tensor& t) {
    json e;
    e["name"] = name;
    e["shape"] = t.shape();
    e["offset"] = offset;
    tensors.push_back(e);
    auto d = t.data();
    blob.write(reinterpret_cast<const char*>(d.data()), std::streamsize(d.size() * sizeof(double)));
    offset += (long long)(d.size() * sizeof(double));
  });
  blob.close();
  manifest["tensors"] = tensors;

  std::ofstream mf(path, std::ios::trunc);
  if (!mf) fail(Err::Io, "cannot write " + path);
  mf << manifest.dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream mf(path);
  if (!mf) fail(Err::Io, "cannot read " + path);
  json manifest;
  try {
    mf >> manifest;
  } catch (const std::exception& e) {
    fail(Err::Io, std::string("bad checkpoint manifest: ") + e.what());
  }
  if (manifest.value("version", "") != std::string("ndr-shkf-ckpt-1"))
    fail(Err::Io, "unsupported checkpoint version in " + path);

  Checkpoint out;
  out.arch = arch_from_json(manifest.at("arch"));
  out.weights = init_weights(out.arch, 0);

  std::string dir;
  if (size_t p = path.find_last_of('/'); p != std::string::npos) dir = path.substr(0, p + 1);
  std::string blob_path = dir + manifest.at("blob").get<std::string>();
  std::ifstream blob(blob_path, std::ios::binary);
  if (!blob) fail(Err::Io, "cannot read " + blob_path);

  std::map<std::string, json> entries;
  for (const auto& e : manifest.at("tensors")) entries[e.at("name").get<std::string>()] = e;

  out.weights.visit([&](const std::string& name, Tensor& t) {
    auto it = entries.find(name);
    if (it == entries.end()) fail(Err::Io, "checkpoint missing tensor " + name);
    Shape shape = it->second.at("shape").get<Shape>();
    if (shape != t.shape()) fail(Err::Io, "checkpoint shape mismatch for " + name);
    long long offset = it->second.at("offset").get<long long>();
    Buf data(size_t(shape_size(shape)));
    blob.seekg(offset);
    blob.read(reinterpret_cast<char*>(data.data()), std::streamsize(data.size() * sizeof(double)));
    if (!blob) fail(Err::Io, "checkpoint blob truncated at " + name);
    t = Tensor(shape, std::move(data));
  });
  return out;
}

}  // namespace ndr
