#include "trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <thread>

#include "models.hpp"
#include "parallel.hpp"

namespace ndr {

int seq_len_at(const TrainConfig& cfg, int epoch) {
  int t = cfg.seq_schedule.empty() ? 60 : cfg.seq_schedule.front().t;
  for (const auto& p : cfg.seq_schedule)
    if (epoch >= p.epoch) t = p.t;
  return t;
}

double lr_at(const TrainConfig& cfg, int epoch) {
  double factor = 1.0;
  double frac = cfg.epochs > 0 ? double(epoch) / double(cfg.epochs) : 0.0;
  for (const auto& p : cfg.lr_schedule)
    if (frac >= p.fraction) factor = p.factor;
  return cfg.lr * factor;
}

// ---- Losses ---------------------------------------------------------------------

Tensor chaos_loss(const std::vector<Tensor>& x_hats, const std::vector<Tensor>& truths,
                  const std::vector<Tensor>& ys, const std::vector<Tensor>& y_hats,
                  double lambda_aux) {
  if (x_hats.size() != truths.size() || ys.size() != y_hats.size() || x_hats.size() != ys.size())
    fail(Err::Shape, "chaos_loss: series length mismatch");
  Tensor loss = Tensor::scalar(0.0);
  for (size_t k = 0; k < x_hats.size(); ++k) {
    loss = add(loss, sqnorm(sub(truths[k], x_hats[k])));
    if (lambda_aux != 0.0)
      loss = add(loss, scale(sqnorm(sub(ys[k], y_hats[k])), lambda_aux));
  }
  if (!std::isfinite(loss.value())) fail(Err::NonFinite, "chaos_loss is not finite");
  return loss;
}

Tensor uav_loss(const std::vector<Tensor>& positions, const std::vector<Tensor>& pos_truths,
                const std::vector<Tensor>& quats, const std::vector<Tensor>& quat_truths,
                const std::vector<Tensor>& ys, const std::vector<Tensor>& y_hats,
                double lambda_att, double lambda_aux, double huber_delta) {
  size_t t = positions.size();
  if (t == 0) fail(Err::Shape, "uav_loss: empty series");
  if (pos_truths.size() != t || quats.size() != t || quat_truths.size() != t)
    fail(Err::Shape, "uav_loss: series length mismatch");
  for (size_t k = 0; k < t; ++k) {
    double n1 = std::sqrt(sqnorm(quats[k]).value());
    double n2 = std::sqrt(sqnorm(quat_truths[k]).value());
    if (std::fabs(n1 - 1.0) > 1e-6 || std::fabs(n2 - 1.0) > 1e-6)
      fail(Err::InvalidArg, "uav_loss: quaternions must be unit norm");
  }

  int n = positions[0].dim(0);
  Tensor pos_term = Tensor::scalar(0.0);
  Tensor att_term = Tensor::scalar(0.0);
  for (size_t k = 0; k < t; ++k) {
    pos_term = add(pos_term, scale(sum(huber(sub(positions[k], pos_truths[k]), huber_delta)),
                                   1.0 / double(n)));
    Tensor inner = sum(mul(quats[k], quat_truths[k]));
    att_term = add(att_term, add_const(scale(abs(inner), -1.0), 1.0));
  }
  Tensor loss = add(scale(pos_term, 1.0 / double(t)),
                    scale(att_term, lambda_att / double(t)));
  if (lambda_aux != 0.0 && !ys.empty()) {
    Tensor aux = Tensor::scalar(0.0);
    for (size_t k = 0; k < ys.size(); ++k) aux = add(aux, sqnorm(sub(ys[k], y_hats[k])));
    loss = add(loss, scale(aux, lambda_aux / double(ys.size())));
  }
  if (!std::isfinite(loss.value())) fail(Err::NonFinite, "uav_loss is not finite");
  return loss;
}

// ---- Optimization ----------------------------------------------------------------

AdamState init_adam_state(const PolicyWeights& w) {
  AdamState st;
  w.visit([&](const std::string&, const Tensor& t) {
    st.m.emplace_back(size_t(t.size()), 0.0);
    st.v.emplace_back(size_t(t.size()), 0.0);
  });
  return st;
}

double clip_global_norm(std::vector<Buf>& grads, double threshold) {
  if (!(threshold > 0.0)) fail(Err::InvalidArg, "clip_global_norm: threshold must be positive");
  double sq = 0.0;
  for (const auto& g : grads)
    for (double v : g) sq += v * v;
  double norm = std::sqrt(sq);
  if (norm > threshold) {
    double s = threshold / norm;
    for (auto& g : grads)
      for (double& v : g) v *= s;
  }
  return norm;
}

void adam_step(PolicyWeights& w, const std::vector<Buf>& grads, AdamState& st, double lr) {
  st.step += 1;
  double bc1 = 1.0 - std::pow(st.beta1, double(st.step));
  double bc2 = 1.0 - std::pow(st.beta2, double(st.step));
  size_t slot = 0;
  w.visit([&](const std::string&, Tensor& t) {
    const Buf& g = grads[slot];
    Buf& m = st.m[slot];
    Buf& v = st.v[slot];
    Buf out(t.data().begin(), t.data().end());
    for (size_t i = 0; i < out.size(); ++i) {
      m[i] = st.beta1 * m[i] + (1.0 - st.beta1) * g[i];
      v[i] = st.beta2 * v[i] + (1.0 - st.beta2) * g[i] * g[i];
      double m_hat = m[i] / bc1;
      double v_hat = v[i] / bc2;
      out[i] -= lr * m_hat / (std::sqrt(v_hat) + st.eps);
    }
    t = Tensor(t.shape(), std::move(out));
    ++slot;
  });
}

// ---- Randomization -----------------------------------------------------------------

NoiseProfile randomize_chaos_episode(const ChaosRandomization& r, Rng& rng) {
  NoiseProfile prof;
  prof.q_base = r.q_base;
  for (int i = 0; i < 3; ++i)
    prof.harmonics.push_back({rng.uniform(r.amp_min, r.amp_max),
                              rng.uniform(r.omega_min, r.omega_max), rng.uniform(0.0, kTwoPi)});
  prof.r_base = r.r_base;
  prof.outlier_prob = r.outlier_prob;
  prof.outlier_scale = r.outlier_scale;
  return prof;
}

DegradedStreams degrade_uav_signals(std::span<const double> z, std::span<const double> u,
                                    int steps, double dt, Rng& rng, const DomainRandomization& dr,
                                    std::span<const double> meas_var_scale) {
  DegradedStreams out;
  out.z.assign(z.begin(), z.begin() + size_t(steps) * 6);
  out.u.assign(u.begin(), u.begin() + size_t(steps) * 6);

  auto mag = [&](double max) { return max <= 0.0 ? 0.0 : rng.uniform(dr.ratio * max, max); };
  double s_meas = mag(dr.sigma_meas);
  double s_out_meas = mag(dr.sigma_out_meas);
  double s_inp = mag(dr.sigma_inp);
  double s_out_inp = mag(dr.sigma_out_inp);
  double s_sf = mag(dr.sigma_sf);
  double s_bias = mag(dr.sigma_bias);
  double s_walk = mag(dr.sigma_walk);
  double amp = mag(dr.vib_amp);
  double s_vib = mag(dr.sigma_vib);

  std::array<double, 6> sf{}, b_init{}, b_walk{};
  for (int i = 0; i < 6; ++i) {
    sf[size_t(i)] = s_sf * rng.normal();
    b_init[size_t(i)] = s_bias * rng.normal();
  }

  for (int k = 0; k < steps; ++k) {
    double vscale = meas_var_scale.empty() ? 1.0 : meas_var_scale[size_t(k)];
    double sscale = std::sqrt(vscale);
    // external pose: outlier mixture on position, gaussian on attitude
    bool outlier = rng.bernoulli(dr.eps_meas);
    for (int c = 0; c < 3; ++c) {
      double sd = (outlier ? s_out_meas : s_meas) * sscale;
      out.z[size_t(k) * 6 + size_t(c)] += sd * rng.normal();
    }
    for (int c = 3; c < 6; ++c) {
      out.z[size_t(k) * 6 + size_t(c)] += s_meas * sscale * rng.normal();
      out.z[size_t(k) * 6 + size_t(c)] = wrap_angle(out.z[size_t(k) * 6 + size_t(c)]);
    }

    bool inp_outlier = rng.bernoulli(dr.eps_inp);
    double env = 1.0 + amp * std::pow(std::sin(dr.vib_omega * double(k) * dt), 2.0);
    for (int c = 0; c < 6; ++c) {
      size_t idx = size_t(k) * 6 + size_t(c);
      double v_inp = (inp_outlier ? s_out_inp : s_inp) * rng.normal();
      b_walk[size_t(c)] += s_walk * rng.normal();
      double v_vib = s_vib * rng.normal() * env;
      out.u[idx] = (out.u[idx] + v_inp) * (1.0 + sf[size_t(c)]) + b_init[size_t(c)] +
                   b_walk[size_t(c)] + v_vib;
    }
  }
  return out;
}

WindowPick sample_window(const std::vector<int>& log_steps, int t, Rng& rng) {
  long long total = 0;
  std::vector<long long> starts(log_steps.size());
  for (size_t i = 0; i < log_steps.size(); ++i) {
    starts[i] = std::max(0, log_steps[i] - t + 1);
    total += starts[i];
  }
  if (total <= 0) fail(Err::InvalidArg, "sample_window: no window of length t fits any log");
  long long pick = (long long)(rng.uniform() * double(total));
  pick = std::min(pick, total - 1);
  WindowPick out;
  for (size_t i = 0; i < starts.size(); ++i) {
    if (pick < starts[i]) {
      out.log_index = int(i);
      out.start = int(pick);
      return out;
    }
    pick -= starts[i];
  }
  out.log_index = int(log_steps.size()) - 1;
  out.start = int(starts.back() - 1);
  return out;
}

// ---- Shared batch machinery ----------------------------------------------------

namespace {

struct ElementResult {
  bool masked = true;
  double loss = 0.0;
  double track = 0.0;
  double aux = 0.0;
  double att = 0.0;
  std::vector<Buf> grads;
};

std::vector<Buf> collect_grads(Tape& tape, const PolicyWeights& tracked) {
  std::vector<Buf> out;
  tracked.visit([&](const std::string&, const Tensor& t) {
    Tensor g = tape.grad(t);
    out.emplace_back(g.data().begin(), g.data().end());
  });
  return out;
}

struct BatchOutcome {
  int valid = 0;
  double mean_loss = 0.0, track = 0.0, aux = 0.0, att = 0.0;
  std::vector<Buf> grads;  // mean over valid elements
};

BatchOutcome reduce_elements(std::vector<ElementResult>& elems, const PolicyWeights& w) {
  BatchOutcome out;
  w.visit([&](const std::string&, const Tensor& t) { out.grads.emplace_back(size_t(t.size()), 0.0); });
  for (auto& e : elems) {
    if (e.masked) continue;
    ++out.valid;
    out.mean_loss += e.loss;
    out.track += e.track;
    out.aux += e.aux;
    out.att += e.att;
    for (size_t s = 0; s < out.grads.size(); ++s)
      for (size_t i = 0; i < out.grads[s].size(); ++i) out.grads[s][i] += e.grads[s][i];
  }
  if (out.valid > 0) {
    double inv = 1.0 / double(out.valid);
    out.mean_loss *= inv;
    out.track *= inv;
    out.aux *= inv;
    out.att *= inv;
    for (auto& g : out.grads)
      for (double& v : g) v *= inv;
  }
  return out;
}

void maybe_checkpoint(const TrainConfig& cfg, const PolicyArch& arch, const PolicyWeights& w,
                      int epoch) {
  if (cfg.checkpoint_every <= 0 || cfg.checkpoint_path.empty()) return;
  if (epoch > 0 && epoch % cfg.checkpoint_every == 0)
    save_checkpoint(cfg.checkpoint_path + ".ep" + std::to_string(epoch), arch, w);
}

}  // namespace

std::string train_log_jsonl(const std::vector<EpochLog>& log) {
  std::string s;
  char buf[256];
  for (const auto& e : log) {
    std::snprintf(buf, sizeof(buf),
                  "{\"epoch\":%d,\"T\":%d,\"lr\":%.10g,\"loss\":%.10g,\"track\":%.10g,"
                  "\"aux\":%.10g,\"att\":%.10g,\"grad_norm\":%.10g,\"masked\":%d}\n",
                  e.epoch, e.t, e.lr, e.mean_loss, e.track_loss, e.aux_loss, e.att_loss,
                  e.grad_norm, e.masked);
    s += buf;
  }
  return s;
}

TrainResult train_chaos(const PolicyArch& arch, const TrainConfig& cfg,
                        const ChaosRandomization& ranges) {
  ChaosParams sys;  // Lorenz training domain
  SystemModel model = make_chaos_model(sys);
  PolicyWeights weights = init_weights(arch, cfg.seed);
  AdamState adam = init_adam_state(weights);
  TrainResult result;

  Tensor q_base = Tensor::full({3}, ranges.q_base);
  Tensor r_base = Tensor::vector({ranges.r_base[0], ranges.r_base[1]});
  Safeguards sg;

  long long episode_counter = 0;
  int nan_streak = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    int t_len = seq_len_at(cfg, epoch);
    double lr = lr_at(cfg, epoch);
    for (int batch = 0; batch < cfg.batches_per_epoch; ++batch) {
      std::vector<ElementResult> elems(size_t(cfg.batch_size));
      long long base_episode = episode_counter;
      episode_counter += cfg.batch_size;

      parallel_over(cfg.batch_size, cfg.threads, [&](int e) {
        ElementResult& res = elems[size_t(e)];
        std::uint64_t episode = std::uint64_t(base_episode + e);
        try {
          Rng prof_rng(cfg.seed, episode, 0x300000);
          NoiseProfile prof = randomize_chaos_episode(ranges, prof_rng);
          Trajectory traj = generate_trajectory(sys, prof, t_len, cfg.seed, episode);
          if (traj.steps == 0) return;

          Tape tape;
          PolicyWeights tracked = watch_all(tape, weights);
          NdrConfig ncfg;
          ncfg.safeguards = sg;
          ncfg.q_base = q_base;
          ncfg.r_base = r_base;

          // consistent initialization: estimate drawn around the truth at the
          // initial covariance scale, matching the evaluation protocol
          Rng init_rng(cfg.seed, episode, 0x400000);
          NdrState ns;
          ns.fs.x_hat = Tensor::vector({traj.x0[0] + cfg.init_sigma * init_rng.normal(),
                                        traj.x0[1] + cfg.init_sigma * init_rng.normal(),
                                        traj.x0[2] + cfg.init_sigma * init_rng.normal()});
          ns.fs.p = scale(Tensor::eye(3), cfg.p0);
          ns.fs.q_diag = q_base;
          ns.fs.r_diag = r_base;
          ns.ps = initial_policy_state(arch);

          std::vector<Tensor> zs;
          zs.reserve(size_t(traj.steps));
          for (int k = 0; k < traj.steps; ++k)
            zs.push_back(Tensor::vector(
                {traj.measurements[size_t(k) * 2], traj.measurements[size_t(k) * 2 + 1]}));

          PolicyAdapter adapter{&tracked, &arch, nullptr};
          RolloutResult ro = rollout(model, adapter, ncfg, ns, zs, {}, sys.dt, true);
          if (ro.steps == 0) return;

          std::vector<Tensor> truths, ys, y_hats;
          for (int k = 0; k < ro.steps; ++k) {
            truths.push_back(Tensor::vector({traj.states[size_t(k) * 3],
                                             traj.states[size_t(k) * 3 + 1],
                                             traj.states[size_t(k) * 3 + 2]}));
            ys.push_back(ro.diags[size_t(k)].y);
            y_hats.push_back(ro.diags[size_t(k)].y_hat);
          }
          Tensor loss = chaos_loss(ro.x_hats, truths, ys, y_hats, cfg.lambda_aux);
          tape.backward(loss);

          res.grads = collect_grads(tape, tracked);
          res.loss = loss.value();
          double track = 0.0;
          for (size_t k = 0; k < truths.size(); ++k)
            track += sqnorm(sub(truths[k], ro.x_hats[k].detached())).value();
          res.track = track;
          res.aux = (res.loss - track) / (cfg.lambda_aux != 0.0 ? cfg.lambda_aux : 1.0);
          res.masked = false;
        } catch (const Error&) {
          res.masked = true;
        }
      });

      BatchOutcome out = reduce_elements(elems, weights);
      EpochLog lg;
      lg.epoch = epoch;
      lg.t = t_len;
      lg.lr = lr;
      lg.masked = cfg.batch_size - out.valid;
      if (out.valid == 0) {
        ++nan_streak;
        if (nan_streak >= cfg.nan_streak_limit)
          fail(Err::AbortedOnNanStreak,
               "training aborted after " + std::to_string(nan_streak) + " fully masked batches");
        result.log.push_back(lg);
        continue;
      }
      nan_streak = 0;
      lg.grad_norm = clip_global_norm(out.grads, cfg.grad_clip);
      adam_step(weights, out.grads, adam, lr);
      lg.mean_loss = out.mean_loss;
      lg.track_loss = out.track;
      lg.aux_loss = out.aux;
      result.log.push_back(lg);
    }
    maybe_checkpoint(cfg, arch, weights, epoch);
  }
  result.weights = weights;
  return result;
}

UavFilterInit default_uav_filter_init() {
  UavFilterInit init;
  init.p0_diag = {1e-1, 1e-1, 1e-1, 1.0, 1.0, 1.0, 1e-1, 1e-1, 1e-1, 1e-1,
                  1e-1, 1e-1, 1e-1, 1e-4, 1e-4, 1e-4, 1e-3, 1e-3, 1e-3};
  init.q_diag = {1e-2, 1e-2, 1e-2, 1e-1, 1e-1, 1e-1, 1e-2, 1e-2, 1e-2, 1e-1,
                 1e-1, 1e-1, 1e-1, 1e-5, 1e-5, 1e-5, 1e-5, 1e-5, 1e-5};
  init.r_diag = std::vector<double>(6, 5e-2);
  return init;
}

TrainResult train_uav(const PolicyArch& arch, const TrainConfig& cfg,
                      const std::vector<FlightLog>& logs, const DomainRandomization& dr,
                      const QdroneParams& params) {
  if (logs.empty()) fail(Err::InvalidArg, "train_uav: no flight logs");
  SystemModel model = make_uav_model(UavFormulation::Kinematic, params);
  PolicyWeights weights = init_weights(arch, cfg.seed);
  AdamState adam = init_adam_state(weights);
  TrainResult result;

  UavFilterInit finit = default_uav_filter_init();
  Tensor q_base = Tensor::vector(Buf(finit.q_diag.begin(), finit.q_diag.end()));
  Tensor r_base = Tensor::vector(Buf(finit.r_diag.begin(), finit.r_diag.end()));
  Safeguards sg;

  std::vector<int> log_steps;
  for (const auto& l : logs) log_steps.push_back(l.steps);

  long long episode_counter = 0;
  int nan_streak = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    int t_len = seq_len_at(cfg, epoch);
    double lr = lr_at(cfg, epoch);
    for (int batch = 0; batch < cfg.batches_per_epoch; ++batch) {
      std::vector<ElementResult> elems(size_t(cfg.batch_size));
      long long base_episode = episode_counter;
      episode_counter += cfg.batch_size;

      parallel_over(cfg.batch_size, cfg.threads, [&](int e) {
        ElementResult& res = elems[size_t(e)];
        std::uint64_t episode = std::uint64_t(base_episode + e);
        try {
          Rng rng(cfg.seed, episode, 0x600000);
          WindowPick win = sample_window(log_steps, t_len, rng);
          const FlightLog& log = logs[size_t(win.log_index)];

          DegradedStreams streams = degrade_uav_signals(
              std::span<const double>(log.pose).subspan(size_t(win.start) * 6, size_t(t_len) * 6),
              std::span<const double>(log.imu).subspan(size_t(win.start) * 6, size_t(t_len) * 6),
              t_len, log.dt, rng, dr);

          Tape tape;
          PolicyWeights tracked = watch_all(tape, weights);
          NdrConfig ncfg;
          ncfg.safeguards = sg;
          ncfg.q_base = q_base;
          ncfg.r_base = r_base;

          // seed from the window's first ground-truth pose
          const double* truth0 = &log.truth[size_t(win.start) * 19];
          Buf x0(truth0, truth0 + 19);
          for (int i = 3; i < 6; ++i) x0[size_t(i)] = 0.0;    // velocity
          for (int i = 10; i < 19; ++i) x0[size_t(i)] = 0.0;  // rates and biases
          NdrState ns;
          ns.fs.x_hat = Tensor::vector(std::move(x0));
          ns.fs.p = diag_matrix(Tensor::vector(Buf(finit.p0_diag.begin(), finit.p0_diag.end())));
          ns.fs.q_diag = q_base;
          ns.fs.r_diag = r_base;
          ns.ps = initial_policy_state(arch);

          std::vector<Tensor> zs, us;
          for (int k = 0; k < t_len; ++k) {
            zs.push_back(Tensor::vector(Buf(&streams.z[size_t(k) * 6], &streams.z[size_t(k) * 6] + 6)));
            us.push_back(Tensor::vector(Buf(&streams.u[size_t(k) * 6], &streams.u[size_t(k) * 6] + 6)));
          }

          PolicyAdapter adapter{&tracked, &arch, nullptr};
          RolloutResult ro = rollout(model, adapter, ncfg, ns, zs, us, log.dt, true);
          if (ro.steps == 0) return;

          std::vector<Tensor> pos, pos_truth, quats, quat_truth, ys, y_hats;
          for (int k = 0; k < ro.steps; ++k) {
            const double* tr = &log.truth[size_t(win.start + k) * 19];
            pos.push_back(slice(ro.x_hats[size_t(k)], 0, 3));
            pos_truth.push_back(Tensor::vector({tr[0], tr[1], tr[2]}));
            Tensor q = slice(ro.x_hats[size_t(k)], 6, 4);
            quats.push_back(mul(q, pow_const(sqnorm(q), -0.5)));
            quat_truth.push_back(Tensor::vector({tr[6], tr[7], tr[8], tr[9]}));
            ys.push_back(ro.diags[size_t(k)].y);
            y_hats.push_back(ro.diags[size_t(k)].y_hat);
          }
          Tensor loss = uav_loss(pos, pos_truth, quats, quat_truth, ys, y_hats, cfg.lambda_att,
                                 cfg.lambda_aux, cfg.huber_delta);
          tape.backward(loss);
          res.grads = collect_grads(tape, tracked);
          res.loss = loss.value();
          res.masked = false;
        } catch (const Error&) {
          res.masked = true;
        }
      });

      BatchOutcome out = reduce_elements(elems, weights);
      EpochLog lg;
      lg.epoch = epoch;
      lg.t = t_len;
      lg.lr = lr;
      lg.masked = cfg.batch_size - out.valid;
      if (out.valid == 0) {
        ++nan_streak;
        if (nan_streak >= cfg.nan_streak_limit)
          fail(Err::AbortedOnNanStreak,
               "training aborted after " + std::to_string(nan_streak) + " fully masked batches");
        result.log.push_back(lg);
        continue;
      }
      nan_streak = 0;
      lg.grad_norm = clip_global_norm(out.grads, cfg.grad_clip);
      adam_step(weights, out.grads, adam, lr);
      lg.mean_loss = out.mean_loss;
      result.log.push_back(lg);
    }
    maybe_checkpoint(cfg, arch, weights, epoch);
  }
  result.weights = weights;
  return result;
}

}  // namespace ndr
