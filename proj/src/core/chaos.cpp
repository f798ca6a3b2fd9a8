#include "chaos.hpp"

#include <cmath>
#include <cstdio>

namespace ndr {

namespace {

constexpr double kEscapeBound = 1e9;

// Per-purpose channel bases keep noise streams disjoint within a step.
constexpr std::uint64_t kChanInit = 1u << 16;
constexpr std::uint64_t kChanProcess = 0;
constexpr std::uint64_t kChanOutlier = 1u << 17;
constexpr std::uint64_t kChanMeas = (1u << 17) + 1;

bool finite3(const std::array<double, 3>& s) {
  return std::isfinite(s[0]) && std::isfinite(s[1]) && std::isfinite(s[2]) &&
         std::fabs(s[0]) < kEscapeBound && std::fabs(s[1]) < kEscapeBound &&
         std::fabs(s[2]) < kEscapeBound;
}

}  // namespace

int state_dim(const ChaosParams&) { return 3; }
int meas_dim(const ChaosParams&) { return 2; }

std::array<double, 3> deriv(const ChaosParams& p, const std::array<double, 3>& s) {
  double x = s[0], y = s[1], z = s[2];
  if (p.system == ChaosSystem::Lorenz) {
    return {p.sigma_l * (y - x), x * (p.rho_l - z) - y, x * y - p.beta_l * z};
  }
  return {-y - z, x + p.a_r * y, p.b_r + z * (x - p.c_r)};
}

std::array<double, 3> rk4_step(const ChaosParams& p, const std::array<double, 3>& s, double dt) {
  auto k1 = deriv(p, s);
  std::array<double, 3> t{};
  for (int i = 0; i < 3; ++i) t[i] = s[i] + 0.5 * dt * k1[i];
  auto k2 = deriv(p, t);
  for (int i = 0; i < 3; ++i) t[i] = s[i] + 0.5 * dt * k2[i];
  auto k3 = deriv(p, t);
  for (int i = 0; i < 3; ++i) t[i] = s[i] + dt * k3[i];
  auto k4 = deriv(p, t);
  std::array<double, 3> out{};
  for (int i = 0; i < 3; ++i) out[i] = s[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  for (double v : out)
    if (!std::isfinite(v)) fail(Err::NonFinite, "rk4_step left the finite range");
  return out;
}

ProcessNoiseDraw sample_process_noise(const NoiseProfile& profile, int k, double dt, Rng& rng) {
  ProcessNoiseDraw out;
  for (int i = 0; i < 3; ++i) {
    const Harmonic& h = profile.harmonics.size() > size_t(i) ? profile.harmonics[size_t(i)] : Harmonic{};
    double sn = std::sin(h.omega * double(k) * dt + h.phase);
    double q = profile.q_base * (1.0 + h.amplitude * sn * sn);
    out.q_diag[i] = q;
    out.noise[i] = std::sqrt(q) * rng.normal();
  }
  return out;
}

MeasurementNoiseDraw sample_measurement_noise(const NoiseProfile& profile, Rng& rng) {
  MeasurementNoiseDraw out;
  out.outlier = rng.bernoulli(profile.outlier_prob);
  double scale = out.outlier ? profile.outlier_scale : 1.0;
  out.noise.resize(profile.r_base.size());
  for (size_t i = 0; i < out.noise.size(); ++i)
    out.noise[i] = std::sqrt(scale * profile.r_base[i]) * rng.normal();
  return out;
}

std::vector<double> observe(const ChaosParams& p, const std::array<double, 3>& s) {
  if (p.system == ChaosSystem::Lorenz) return {s[0], s[2]};
  double x = s[0], y = s[1];
  if (x == 0.0 && y == 0.0)
    fail(Err::DegenerateObservation, "range-bearing observation at the origin");
  return {std::sqrt(x * x + y * y), std::atan2(y, x)};
}

std::array<double, 3> draw_initial_state(const ChaosParams& p, Rng& rng) {
  if (p.system == ChaosSystem::Lorenz)
    return {rng.uniform(-15.0, 15.0), rng.uniform(-15.0, 15.0), rng.uniform(10.0, 40.0)};
  return {rng.uniform(-10.0, 10.0), rng.uniform(-10.0, 10.0), rng.uniform(0.0, 10.0)};
}

Trajectory generate_trajectory(const ChaosParams& p, const NoiseProfile& profile, int T,
                               std::uint64_t seed, std::uint64_t episode) {
  Trajectory out;
  out.n_z = meas_dim(p);
  {
    Rng init_rng(seed, episode, kChanInit);
    out.x0 = draw_initial_state(p, init_rng);
  }
  out.states.reserve(size_t(T) * 3);
  out.measurements.reserve(size_t(T) * size_t(out.n_z));
  out.true_q_diag.reserve(size_t(T) * 3);

  std::array<double, 3> s = out.x0;
  for (int k = 1; k <= T; ++k) {
    std::array<double, 3> next{};
    try {
      next = rk4_step(p, s, p.dt);
    } catch (const Error&) {
      out.diverged = true;
      out.diverged_at = k;
      break;
    }
    std::array<double, 3> q_diag{profile.q_base, profile.q_base, profile.q_base};
    if (profile.q_base > 0.0) {
      for (int c = 0; c < 3; ++c) {
        Rng ch(seed, episode, std::uint64_t(k), kChanProcess + std::uint64_t(c));
        const Harmonic& h = profile.harmonics.size() > size_t(c) ? profile.harmonics[size_t(c)] : Harmonic{};
        double sn = std::sin(h.omega * double(k) * p.dt + h.phase);
        double q = profile.q_base * (1.0 + h.amplitude * sn * sn);
        q_diag[size_t(c)] = q;
        next[size_t(c)] += std::sqrt(q) * ch.normal();
      }
    }
    if (!finite3(next)) {
      out.diverged = true;
      out.diverged_at = k;
      break;
    }
    s = next;

    std::vector<double> z;
    try {
      z = observe(p, s);
    } catch (const Error&) {
      out.diverged = true;
      out.diverged_at = k;
      break;
    }
    {
      Rng bern(seed, episode, std::uint64_t(k), kChanOutlier);
      bool outlier = bern.bernoulli(profile.outlier_prob);
      if (outlier) ++out.outlier_count;
      double scal = outlier ? profile.outlier_scale : 1.0;
      for (int c = 0; c < out.n_z; ++c) {
        Rng ch(seed, episode, std::uint64_t(k), kChanMeas + std::uint64_t(c));
        double r = profile.r_base.size() > size_t(c) ? profile.r_base[size_t(c)] : 1.0;
        z[size_t(c)] += std::sqrt(scal * r) * ch.normal();
      }
    }
    if (p.system == ChaosSystem::Rossler) z[1] = wrap_angle(z[1]);

    out.states.insert(out.states.end(), s.begin(), s.end());
    out.measurements.insert(out.measurements.end(), z.begin(), z.end());
    out.true_q_diag.insert(out.true_q_diag.end(), q_diag.begin(), q_diag.end());
    out.steps = k;
  }
  return out;
}

std::string trajectory_csv(const Trajectory& t) {
  std::string s = "k";
  for (int i = 1; i <= 3; ++i) s += ",x" + std::to_string(i);
  for (int i = 1; i <= t.n_z; ++i) s += ",z" + std::to_string(i);
  for (int i = 1; i <= 3; ++i) s += ",q" + std::to_string(i);
  s += "\n";
  char buf[64];
  for (int k = 0; k < t.steps; ++k) {
    s += std::to_string(k + 1);
    auto put = [&](double v) {
      std::snprintf(buf, sizeof(buf), ",%.17g", v);
      s += buf;
    };
    for (int i = 0; i < 3; ++i) put(t.states[size_t(k) * 3 + size_t(i)]);
    for (int i = 0; i < t.n_z; ++i) put(t.measurements[size_t(k) * size_t(t.n_z) + size_t(i)]);
    for (int i = 0; i < 3; ++i) put(t.true_q_diag[size_t(k) * 3 + size_t(i)]);
    s += "\n";
  }
  return s;
}

}  // namespace ndr
