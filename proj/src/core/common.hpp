#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>

namespace ndr {

// Error codes shared with the C API (see include/ndrshkf.h).
enum class Err : int {
  Ok = 0,
  Config = 1,
  Shape = 2,
  NotPositiveDefinite = 3,
  NonFinite = 4,
  SingularInnovationCovariance = 5,
  DegenerateObservation = 6,
  GimbalLockProximity = 7,
  OffsetOutOfRange = 8,
  Diverged = 9,
  Io = 10,
  AbortedOnNanStreak = 11,
  AllRunsDiverged = 12,
  Runtime = 13,
  InvalidArg = 14,
  CheckFailed = 15,
  NonFiniteGradient = 16,
};

class Error : public std::runtime_error {
 public:
  Error(Err code, const std::string& msg) : std::runtime_error(msg), code_(code) {}
  Err code() const noexcept { return code_; }

 private:
  Err code_;
};

[[noreturn]] inline void fail(Err code, const std::string& msg) { throw Error(code, msg); }

inline bool all_finite(std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

constexpr double kPi = 3.14159265358979323846;
constexpr double kTwoPi = 2.0 * kPi;

// Wraps an angle into (-pi, pi].
inline double wrap_angle(double a) {
  double r = std::remainder(a, kTwoPi);
  if (r <= -kPi) r += kTwoPi;
  return r;
}

}  // namespace ndr
