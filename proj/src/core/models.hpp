#pragma once

#include "chaos.hpp"
#include "kalman.hpp"

namespace ndr {

// Filter-side models for the chaotic testbeds. f is an RK4 step built from
// tensor ops and jacobian_f is the exact chain-rule Jacobian of that map, so
// the whole recursion stays differentiable end to end.
SystemModel make_chaos_model(const ChaosParams& p);

}  // namespace ndr
