#pragma once

#include <cmath>
#include <vector>

#include "core/rng.hpp"
#include "core/tensor.hpp"

namespace ndrtest {

inline ndr::Tensor random_tensor(ndr::Shape shape, ndr::Rng& rng, double lo = -2.0, double hi = 2.0) {
  ndr::Buf b(size_t(ndr::shape_size(shape)));
  for (auto& x : b) x = rng.uniform(lo, hi);
  return ndr::Tensor(std::move(shape), std::move(b));
}

// Random well-conditioned SPD matrix A A^T + c I.
inline ndr::Tensor random_spd(int n, ndr::Rng& rng, double ridge = -1.0) {
  ndr::Buf a(size_t(n) * size_t(n));
  for (auto& x : a) x = rng.uniform(-1.0, 1.0);
  ndr::Buf s(size_t(n) * size_t(n), 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int k = 0; k < n; ++k) acc += a[size_t(i) * size_t(n) + size_t(k)] * a[size_t(j) * size_t(n) + size_t(k)];
      s[size_t(i) * size_t(n) + size_t(j)] = acc;
    }
  double c = ridge > 0.0 ? ridge : double(n);
  for (int i = 0; i < n; ++i) s[size_t(i) * size_t(n) + size_t(i)] += c;
  return ndr::Tensor({n, n}, std::move(s));
}

inline double max_abs_diff(const ndr::Tensor& a, const ndr::Tensor& b) {
  double m = 0.0;
  auto ad = a.data();
  auto bd = b.data();
  for (size_t i = 0; i < ad.size(); ++i) m = std::max(m, std::fabs(ad[i] - bd[i]));
  return m;
}

}  // namespace ndrtest
