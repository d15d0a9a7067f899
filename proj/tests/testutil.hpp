#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "dcbdl/rng.hpp"
#include "dcbdl/tensor.hpp"

namespace testutil {

inline dcbdl::Tensor<double> random_tensor(dcbdl::CounterRng& rng,
                                           std::vector<std::int64_t> shape, double scale = 1.0) {
  auto t = dcbdl::Tensor<double>::zeros(std::move(shape));
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.normal() * scale;
  return t;
}

// Central finite difference of a scalar-valued function w.r.t. element `idx`
// of `x`, with the spec's step h = 1e-3.
inline double central_diff(std::function<double(const dcbdl::Tensor<double>&)> f,
                           dcbdl::Tensor<double> x, std::int64_t idx, double h = 1e-3) {
  const double orig = x[idx];
  x[idx] = orig + h;
  const double fp = f(x);
  x[idx] = orig - h;
  const double fm = f(x);
  x[idx] = orig;
  return (fp - fm) / (2.0 * h);
}

// |analytic - numeric| <= tol * max(1, |analytic|)
inline bool grad_close(double analytic, double numeric, double tol = 1e-4) {
  return std::abs(analytic - numeric) <= tol * std::max(1.0, std::abs(analytic));
}

}  // namespace testutil
