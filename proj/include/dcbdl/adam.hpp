#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "dcbdl/tensor.hpp"

namespace dcbdl {

template <class T>
struct NamedParam {
  std::string name;
  Tensor<T>* value = nullptr;
  const Tensor<T>* grad = nullptr;
};

// First/second moment accumulators, one pair per parameter, zero at step 0.
template <class T>
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::int64_t step = 0;
  std::vector<Tensor<T>> m, v;
};

// Bias-corrected Adam update, in place. Deterministic given inputs.
template <class T>
void adam_step(std::span<const NamedParam<T>> params, AdamState<T>& state, double learning_rate) {
  if (state.step == 0 && state.m.empty()) {
    for (const auto& p : params) {
      state.m.push_back(Tensor<T>::zeros(p.value->shape));
      state.v.push_back(Tensor<T>::zeros(p.value->shape));
    }
  }
  if (state.m.size() != params.size())
    throw ContractViolation("adam_step: state tracks " + std::to_string(state.m.size()) +
                            " parameters, got " + std::to_string(params.size()));
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    const auto& p = params[pi];
    if (!p.value->same_shape(*p.grad) || !p.value->same_shape(state.m[pi]))
      throw ContractViolation("adam_step: shape mismatch for parameter " + p.name);
    for (std::int64_t i = 0; i < p.grad->numel(); ++i)
      if (!std::isfinite(static_cast<double>((*p.grad)[i])))
        throw NumericError("adam_step: non-finite gradient in parameter " + p.name +
                           " at flat index " + std::to_string(i));
  }
  state.step += 1;
  const T c1 = static_cast<T>(1.0 - std::pow(state.beta1, static_cast<double>(state.step)));
  const T c2 = static_cast<T>(1.0 - std::pow(state.beta2, static_cast<double>(state.step)));
  const T b1 = static_cast<T>(state.beta1), b2 = static_cast<T>(state.beta2);
  const T lr = static_cast<T>(learning_rate), eps = static_cast<T>(state.epsilon);
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor<T>& value = *params[pi].value;
    const Tensor<T>& g = *params[pi].grad;
    Tensor<T>& m = state.m[pi];
    Tensor<T>& v = state.v[pi];
    const std::int64_t n = value.numel();
    for (std::int64_t i = 0; i < n; ++i) {
      m[i] = b1 * m[i] + (T(1) - b1) * g[i];
      v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
      const T mhat = m[i] / c1;
      const T vhat = v[i] / c2;
      value[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

}  // namespace dcbdl
