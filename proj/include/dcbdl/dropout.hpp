#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dcbdl/rng.hpp"
#include "dcbdl/tape.hpp"

namespace dcbdl {

// Learnable dropout layer: p = sigmoid(p_logit) is the drop probability,
// relaxed to a continuous mask during training.
template <class T>
struct DropoutLayerState {
  T p_logit;
  T temperature = T(0.1);
  std::int64_t width = 0;  // number of gated channels

  double p() const {
    const double x = static_cast<double>(p_logit);
    return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : 1.0 - 1.0 / (1.0 + std::exp(x));
  }
};

inline double logit(double p) { return std::log(p) - std::log(1.0 - p); }

struct RegularizerConfig {
  double prior_length_scale = 1.0;
  double tau = 1e-5;
  std::int64_t dataset_size = 1;

  void validate() const;
};

// Bernoulli entropy H(p) = -p log p - (1-p) log(1-p); limit value 0 at the
// endpoints, domain error outside [0,1].
double entropy(double p);

constexpr double kNoiseEps = 1e-7;

// Uniform noise in [eps, 1-eps] for mask sampling.
template <class T>
Tensor<T> make_uniform_noise(CounterRng& rng, std::vector<std::int64_t> shape);

// Relaxed Bernoulli keep-mask in (0,1), differentiable w.r.t. p_logit:
//   mask = 1 - sigmoid((p_logit + log u - log(1-u)) / temperature)
// (log p - log(1-p) equals p_logit exactly for p = sigmoid(p_logit)).
template <class T>
Var concrete_mask(Tape<T>& t, Var p_logit, const Tensor<T>& u, T temperature);

// Gates activations with a concrete mask and rescales retained values by
// 1/(1-p). Mask is shared across the batch dimension.
template <class T>
Var apply_concrete_dropout(Tape<T>& t, Var activations, Var p_logit, const Tensor<T>& u,
                           T temperature);

// H(sigmoid(x)) computed in a saturation-safe form.
template <class T>
Var bernoulli_entropy_from_logit(Tape<T>& t, Var p_logit);

// Sum over layers of  l^2 (1-p_l) / (2 N tau) * ||M_l||^2  -  K_l H(p_l) / (N tau),
// differentiable w.r.t. both weights and dropout logits. Biases are excluded
// from ||M_l||^2.
template <class T>
Var kl_regularizer(Tape<T>& t, std::span<const Var> layer_weights,
                   std::span<const Var> p_logits, std::span<const std::int64_t> layer_widths,
                   const RegularizerConfig& cfg);

}  // namespace dcbdl
