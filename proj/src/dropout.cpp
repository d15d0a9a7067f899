#include "dcbdl/dropout.hpp"

#include <cmath>

#include "dcbdl/ops.hpp"

namespace dcbdl {

void RegularizerConfig::validate() const {
  if (!(prior_length_scale > 0) || !(tau > 0) || dataset_size <= 0)
    throw ContractViolation("regularizer config fields must be strictly positive");
}

double entropy(double p) {
  if (p < 0.0 || p > 1.0) throw DomainError("entropy: p must be in [0,1]");
  if (p == 0.0 || p == 1.0) return 0.0;
  return -p * std::log(p) - (1.0 - p) * std::log(1.0 - p);
}

namespace {

template <class T>
T softplus(T x) {
  return x > T(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

template <class T>
T sigmoid_stable(T x) {
  return x >= T(0) ? T(1) / (T(1) + std::exp(-x)) : T(1) - T(1) / (T(1) + std::exp(x));
}

}  // namespace

template <class T>
Tensor<T> make_uniform_noise(CounterRng& rng, std::vector<std::int64_t> shape) {
  auto u = Tensor<T>::zeros(std::move(shape));
  for (std::int64_t i = 0; i < u.numel(); ++i)
    u[i] = static_cast<T>(rng.uniform_clamped(kNoiseEps));
  return u;
}

template <class T>
Var concrete_mask(Tape<T>& t, Var p_logit, const Tensor<T>& u, T temperature) {
  const auto& lv = t.value(p_logit);
  if (lv.numel() != 1) throw ContractViolation("concrete_mask: p_logit must be a scalar");
  if (!(temperature > T(0))) throw ContractViolation("concrete_mask: temperature must be positive");
  for (std::int64_t i = 0; i < u.numel(); ++i)
    if (!(u[i] > T(0) && u[i] < T(1)))
      throw DomainError("concrete_mask: noise must lie strictly inside (0,1), flat index " +
                        std::to_string(i));
  const T L = lv[0];
  Tensor<T> mask;
  mask.shape = u.shape;
  mask.data.resize(u.data.size());
  for (std::int64_t i = 0; i < u.numel(); ++i) {
    const T arg = (L + std::log(u[i]) - std::log1p(-u[i])) / temperature;
    mask[i] = T(1) - sigmoid_stable(arg);
  }
  const bool rg = t.requires_grad(p_logit);
  return t.emit(std::move(mask), rg,
                [p_logit, temperature, out_id = static_cast<std::int32_t>(t.size())](Tape<T>& tp) {
                  const auto& g = tp.grad(Var{out_id});
                  const auto& y = tp.value(Var{out_id});
                  T acc = T(0);
                  // d mask / d p_logit = -sigmoid'(arg)/temp, and sigmoid(arg) = 1 - mask
                  for (std::int64_t i = 0; i < g.numel(); ++i) {
                    const T sig = T(1) - y[i];
                    acc += g[i] * (-(sig * (T(1) - sig)) / temperature);
                  }
                  tp.grad_accum(p_logit)[0] += acc;
                },
                "concrete_mask");
}

template <class T>
Var apply_concrete_dropout(Tape<T>& t, Var activations, Var p_logit, const Tensor<T>& u,
                           T temperature) {
  Var mask = concrete_mask(t, p_logit, u, temperature);
  Var p = ops::sigmoid(t, p_logit);
  Var keep = ops::add_const(t, ops::neg(t, p), T(1));  // 1 - p
  Var rescale = ops::reciprocal(t, keep);
  return ops::mul_scalar(t, ops::mul_bcast(t, activations, mask), rescale);
}

template <class T>
Var bernoulli_entropy_from_logit(Tape<T>& t, Var p_logit) {
  const auto& lv = t.value(p_logit);
  if (lv.numel() != 1)
    throw ContractViolation("bernoulli_entropy_from_logit: p_logit must be a scalar");
  const T x = lv[0];
  const T p = sigmoid_stable(x);
  // H(sigmoid(x)) = p*softplus(-x) + (1-p)*softplus(x)
  const T h = p * softplus(-x) + (T(1) - p) * softplus(x);
  const bool rg = t.requires_grad(p_logit);
  return t.emit(Tensor<T>::scalar(h), rg,
                [p_logit, x, p, out_id = static_cast<std::int32_t>(t.size())](Tape<T>& tp) {
                  // dH/dx = -x * p (1-p)
                  tp.grad_accum(p_logit)[0] += tp.grad(Var{out_id})[0] * (-x * p * (T(1) - p));
                },
                "bernoulli_entropy_from_logit");
}

template <class T>
Var kl_regularizer(Tape<T>& t, std::span<const Var> layer_weights, std::span<const Var> p_logits,
                   std::span<const std::int64_t> layer_widths, const RegularizerConfig& cfg) {
  cfg.validate();
  if (layer_weights.size() != p_logits.size() || p_logits.size() != layer_widths.size())
    throw ContractViolation("kl_regularizer: one dropout state per regularized layer required");
  const double nt = static_cast<double>(cfg.dataset_size) * cfg.tau;
  const double l2 = cfg.prior_length_scale * cfg.prior_length_scale;
  Var total = t.constant(Tensor<T>::scalar(T(0)));
  for (std::size_t l = 0; l < layer_weights.size(); ++l) {
    Var p = ops::sigmoid(t, p_logits[l]);
    Var one_minus_p = ops::add_const(t, ops::neg(t, p), T(1));
    Var w2 = ops::sumsq(t, layer_weights[l]);
    Var weight_term = ops::mul_const(t, ops::mul(t, w2, one_minus_p), static_cast<T>(l2 / (2.0 * nt)));
    Var ent = bernoulli_entropy_from_logit(t, p_logits[l]);
    Var ent_term = ops::mul_const(t, ent, static_cast<T>(-static_cast<double>(layer_widths[l]) / nt));
    total = ops::add(t, total, ops::add(t, weight_term, ent_term));
  }
  return total;
}

#define DCBDL_INSTANTIATE_DROPOUT(T)                                                       \
  template Tensor<T> make_uniform_noise<T>(CounterRng&, std::vector<std::int64_t>);        \
  template Var concrete_mask<T>(Tape<T>&, Var, const Tensor<T>&, T);                       \
  template Var apply_concrete_dropout<T>(Tape<T>&, Var, Var, const Tensor<T>&, T);         \
  template Var bernoulli_entropy_from_logit<T>(Tape<T>&, Var);                             \
  template Var kl_regularizer<T>(Tape<T>&, std::span<const Var>, std::span<const Var>,     \
                                 std::span<const std::int64_t>, const RegularizerConfig&);

DCBDL_INSTANTIATE_DROPOUT(float)
DCBDL_INSTANTIATE_DROPOUT(double)

template struct DropoutLayerState<float>;
template struct DropoutLayerState<double>;

}  // namespace dcbdl
