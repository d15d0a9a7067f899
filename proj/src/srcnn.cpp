#include "dcbdl/srcnn.hpp"

#include <cmath>

#include "dcbdl/ops.hpp"
#include "dcbdl/rng.hpp"

namespace dcbdl {

void NetworkConfig::validate() const {
  if (kernel_sizes.size() != filters.size() + 1)
    throw ContractViolation("network config: need len(kernel_sizes) == len(filters) + 1");
  for (auto k : kernel_sizes)
    if (k <= 0 || k % 2 == 0)
      throw ContractViolation("network config: kernel sizes must be positive odd integers");
  for (auto f : filters)
    if (f <= 0) throw ContractViolation("network config: filter counts must be positive");
  if (in_channels <= 0) throw ContractViolation("network config: in_channels must be positive");
}

template <class T>
NetworkWeights<T> init_weights(const NetworkConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  NetworkWeights<T> w;
  CounterRng root(seed);
  for (std::int64_t l = 0; l < cfg.layer_count(); ++l) {
    const std::int64_t cin = cfg.layer_in_channels(l);
    const std::int64_t cout = cfg.layer_out_channels(l);
    const std::int64_t k = cfg.kernel_sizes[static_cast<std::size_t>(l)];
    const double scale = 1.0 / std::sqrt(static_cast<double>(cin * k * k));
    auto rng = root.stream(static_cast<std::uint64_t>(l));
    auto ker = Tensor<T>::zeros({cout, cin, k, k});
    for (std::int64_t i = 0; i < ker.numel(); ++i)
      ker[i] = static_cast<T>((2.0 * rng.uniform() - 1.0) * scale);
    w.kernels.push_back(std::move(ker));
    w.biases.push_back(Tensor<T>::zeros({cout}));
  }
  for (std::int64_t l = 0; l < cfg.hidden_count(); ++l) {
    DropoutLayerState<T> d;
    d.p_logit = static_cast<T>(logit(kInitialDropoutP));
    d.width = cfg.filters[static_cast<std::size_t>(l)];
    w.dropout.push_back(d);
  }
  return w;
}

template <class T>
WeightVars<T> push_weights(Tape<T>& t, const NetworkWeights<T>& w, bool trainable) {
  WeightVars<T> wv;
  for (const auto& k : w.kernels) wv.kernels.push_back(t.leaf(k, trainable));
  for (const auto& b : w.biases) wv.biases.push_back(t.leaf(b, trainable));
  for (const auto& d : w.dropout)
    wv.p_logits.push_back(t.leaf(Tensor<T>::scalar(d.p_logit), trainable));
  return wv;
}

template <class T>
HeadVars srcnn_forward(Tape<T>& t, const Tensor<T>& input, const NetworkWeights<T>& w,
                       const WeightVars<T>& wv, const NetworkConfig& cfg,
                       const std::vector<Tensor<T>>* noise) {
  cfg.validate();
  if (input.shape.size() != 4 || input.shape[1] != cfg.in_channels)
    throw ContractViolation("srcnn_forward: input must be [batch, " +
                            std::to_string(cfg.in_channels) + ", H, W], got " +
                            shape_str(input.shape));
  if (static_cast<std::int64_t>(w.kernels.size()) != cfg.layer_count() ||
      static_cast<std::int64_t>(w.dropout.size()) != cfg.hidden_count())
    throw ContractViolation("srcnn_forward: weights do not match config");
  if (noise != nullptr && static_cast<std::int64_t>(noise->size()) != cfg.hidden_count())
    throw ContractViolation("srcnn_forward: need one noise tensor per hidden layer");

  const std::int64_t batch = input.shape[0], h = input.shape[2], wd = input.shape[3];

  Var x = t.constant(input);
  Var a = x;
  for (std::int64_t l = 0; l < cfg.layer_count(); ++l) {
    a = ops::conv2d(t, a, wv.kernels[static_cast<std::size_t>(l)],
                    wv.biases[static_cast<std::size_t>(l)]);
    if (l < cfg.layer_count() - 1) {
      a = ops::relu(t, a);
      if (noise != nullptr) {
        const auto& u = (*noise)[static_cast<std::size_t>(l)];
        if (u.shape != std::vector<std::int64_t>{cfg.filters[static_cast<std::size_t>(l)], h, wd})
          throw ContractViolation("srcnn_forward: noise tensor shape mismatch at layer " +
                                  std::to_string(l));
        a = apply_concrete_dropout(t, a, wv.p_logits[static_cast<std::size_t>(l)], u,
                                   w.dropout[static_cast<std::size_t>(l)].temperature);
      }
    }
  }

  // residual skip: precipitation input channel added to the location output
  Tensor<T> precip = Tensor<T>::zeros({batch, 1, h, wd});
  const std::int64_t hw = h * wd;
  for (std::int64_t b = 0; b < batch; ++b)
    for (std::int64_t i = 0; i < hw; ++i)
      precip[b * hw + i] = input[(b * cfg.in_channels + 0) * hw + i];

  HeadVars heads;
  heads.loc = ops::add_tensor(t, ops::slice_channel(t, a, 0), precip);
  heads.s = ops::slice_channel(t, a, 1);
  if (cfg.tag != ModelTag::gaussian) {
    heads.phi = ops::slice_channel(t, a, 2);
    heads.has_phi = true;
  }
  return heads;
}

#define DCBDL_INSTANTIATE_SRCNN(T)                                                       \
  template NetworkWeights<T> init_weights<T>(const NetworkConfig&, std::uint64_t);       \
  template WeightVars<T> push_weights<T>(Tape<T>&, const NetworkWeights<T>&, bool);      \
  template HeadVars srcnn_forward<T>(Tape<T>&, const Tensor<T>&, const NetworkWeights<T>&, \
                                     const WeightVars<T>&, const NetworkConfig&,         \
                                     const std::vector<Tensor<T>>*);

DCBDL_INSTANTIATE_SRCNN(float)
DCBDL_INSTANTIATE_SRCNN(double)

}  // namespace dcbdl
