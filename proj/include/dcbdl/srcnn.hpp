#pragma once

#include <cstdint>
#include <vector>

#include "dcbdl/dropout.hpp"
#include "dcbdl/likelihood.hpp"
#include "dcbdl/tape.hpp"

namespace dcbdl {

// Three-layer residual super-resolution network; the skip connection adds the
// precipitation input channel to the location output.
struct NetworkConfig {
  std::vector<std::int64_t> kernel_sizes{9, 3, 5};
  std::vector<std::int64_t> filters{64, 64};  // hidden layers
  ModelTag tag = ModelTag::gaussian;
  std::int64_t in_channels = 2;  // precipitation + elevation

  std::int64_t layer_count() const { return static_cast<std::int64_t>(kernel_sizes.size()); }
  std::int64_t hidden_count() const { return static_cast<std::int64_t>(filters.size()); }
  std::int64_t out_channels() const { return tag == ModelTag::gaussian ? 2 : 3; }
  std::int64_t layer_in_channels(std::int64_t layer) const {
    return layer == 0 ? in_channels : filters[static_cast<std::size_t>(layer - 1)];
  }
  std::int64_t layer_out_channels(std::int64_t layer) const {
    return layer == layer_count() - 1 ? out_channels() : filters[static_cast<std::size_t>(layer)];
  }
  void validate() const;
};

template <class T>
struct NetworkWeights {
  std::vector<Tensor<T>> kernels;  // [cout, cin, k, k] per layer
  std::vector<Tensor<T>> biases;   // [cout] per layer
  std::vector<DropoutLayerState<T>> dropout;  // one per hidden layer
};

constexpr double kInitialDropoutP = 0.1;

// Centered-uniform init with scale 1/sqrt(fan_in); dropout logits start at
// p = 0.1.
template <class T>
NetworkWeights<T> init_weights(const NetworkConfig& cfg, std::uint64_t seed);

template <class T>
struct WeightVars {
  std::vector<Var> kernels, biases, p_logits;
};

template <class T>
WeightVars<T> push_weights(Tape<T>& t, const NetworkWeights<T>& w, bool trainable);

struct HeadVars {
  Var loc, s, phi;
  bool has_phi = false;
};

// Forward pass. `noise` carries one uniform tensor [filters_l, H, W] per
// hidden layer; when absent the masks are replaced by their expectation,
// which cancels against the 1/(1-p) rescale (deterministic evaluation).
template <class T>
HeadVars srcnn_forward(Tape<T>& t, const Tensor<T>& input, const NetworkWeights<T>& w,
                       const WeightVars<T>& wv, const NetworkConfig& cfg,
                       const std::vector<Tensor<T>>* noise);

}  // namespace dcbdl
