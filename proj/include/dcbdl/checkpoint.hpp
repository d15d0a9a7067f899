#pragma once

#include <string>

#include "dcbdl/srcnn.hpp"

namespace dcbdl {

// Normalization constants a checkpoint carries so prediction is standalone.
struct CheckpointExtras {
  double elev_mean = 0.0;
  double elev_std = 1.0;
  double precip_scale = 1.0;  // 0.01 for Gaussian-family training, 1 for lognormal
};

template <class T>
struct Checkpoint {
  NetworkConfig config;
  NetworkWeights<T> weights;
  CheckpointExtras extras;
};

// Binary container, little-endian throughout; layout documented in the README.
template <class T>
void save_checkpoint(const std::string& path, const NetworkConfig& cfg,
                     const NetworkWeights<T>& weights, const CheckpointExtras& extras);

template <class T>
Checkpoint<T> load_checkpoint(const std::string& path);

}  // namespace dcbdl
