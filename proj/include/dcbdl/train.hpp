#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "dcbdl/checkpoint.hpp"
#include "dcbdl/likelihood.hpp"
#include "dcbdl/pipeline.hpp"
#include "dcbdl/srcnn.hpp"

namespace dcbdl {

struct TrainingConfig {
  double learning_rate = 1e-4;
  std::int64_t batch_size = 10;
  std::int64_t iterations = 10000;
  double tau = 1e-5;
  double length_scale = 1.0;
  std::uint64_t seed = 7;
  std::int64_t dataset_size = 1;   // days * height * width of the source grids
  double rain_threshold = 0.5;     // raw mm
  double precip_scale = 1.0;       // patches are already scaled by this
  std::int64_t log_interval = 100;

  void validate() const;
};

struct TrainRecord {
  std::int64_t iteration;
  double nll;
  double kl;
  std::vector<double> dropout_p;  // one per hidden layer
  double seconds;
};

struct TrainingLog {
  std::vector<TrainRecord> records;
  // CSV: iteration,nll,kl,p_layer1,p_layer2,seconds
  void write_csv(const std::string& path) const;
};

struct TrainResult {
  NetworkWeights<real> weights;
  TrainingLog log;
  // Set when a non-finite loss or gradient aborted training; weights then
  // hold the last finite state.
  std::optional<std::int64_t> diverged_at;
};

// Minimizes model NLL + KL with Adam. Each iteration samples batch_size
// patches and one concrete mask per hidden layer (shared across the batch).
TrainResult train(const TrainingConfig& tc, const NetworkConfig& nc, const PatchSet& patches);

// T stochastic forward passes with fresh masks, pass t seeded from
// (seed, t). Head outputs are returned denormalized to mm scale.
McPassSet mc_predict(const NetworkWeights<real>& weights, const NetworkConfig& nc,
                     const Tensor<real>& input, std::int64_t passes, std::uint64_t seed,
                     double precip_scale);

struct PredictiveGrids {
  ModelTag tag = ModelTag::gaussian;
  CdfMode mode = CdfMode::moment_matched;
  Tensor<double> mean, var, rain_prob, loc, scale;

  PredictiveDistribution at(std::int64_t pixel) const;
};

// Moment estimation plus matched-parameter recovery for every pixel.
PredictiveGrids predict_distribution(const McPassSet& passes, CdfMode mode);

// Binary pass-set container ("MCP1") used by the CLI's mixture CDF mode.
void write_passes(const std::string& path, const McPassSet& passes);
McPassSet read_passes(const std::string& path);

}  // namespace dcbdl
