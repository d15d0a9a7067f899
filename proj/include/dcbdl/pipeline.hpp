#pragma once

#include <cstdint>
#include <vector>

#include "dcbdl/grid.hpp"
#include "dcbdl/tensor.hpp"

namespace dcbdl {

// Coarsen by an integer factor. Each coarse cell is the mean of its
// factor x factor block, so total precipitation mass is preserved; the coarse
// cell (i,j) covers fine rows [i*f, (i+1)*f) and columns [j*f, (j+1)*f).
Grid upscale_bilinear(const Grid& g, int factor);

// Inverse resampling direction: bilinear interpolation of a coarse grid back
// onto the fine lattice. Coarse cell centers sit at fine coordinates
// (i + 0.5) * f - 0.5; edges clamp.
Grid refine_bilinear(const Grid& g, int factor);

struct ElevationStats {
  double mean = 0.0;
  double stddev = 1.0;
};

ElevationStats elevation_stats(const Grid& elevation);

Grid normalize_elevation(const Grid& elevation, const ElevationStats& stats);
Grid denormalize_elevation(const Grid& normalized, const ElevationStats& stats);

// Gaussian-family pathway scales precipitation by 1/100; the lognormal
// pathway trains on raw mm (scale 1). Threshold comparisons stay in raw mm.
Grid scale_precip(const Grid& g, double scale);

struct PatchSet {
  // Each patch pairs an input stack [channels, ps, ps] with a label [ps, ps].
  std::vector<Tensor<real>> inputs;
  std::vector<Tensor<real>> labels;
  std::int64_t patch_size = 64;
  std::int64_t stride = 48;

  std::int64_t count() const { return static_cast<std::int64_t>(inputs.size()); }
};

// Row-major patch enumeration over one day's aligned grids;
// count = (floor((H-size)/stride)+1) * (floor((W-size)/stride)+1).
void extract_patches(const std::vector<const Grid*>& input_channels, const Grid& label,
                     std::int64_t size, std::int64_t stride, PatchSet& out);

struct SyntheticConfig {
  std::uint64_t seed = 1;
  std::int64_t days = 200;
  std::int64_t height = 64;
  std::int64_t width = 64;
  double correlation_length = 4.0;  // cells
  double rain_fraction = 0.3;
  double log_mu = 1.0;
  double log_sigma = 1.0;
  double elevation_coeff = 0.5;

  void validate() const;
};

struct SyntheticData {
  Grid elevation;
  std::vector<Grid> precip_days;
};

// Hurdle-lognormal field generator: a smoothed latent field decides
// occurrence against the analytic quantile of the target rain fraction; an
// independent smoothed field plus an elevation term sets log intensity.
// Deterministic per seed.
SyntheticData generate_synthetic(const SyntheticConfig& cfg);

}  // namespace dcbdl
