#include "dcbdl/pipeline.hpp"

#include <cmath>

#include "dcbdl/error.hpp"
#include "dcbdl/rng.hpp"

namespace dcbdl {

Grid upscale_bilinear(const Grid& g, int factor) {
  if (factor < 2) throw ContractViolation("upscale_bilinear: factor must be >= 2");
  if (g.height % factor != 0 || g.width % factor != 0)
    throw ContractViolation("upscale_bilinear: grid dimensions must be divisible by the factor");
  Grid out = Grid::make(g.height / factor, g.width / factor, g.variable,
                        g.cell_size_km * static_cast<float>(factor));
  const double inv = 1.0 / (static_cast<double>(factor) * factor);
  for (std::int64_t cy = 0; cy < out.height; ++cy)
    for (std::int64_t cx = 0; cx < out.width; ++cx) {
      double acc = 0.0;
      for (std::int64_t dy = 0; dy < factor; ++dy)
        for (std::int64_t dx = 0; dx < factor; ++dx)
          acc += g.at(cy * factor + dy, cx * factor + dx);
      out.at(cy, cx) = static_cast<float>(acc * inv);
    }
  return out;
}

Grid refine_bilinear(const Grid& g, int factor) {
  if (factor < 2) throw ContractViolation("refine_bilinear: factor must be >= 2");
  Grid out = Grid::make(g.height * factor, g.width * factor, g.variable,
                        g.cell_size_km / static_cast<float>(factor));
  const double f = static_cast<double>(factor);
  for (std::int64_t y = 0; y < out.height; ++y) {
    const double cy = (static_cast<double>(y) + 0.5) / f - 0.5;
    const std::int64_t y0 = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor(cy)), 0,
                                                     g.height - 1);
    const std::int64_t y1 = std::min<std::int64_t>(y0 + 1, g.height - 1);
    const double wy = std::clamp(cy - static_cast<double>(y0), 0.0, 1.0);
    for (std::int64_t x = 0; x < out.width; ++x) {
      const double cx = (static_cast<double>(x) + 0.5) / f - 0.5;
      const std::int64_t x0 = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor(cx)),
                                                       0, g.width - 1);
      const std::int64_t x1 = std::min<std::int64_t>(x0 + 1, g.width - 1);
      const double wx = std::clamp(cx - static_cast<double>(x0), 0.0, 1.0);
      const double top = (1.0 - wx) * g.at(y0, x0) + wx * g.at(y0, x1);
      const double bot = (1.0 - wx) * g.at(y1, x0) + wx * g.at(y1, x1);
      out.at(y, x) = static_cast<float>((1.0 - wy) * top + wy * bot);
    }
  }
  return out;
}

ElevationStats elevation_stats(const Grid& elevation) {
  double mean = 0.0;
  for (float v : elevation.values) mean += v;
  mean /= static_cast<double>(elevation.cells());
  double var = 0.0;
  for (float v : elevation.values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(elevation.cells());
  return ElevationStats{mean, std::sqrt(var)};
}

Grid normalize_elevation(const Grid& elevation, const ElevationStats& stats) {
  if (!(stats.stddev > 0.0))
    throw DomainError("normalize_elevation: zero standard deviation");
  Grid out = elevation;
  for (auto& v : out.values)
    v = static_cast<float>((v - stats.mean) / stats.stddev);
  return out;
}

Grid denormalize_elevation(const Grid& normalized, const ElevationStats& stats) {
  if (!(stats.stddev > 0.0))
    throw DomainError("denormalize_elevation: zero standard deviation");
  Grid out = normalized;
  for (auto& v : out.values)
    v = static_cast<float>(v * stats.stddev + stats.mean);
  return out;
}

Grid scale_precip(const Grid& g, double scale) {
  if (!(scale > 0.0)) throw ContractViolation("scale_precip: scale must be positive");
  Grid out = g;
  for (auto& v : out.values) v = static_cast<float>(v * scale);
  return out;
}

void extract_patches(const std::vector<const Grid*>& input_channels, const Grid& label,
                     std::int64_t size, std::int64_t stride, PatchSet& out) {
  if (input_channels.empty()) throw ContractViolation("extract_patches: no input channels");
  const std::int64_t h = label.height, w = label.width;
  for (const auto* g : input_channels)
    if (g->height != h || g->width != w)
      throw ContractViolation("extract_patches: input and label grids must be aligned");
  if (size > h || size > w)
    throw ContractViolation("extract_patches: grid smaller than patch size");
  if (stride <= 0 || size <= 0) throw ContractViolation("extract_patches: bad size/stride");
  out.patch_size = size;
  out.stride = stride;
  const std::int64_t chans = static_cast<std::int64_t>(input_channels.size());
  for (std::int64_t oy = 0; oy + size <= h; oy += stride) {
    for (std::int64_t ox = 0; ox + size <= w; ox += stride) {
      auto in = Tensor<real>::zeros({chans, size, size});
      auto lab = Tensor<real>::zeros({size, size});
      for (std::int64_t c = 0; c < chans; ++c)
        for (std::int64_t y = 0; y < size; ++y)
          for (std::int64_t x = 0; x < size; ++x)
            in[(c * size + y) * size + x] =
                static_cast<real>(input_channels[static_cast<std::size_t>(c)]->at(oy + y, ox + x));
      for (std::int64_t y = 0; y < size; ++y)
        for (std::int64_t x = 0; x < size; ++x)
          lab[y * size + x] = static_cast<real>(label.at(oy + y, ox + x));
      out.inputs.push_back(std::move(in));
      out.labels.push_back(std::move(lab));
    }
  }
}

void SyntheticConfig::validate() const {
  if (days <= 0 || height <= 0 || width <= 0)
    throw ContractViolation("synthetic config: dims and days must be positive");
  if (!(rain_fraction > 0.0 && rain_fraction < 1.0))
    throw ContractViolation("synthetic config: rain fraction must be in (0,1)");
  if (!(log_sigma > 0.0)) throw ContractViolation("synthetic config: log_sigma must be positive");
  if (!(correlation_length > 0.0))
    throw ContractViolation("synthetic config: correlation length must be positive");
}

namespace {

double normal_cdf_local(double z) { return 0.5 * std::erfc(-z / 1.4142135623730950488); }

// Inverse standard normal CDF by bisection; plenty fast for one call per run.
double normal_quantile(double p) {
  double lo = -12.0, hi = 12.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (normal_cdf_local(mid) < p) lo = mid; else hi = mid;
  }
  return 0.5 * (lo + hi);
}

// Separable smoothing with per-position kernel renormalization (unit L2), so
// the output has exactly unit marginal variance when fed unit white noise.
struct Smoother {
  std::vector<double> w;
  std::int64_t radius;

  explicit Smoother(double sigma) {
    radius = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(3.0 * sigma)));
    w.resize(static_cast<std::size_t>(2 * radius + 1));
    for (std::int64_t k = -radius; k <= radius; ++k)
      w[static_cast<std::size_t>(k + radius)] =
          std::exp(-0.5 * static_cast<double>(k * k) / (sigma * sigma));
  }

  // rows then columns; unit-variance output for unit-variance independent input
  std::vector<double> smooth(const std::vector<double>& noise, std::int64_t h,
                             std::int64_t w_) const {
    std::vector<double> a(noise.size()), b(noise.size());
    // rows: h lines of length w, contiguous
    for (std::int64_t y = 0; y < h; ++y) {
      for (std::int64_t x = 0; x < w_; ++x) {
        double acc = 0.0, norm = 0.0;
        for (std::int64_t k = -radius; k <= radius; ++k) {
          const std::int64_t j = x + k;
          if (j < 0 || j >= w_) continue;
          const double wk = w[static_cast<std::size_t>(k + radius)];
          acc += wk * noise[static_cast<std::size_t>(y * w_ + j)];
          norm += wk * wk;
        }
        a[static_cast<std::size_t>(y * w_ + x)] = acc / std::sqrt(norm);
      }
    }
    // columns
    for (std::int64_t x = 0; x < w_; ++x) {
      for (std::int64_t y = 0; y < h; ++y) {
        double acc = 0.0, norm = 0.0;
        for (std::int64_t k = -radius; k <= radius; ++k) {
          const std::int64_t j = y + k;
          if (j < 0 || j >= h) continue;
          const double wk = w[static_cast<std::size_t>(k + radius)];
          acc += wk * a[static_cast<std::size_t>(j * w_ + x)];
          norm += wk * wk;
        }
        b[static_cast<std::size_t>(y * w_ + x)] = acc / std::sqrt(norm);
      }
    }
    return b;
  }
};

std::vector<double> white_noise(CounterRng rng, std::int64_t n) {
  std::vector<double> out(static_cast<std::size_t>(n));
  for (auto& v : out) v = rng.normal();
  return out;
}

}  // namespace

SyntheticData generate_synthetic(const SyntheticConfig& cfg) {
  cfg.validate();
  const std::int64_t cells = cfg.height * cfg.width;
  CounterRng root(cfg.seed);
  const Smoother smoother(cfg.correlation_length);

  SyntheticData out;
  out.elevation = Grid::make(cfg.height, cfg.width, Grid::Variable::elevation_m);
  const auto elev_field = smoother.smooth(white_noise(root.stream(0), cells), cfg.height, cfg.width);
  for (std::int64_t i = 0; i < cells; ++i)
    out.elevation.values[static_cast<std::size_t>(i)] =
        static_cast<float>(800.0 + 300.0 * elev_field[static_cast<std::size_t>(i)]);

  const auto estats = elevation_stats(out.elevation);
  std::vector<double> elev_norm(static_cast<std::size_t>(cells));
  for (std::int64_t i = 0; i < cells; ++i)
    elev_norm[static_cast<std::size_t>(i)] =
        (out.elevation.values[static_cast<std::size_t>(i)] - estats.mean) / estats.stddev;

  const double occurrence_threshold = normal_quantile(1.0 - cfg.rain_fraction);

  out.precip_days.reserve(static_cast<std::size_t>(cfg.days));
  for (std::int64_t d = 0; d < cfg.days; ++d) {
    const auto g = smoother.smooth(
        white_noise(root.stream(static_cast<std::uint64_t>(2 * d + 1)), cells), cfg.height,
        cfg.width);
    const auto gi = smoother.smooth(
        white_noise(root.stream(static_cast<std::uint64_t>(2 * d + 2)), cells), cfg.height,
        cfg.width);
    Grid day = Grid::make(cfg.height, cfg.width, Grid::Variable::precip_mm_per_day);
    for (std::int64_t i = 0; i < cells; ++i) {
      if (g[static_cast<std::size_t>(i)] > occurrence_threshold) {
        const double log_intensity = cfg.log_mu + cfg.log_sigma * gi[static_cast<std::size_t>(i)] +
                                     cfg.elevation_coeff * elev_norm[static_cast<std::size_t>(i)];
        day.values[static_cast<std::size_t>(i)] = static_cast<float>(std::exp(log_intensity));
      }
    }
    out.precip_days.push_back(std::move(day));
  }
  return out;
}

}  // namespace dcbdl
