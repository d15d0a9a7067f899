#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dcbdl/tape.hpp"

namespace dcbdl {

enum class ModelTag { gaussian, dc_gaussian, dc_lognormal };

std::string model_tag_name(ModelTag tag);
ModelTag parse_model_tag(const std::string& s);

// ---------------------------------------------------------------------------
// Training losses (tape ops). All average over D = pixel count of y, except
// mse_loss which follows the 1/(2*batch) convention. The location channel is
// the predicted value for Gaussian heads and the log-scale mean for the
// lognormal head; s parameterizes the variance as sigma^2 = exp(s).
// ---------------------------------------------------------------------------

// (1/(2*batch)) * sum of squared differences; batch = leading extent.
template <class T>
Var mse_loss(Tape<T>& t, Var prediction, const Tensor<T>& target);

// (1/2D) * sum_i [ exp(-s_i) (y_i - loc_i)^2 + s_i ]
template <class T>
Var gaussian_nll(Tape<T>& t, Var loc, Var s, const Tensor<T>& y);

// -(1/D) [ sum_{y>thr} ( log p_i - 1/2 exp(-s_i)(y_i-loc_i)^2 - s_i/2 )
//          + sum_{y<=thr} log(1-p_i) ],  p = sigmoid(phi), stable log-sigmoid.
template <class T>
Var dc_gaussian_nll(Tape<T>& t, Var loc, Var s, Var phi, const Tensor<T>& y, T rain_threshold);

// Same hurdle with (log y_i - loc_i)^2 on wet pixels. The parameter-free
// -log y density term is omitted here (training); predictive_nll includes it.
template <class T>
Var dc_lognormal_nll(Tape<T>& t, Var loc, Var s, Var phi, const Tensor<T>& y, T rain_threshold);

// ---------------------------------------------------------------------------
// Monte Carlo predictive moments. Pass values are stored in double; the
// estimators are compared against brute-force mixture samplers in tests.
// ---------------------------------------------------------------------------

struct McPass {
  Tensor<double> loc;  // y-hat, or mu-hat on log scale for dc_lognormal
  Tensor<double> s;    // log sigma^2
  Tensor<double> phi;  // rain logit; empty for plain gaussian
};

struct McPassSet {
  ModelTag tag = ModelTag::gaussian;
  std::vector<McPass> passes;

  std::int64_t count() const { return static_cast<std::int64_t>(passes.size()); }
  std::int64_t pixels() const { return passes.empty() ? 0 : passes.front().loc.numel(); }
  void validate() const;
};

struct MomentGrids {
  Tensor<double> mean;       // E[Y]
  Tensor<double> var;        // Var[Y], clamped at 0
  Tensor<double> rain_prob;  // mean sigmoid(phi); ones for plain gaussian
};

MomentGrids mc_moments_gaussian(const McPassSet& passes);
MomentGrids mc_moments_dc_gaussian(const McPassSet& passes);
MomentGrids mc_moments_dc_lognormal(const McPassSet& passes);
MomentGrids mc_moments(const McPassSet& passes);

// sigma^2 = log(1 + Var/E^2), mu = log E - sigma^2/2. Returns (mu, sigma).
std::pair<double, double> lognormal_moment_match(double mean, double var);

// ---------------------------------------------------------------------------
// Predictive distributions and CDFs
// ---------------------------------------------------------------------------

enum class CdfMode { moment_matched, mc_mixture };

// Per-pixel summary. loc/scale are the matched parameters: (m, sqrt(v)) of
// the rainy-conditional Gaussian for dc_gaussian, (mu, sigma) of the
// rainy-conditional lognormal for dc_lognormal, (E, sqrt(Var)) for gaussian.
struct PredictiveDistribution {
  double mean = 0;
  double var = 0;
  double rain_prob = 1;
  double loc = 0;
  double scale = 0;
  ModelTag tag = ModelTag::gaussian;
  CdfMode mode = CdfMode::moment_matched;
};

double normal_cdf(double z);

// CDF of the predictive posterior at y. mc_mixture mode averages the exact
// per-pass hurdle CDFs and requires `passes`; pixel selects the pixel within
// the pass grids.
double predictive_cdf(const PredictiveDistribution& dist, const McPassSet* passes,
                      std::int64_t pixel, double y);

// Probability integral transform for calibration. Observations at the dry
// atom (y <= dry_threshold for hurdle models) use the randomized PIT
// u = F(dry-) + v * (1 - p), which stays uniform under perfect calibration;
// v is a uniform(0,1) draw supplied by the caller.
double predictive_pit(const PredictiveDistribution& dist, const McPassSet* passes,
                      std::int64_t pixel, double y, double dry_threshold, double v);

// Mean negative log likelihood of obs under the MC-mixture predictive
// distribution, all constants included (evaluation-time "full NLL").
double predictive_nll(const McPassSet& passes, std::span<const double> obs,
                      double rain_threshold);

}  // namespace dcbdl
