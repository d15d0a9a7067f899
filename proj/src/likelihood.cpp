#include "dcbdl/likelihood.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>

namespace dcbdl {

std::string model_tag_name(ModelTag tag) {
  switch (tag) {
    case ModelTag::gaussian: return "gaussian";
    case ModelTag::dc_gaussian: return "dc-gaussian";
    case ModelTag::dc_lognormal: return "dc-lognormal";
  }
  return "?";
}

ModelTag parse_model_tag(const std::string& s) {
  if (s == "gaussian") return ModelTag::gaussian;
  if (s == "dc-gaussian" || s == "dc_gaussian") return ModelTag::dc_gaussian;
  if (s == "dc-lognormal" || s == "dc_lognormal") return ModelTag::dc_lognormal;
  throw ContractViolation("unknown model tag: " + s);
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

template <class T>
void check_loss_inputs(const Tensor<T>& loc, const Tensor<T>& s, const Tensor<T>& y,
                       const char* what) {
  if (!loc.same_shape(y) || !s.same_shape(y))
    throw ContractViolation(std::string(what) + ": head/target shape mismatch, y " +
                            shape_str(y.shape) + " loc " + shape_str(loc.shape));
  y.require_finite(what);
}

}  // namespace

template <class T>
Var mse_loss(Tape<T>& t, Var prediction, const Tensor<T>& target) {
  const auto& pred = t.value(prediction);
  if (!pred.same_shape(target))
    throw ContractViolation("mse_loss: shape mismatch " + shape_str(pred.shape) + " vs " +
                            shape_str(target.shape));
  target.require_finite("mse_loss");
  const std::int64_t batch = pred.shape.empty() ? 1 : pred.shape[0];
  double acc = 0.0;
  for (std::int64_t i = 0; i < pred.numel(); ++i) {
    const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
    acc += d * d;
  }
  const T value = static_cast<T>(acc / (2.0 * static_cast<double>(batch)));
  const bool rg = t.requires_grad(prediction);
  return t.emit(Tensor<T>::scalar(value), rg,
                [prediction, target, batch, out_id = static_cast<std::int32_t>(t.size())](Tape<T>& tp) {
                  const T g = tp.grad(Var{out_id})[0];
                  const auto& pred_ = tp.value(prediction);
                  auto& gp = tp.grad_accum(prediction);
                  const T inv = T(1) / static_cast<T>(batch);
                  for (std::int64_t i = 0; i < pred_.numel(); ++i)
                    gp[i] += g * (pred_[i] - target[i]) * inv;
                },
                "mse_loss");
}

template <class T>
Var gaussian_nll(Tape<T>& t, Var loc, Var s, const Tensor<T>& y) {
  const auto& lv = t.value(loc);
  const auto& sv = t.value(s);
  check_loss_inputs(lv, sv, y, "gaussian_nll");
  const std::int64_t n = y.numel();
  double acc = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(y[i]) - static_cast<double>(lv[i]);
    acc += std::exp(-static_cast<double>(sv[i])) * d * d + static_cast<double>(sv[i]);
  }
  const T value = static_cast<T>(acc / (2.0 * static_cast<double>(n)));
  const bool rg = t.requires_grad(loc) || t.requires_grad(s);
  return t.emit(Tensor<T>::scalar(value), rg,
                [loc, s, y, n, out_id = static_cast<std::int32_t>(t.size())](Tape<T>& tp) {
                  const T g = tp.grad(Var{out_id})[0];
                  const auto& lv_ = tp.value(loc);
                  const auto& sv_ = tp.value(s);
                  const T invd = T(1) / static_cast<T>(n);
                  if (tp.requires_grad(loc)) {
                    auto& gl = tp.grad_accum(loc);
                    for (std::int64_t i = 0; i < n; ++i) {
                      const T d = y[i] - lv_[i];
                      gl[i] += g * (-std::exp(-sv_[i]) * d) * invd;
                    }
                  }
                  if (tp.requires_grad(s)) {
                    auto& gs = tp.grad_accum(s);
                    for (std::int64_t i = 0; i < n; ++i) {
                      const T d = y[i] - lv_[i];
                      gs[i] += g * (T(1) - std::exp(-sv_[i]) * d * d) * (invd / T(2));
                    }
                  }
                },
                "gaussian_nll");
}

namespace {

// Shared hurdle loss. On wet pixels the residual is (target_i - loc_i), with
// target = y for the Gaussian branch and target = log y for the lognormal
// branch (computed by the caller).
template <class T>
Var hurdle_nll(Tape<T>& t, Var loc, Var s, Var phi, const Tensor<T>& y,
               const Tensor<T>& wet_target, const std::vector<char>& wet, const char* what) {
  const auto& lv = t.value(loc);
  const auto& sv = t.value(s);
  const auto& pv = t.value(phi);
  check_loss_inputs(lv, sv, y, what);
  if (!pv.same_shape(y)) throw ContractViolation(std::string(what) + ": phi shape mismatch");
  const std::int64_t n = y.numel();
  double acc = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    if (wet[static_cast<std::size_t>(i)]) {
      const double d = static_cast<double>(wet_target[i]) - static_cast<double>(lv[i]);
      acc += static_cast<double>(softplus(-pv[i])) +
             0.5 * std::exp(-static_cast<double>(sv[i])) * d * d +
             0.5 * static_cast<double>(sv[i]);
    } else {
      acc += static_cast<double>(softplus(pv[i]));
    }
  }
  const T value = static_cast<T>(acc / static_cast<double>(n));
  const bool rg = t.requires_grad(loc) || t.requires_grad(s) || t.requires_grad(phi);
  return t.emit(
      Tensor<T>::scalar(value), rg,
      [loc, s, phi, wet_target, wet, n, out_id = static_cast<std::int32_t>(t.size())](Tape<T>& tp) {
        const T g = tp.grad(Var{out_id})[0];
        const auto& lv_ = tp.value(loc);
        const auto& sv_ = tp.value(s);
        const auto& pv_ = tp.value(phi);
        const T invd = T(1) / static_cast<T>(n);
        const bool rgl = tp.requires_grad(loc), rgs = tp.requires_grad(s),
                   rgp = tp.requires_grad(phi);
        auto* gl = rgl ? &tp.grad_accum(loc) : nullptr;
        auto* gs = rgs ? &tp.grad_accum(s) : nullptr;
        auto* gp = rgp ? &tp.grad_accum(phi) : nullptr;
        for (std::int64_t i = 0; i < n; ++i) {
          if (wet[static_cast<std::size_t>(i)]) {
            const T d = wet_target[i] - lv_[i];
            const T es = std::exp(-sv_[i]);
            if (rgl) (*gl)[i] += g * (-es * d) * invd;
            if (rgs) (*gs)[i] += g * (T(1) - es * d * d) * (invd / T(2));
            if (rgp) (*gp)[i] += g * (-(T(1) - sigmoid_stable(pv_[i]))) * invd;
          } else {
            if (rgp) (*gp)[i] += g * sigmoid_stable(pv_[i]) * invd;
          }
        }
      },
      what);
}

}  // namespace

template <class T>
Var dc_gaussian_nll(Tape<T>& t, Var loc, Var s, Var phi, const Tensor<T>& y, T rain_threshold) {
  const std::int64_t n = y.numel();
  std::vector<char> wet(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) wet[static_cast<std::size_t>(i)] = y[i] > rain_threshold;
  return hurdle_nll(t, loc, s, phi, y, y, wet, "dc_gaussian_nll");
}

template <class T>
Var dc_lognormal_nll(Tape<T>& t, Var loc, Var s, Var phi, const Tensor<T>& y, T rain_threshold) {
  const std::int64_t n = y.numel();
  std::vector<char> wet(static_cast<std::size_t>(n));
  Tensor<T> log_y = Tensor<T>::zeros(y.shape);
  for (std::int64_t i = 0; i < n; ++i) {
    const bool w = y[i] > rain_threshold;
    wet[static_cast<std::size_t>(i)] = w;
    if (w) {
      if (!(y[i] > T(0)))
        throw DomainError("dc_lognormal_nll: rainy pixel with non-positive value at flat index " +
                          std::to_string(i));
      log_y[i] = std::log(y[i]);
    }
  }
  return hurdle_nll(t, loc, s, phi, y, log_y, wet, "dc_lognormal_nll");
}

// ---------------------------------------------------------------------------
// Moments
// ---------------------------------------------------------------------------

void McPassSet::validate() const {
  if (passes.empty()) throw ContractViolation("McPassSet: pass count T must be >= 1");
  const auto& shape0 = passes.front().loc.shape;
  const bool needs_phi = tag != ModelTag::gaussian;
  for (const auto& p : passes) {
    if (p.loc.shape != shape0 || p.s.shape != shape0)
      throw ContractViolation("McPassSet: passes must share one shape");
    if (needs_phi && p.phi.shape != shape0)
      throw ContractViolation("McPassSet: hurdle passes need a phi grid");
  }
}

namespace {

double clamp_variance(double e2, double var, std::int64_t pixel) {
  if (var >= 0) return var;
  if (var < -1e-6 * std::max(e2, 1e-300))
    std::cerr << "warning: negative predictive variance " << var << " at pixel " << pixel
              << ", clamping to 0\n";
  return 0.0;
}

}  // namespace

MomentGrids mc_moments_gaussian(const McPassSet& ps) {
  ps.validate();
  if (ps.tag != ModelTag::gaussian)
    throw ContractViolation("mc_moments_gaussian: model tag mismatch");
  const std::int64_t n = ps.pixels();
  const double invt = 1.0 / static_cast<double>(ps.count());
  MomentGrids out{Tensor<double>::zeros(ps.passes.front().loc.shape),
                  Tensor<double>::zeros(ps.passes.front().loc.shape),
                  Tensor<double>::full(ps.passes.front().loc.shape, 1.0)};
  for (std::int64_t i = 0; i < n; ++i) {
    double sum_loc = 0, sum_loc2 = 0, sum_var = 0;
    for (const auto& p : ps.passes) {
      sum_loc += p.loc[i];
      sum_loc2 += p.loc[i] * p.loc[i];
      sum_var += std::exp(p.s[i]);
    }
    const double e = sum_loc * invt;
    const double e2 = (sum_loc2 + sum_var) * invt;  // aleatoric + raw second moment
    out.mean[i] = e;
    out.var[i] = clamp_variance(e2, e2 - e * e, i);
  }
  return out;
}

MomentGrids mc_moments_dc_gaussian(const McPassSet& ps) {
  ps.validate();
  if (ps.tag != ModelTag::dc_gaussian)
    throw ContractViolation("mc_moments_dc_gaussian: model tag mismatch");
  const std::int64_t n = ps.pixels();
  const double invt = 1.0 / static_cast<double>(ps.count());
  MomentGrids out{Tensor<double>::zeros(ps.passes.front().loc.shape),
                  Tensor<double>::zeros(ps.passes.front().loc.shape),
                  Tensor<double>::zeros(ps.passes.front().loc.shape)};
  for (std::int64_t i = 0; i < n; ++i) {
    double e = 0, e2 = 0, pbar = 0;
    for (const auto& p : ps.passes) {
      const double prob = sigmoid_stable(p.phi[i]);
      e += prob * p.loc[i];
      e2 += prob * (p.loc[i] * p.loc[i] + std::exp(p.s[i]));
      pbar += prob;
    }
    e *= invt;
    e2 *= invt;
    out.mean[i] = e;
    out.var[i] = clamp_variance(e2, e2 - e * e, i);
    out.rain_prob[i] = pbar * invt;
  }
  return out;
}

MomentGrids mc_moments_dc_lognormal(const McPassSet& ps) {
  ps.validate();
  if (ps.tag != ModelTag::dc_lognormal)
    throw ContractViolation("mc_moments_dc_lognormal: model tag mismatch");
  const std::int64_t n = ps.pixels();
  const double invt = 1.0 / static_cast<double>(ps.count());
  MomentGrids out{Tensor<double>::zeros(ps.passes.front().loc.shape),
                  Tensor<double>::zeros(ps.passes.front().loc.shape),
                  Tensor<double>::zeros(ps.passes.front().loc.shape)};
  for (std::int64_t i = 0; i < n; ++i) {
    double e = 0, e2 = 0, pbar = 0;
    for (const auto& p : ps.passes) {
      const double prob = sigmoid_stable(p.phi[i]);
      const double var_t = std::exp(p.s[i]);
      const double m1 = std::exp(p.loc[i] + 0.5 * var_t);
      const double m2 = std::exp(2.0 * p.loc[i] + 2.0 * var_t);
      if (!std::isfinite(m1) || !std::isfinite(m2))
        throw NumericError("mc_moments_dc_lognormal: exp overflow at pixel " + std::to_string(i));
      e += prob * m1;
      e2 += prob * m2;
      pbar += prob;
    }
    e *= invt;
    e2 *= invt;
    out.mean[i] = e;
    out.var[i] = clamp_variance(e2, e2 - e * e, i);
    out.rain_prob[i] = pbar * invt;
  }
  return out;
}

MomentGrids mc_moments(const McPassSet& ps) {
  switch (ps.tag) {
    case ModelTag::gaussian: return mc_moments_gaussian(ps);
    case ModelTag::dc_gaussian: return mc_moments_dc_gaussian(ps);
    case ModelTag::dc_lognormal: return mc_moments_dc_lognormal(ps);
  }
  throw ContractViolation("mc_moments: bad tag");
}

std::pair<double, double> lognormal_moment_match(double mean, double var) {
  if (!(mean > 0)) throw DomainError("lognormal_moment_match: mean must be positive");
  if (var < 0) throw DomainError("lognormal_moment_match: variance must be non-negative");
  const double sigma2 = std::log1p(var / (mean * mean));
  const double mu = std::log(mean) - 0.5 * sigma2;
  return {mu, std::sqrt(sigma2)};
}

// ---------------------------------------------------------------------------
// CDFs
// ---------------------------------------------------------------------------

double normal_cdf(double z) { return 0.5 * std::erfc(-z / 1.4142135623730950488); }

namespace {

constexpr double kDryCollapse = 1e-6;

double matched_cdf(const PredictiveDistribution& d, double y) {
  switch (d.tag) {
    case ModelTag::gaussian: {
      if (d.var == 0.0) {
        if (y == d.mean) return 0.5;
        throw NumericError("predictive_cdf: zero variance with y != mean");
      }
      return normal_cdf((y - d.mean) / std::sqrt(d.var));
    }
    case ModelTag::dc_gaussian: {
      if (y < 0) throw ContractViolation("predictive_cdf: y must be >= 0 for hurdle models");
      if (d.rain_prob < kDryCollapse) return 1.0;
      const double cont =
          d.scale > 0 ? normal_cdf((y - d.loc) / d.scale) : (y >= d.loc ? 1.0 : 0.0);
      return (1.0 - d.rain_prob) + d.rain_prob * cont;
    }
    case ModelTag::dc_lognormal: {
      if (y < 0) throw ContractViolation("predictive_cdf: y must be >= 0 for hurdle models");
      if (d.rain_prob < kDryCollapse) return 1.0;
      if (y == 0) return 1.0 - d.rain_prob;
      const double cont = d.scale > 0 ? normal_cdf((std::log(y) - d.loc) / d.scale)
                                      : (std::log(y) >= d.loc ? 1.0 : 0.0);
      return (1.0 - d.rain_prob) + d.rain_prob * cont;
    }
  }
  throw ContractViolation("predictive_cdf: bad tag");
}

double mixture_cdf(ModelTag tag, const McPassSet& ps, std::int64_t i, double y) {
  const double invt = 1.0 / static_cast<double>(ps.count());
  double acc = 0.0;
  switch (tag) {
    case ModelTag::gaussian:
      for (const auto& p : ps.passes) acc += normal_cdf((y - p.loc[i]) / std::exp(0.5 * p.s[i]));
      return acc * invt;
    case ModelTag::dc_gaussian:
      if (y < 0) throw ContractViolation("predictive_cdf: y must be >= 0 for hurdle models");
      for (const auto& p : ps.passes) {
        const double prob = sigmoid_stable(p.phi[i]);
        acc += (1.0 - prob) + prob * normal_cdf((y - p.loc[i]) / std::exp(0.5 * p.s[i]));
      }
      return acc * invt;
    case ModelTag::dc_lognormal: {
      if (y < 0) throw ContractViolation("predictive_cdf: y must be >= 0 for hurdle models");
      for (const auto& p : ps.passes) {
        const double prob = sigmoid_stable(p.phi[i]);
        const double cont =
            y == 0 ? 0.0 : normal_cdf((std::log(y) - p.loc[i]) / std::exp(0.5 * p.s[i]));
        acc += (1.0 - prob) + prob * cont;
      }
      return acc * invt;
    }
  }
  throw ContractViolation("predictive_cdf: bad tag");
}

// Continuous probability mass strictly below the dry atom (taken at 0).
double mass_below_atom(const PredictiveDistribution& d, const McPassSet* ps, std::int64_t i) {
  if (d.tag != ModelTag::dc_gaussian) return 0.0;  // lognormal has no mass below 0
  if (d.mode == CdfMode::mc_mixture) {
    const double invt = 1.0 / static_cast<double>(ps->count());
    double acc = 0.0;
    for (const auto& p : ps->passes)
      acc += sigmoid_stable(p.phi[i]) * normal_cdf((0.0 - p.loc[i]) / std::exp(0.5 * p.s[i]));
    return acc * invt;
  }
  if (d.rain_prob < kDryCollapse || d.scale <= 0) return 0.0;
  return d.rain_prob * normal_cdf((0.0 - d.loc) / d.scale);
}

}  // namespace

double predictive_cdf(const PredictiveDistribution& d, const McPassSet* passes, std::int64_t pixel,
                      double y) {
  if (d.mode == CdfMode::mc_mixture) {
    if (passes == nullptr)
      throw ContractViolation("predictive_cdf: mc_mixture mode needs the pass set");
    passes->validate();
    return mixture_cdf(d.tag, *passes, pixel, y);
  }
  return matched_cdf(d, y);
}

double predictive_pit(const PredictiveDistribution& d, const McPassSet* passes, std::int64_t pixel,
                      double y, double dry_threshold, double v) {
  if (d.tag != ModelTag::gaussian && y <= dry_threshold) {
    double pbar = d.rain_prob;
    if (d.mode == CdfMode::mc_mixture) {
      if (passes == nullptr)
        throw ContractViolation("predictive_pit: mc_mixture mode needs the pass set");
      double acc = 0.0;
      for (const auto& p : passes->passes) acc += sigmoid_stable(p.phi[pixel]);
      pbar = acc / static_cast<double>(passes->count());
    }
    return mass_below_atom(d, passes, pixel) + v * (1.0 - pbar);
  }
  return predictive_cdf(d, passes, pixel, y);
}

// ---------------------------------------------------------------------------
// Full NLL under the MC mixture
// ---------------------------------------------------------------------------

namespace {

constexpr double kLogSqrt2Pi = 0.91893853320467274178;  // log sqrt(2 pi)

double logsumexp(std::span<const double> xs) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : xs) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double acc = 0.0;
  for (double x : xs) acc += std::exp(x - m);
  return m + std::log(acc);
}

}  // namespace

double predictive_nll(const McPassSet& ps, std::span<const double> obs, double rain_threshold) {
  ps.validate();
  if (static_cast<std::int64_t>(obs.size()) != ps.pixels())
    throw ContractViolation("predictive_nll: observation count mismatch");
  const double logt = std::log(static_cast<double>(ps.count()));
  std::vector<double> terms(static_cast<std::size_t>(ps.count()));
  double acc = 0.0;
  for (std::int64_t i = 0; i < ps.pixels(); ++i) {
    const double y = obs[static_cast<std::size_t>(i)];
    if (ps.tag == ModelTag::gaussian) {
      for (std::int64_t t = 0; t < ps.count(); ++t) {
        const auto& p = ps.passes[static_cast<std::size_t>(t)];
        const double d = y - p.loc[i];
        terms[static_cast<std::size_t>(t)] =
            -kLogSqrt2Pi - 0.5 * p.s[i] - 0.5 * std::exp(-p.s[i]) * d * d;
      }
    } else if (y <= rain_threshold) {
      for (std::int64_t t = 0; t < ps.count(); ++t)
        terms[static_cast<std::size_t>(t)] =
            -softplus(ps.passes[static_cast<std::size_t>(t)].phi[i]);  // log(1 - p_t)
    } else {
      const bool lognormal = ps.tag == ModelTag::dc_lognormal;
      if (lognormal && !(y > 0))
        throw DomainError("predictive_nll: rainy pixel with non-positive value");
      const double target = lognormal ? std::log(y) : y;
      for (std::int64_t t = 0; t < ps.count(); ++t) {
        const auto& p = ps.passes[static_cast<std::size_t>(t)];
        const double d = target - p.loc[i];
        double logf = -kLogSqrt2Pi - 0.5 * p.s[i] - 0.5 * std::exp(-p.s[i]) * d * d;
        if (lognormal) logf -= std::log(y);
        terms[static_cast<std::size_t>(t)] = -softplus(-p.phi[i]) + logf;  // log p_t + log f_t
      }
    }
    acc += -(logsumexp(terms) - logt);
  }
  return acc / static_cast<double>(ps.pixels());
}

#define DCBDL_INSTANTIATE_LIKELIHOOD(T)                                                 \
  template Var mse_loss<T>(Tape<T>&, Var, const Tensor<T>&);                            \
  template Var gaussian_nll<T>(Tape<T>&, Var, Var, const Tensor<T>&);                   \
  template Var dc_gaussian_nll<T>(Tape<T>&, Var, Var, Var, const Tensor<T>&, T);        \
  template Var dc_lognormal_nll<T>(Tape<T>&, Var, Var, Var, const Tensor<T>&, T);

DCBDL_INSTANTIATE_LIKELIHOOD(float)
DCBDL_INSTANTIATE_LIKELIHOOD(double)

}  // namespace dcbdl
