#include "dcbdl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include "dcbdl/error.hpp"

namespace dcbdl::metrics {

SeriesStats bias_rmse(std::span<const double> pred, std::span<const double> obs) {
  if (pred.size() != obs.size() || pred.empty())
    throw ContractViolation("bias_rmse: series must be aligned and non-empty");
  double sum = 0.0, sumsq = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - obs[i];
    sum += d;
    sumsq += d * d;
  }
  const double n = static_cast<double>(pred.size());
  return SeriesStats{sum / n, std::sqrt(sumsq / n)};
}

double climdex_r20(std::span<const double> daily, std::int64_t days_per_year) {
  if (days_per_year <= 0) throw ContractViolation("climdex_r20: days_per_year must be positive");
  const std::int64_t years = static_cast<std::int64_t>(daily.size()) / days_per_year;
  if (years == 0) throw ContractViolation("climdex_r20: series shorter than one year");
  double total = 0.0;
  for (std::int64_t yr = 0; yr < years; ++yr) {
    std::int64_t count = 0;
    for (std::int64_t d = 0; d < days_per_year; ++d)
      if (daily[static_cast<std::size_t>(yr * days_per_year + d)] >= 20.0) ++count;
    total += static_cast<double>(count);
  }
  return total / static_cast<double>(years);
}

double climdex_sdii(std::span<const double> daily, std::int64_t days_per_year) {
  if (days_per_year <= 0) throw ContractViolation("climdex_sdii: days_per_year must be positive");
  const std::int64_t years = static_cast<std::int64_t>(daily.size()) / days_per_year;
  if (years == 0) throw ContractViolation("climdex_sdii: series shorter than one year");
  double total = 0.0;
  std::int64_t used = 0;
  for (std::int64_t yr = 0; yr < years; ++yr) {
    double wet_total = 0.0;
    std::int64_t wet_days = 0;
    for (std::int64_t d = 0; d < days_per_year; ++d) {
      const double v = daily[static_cast<std::size_t>(yr * days_per_year + d)];
      if (v >= 0.5) {
        wet_total += v;
        ++wet_days;
      }
    }
    if (wet_days == 0) {
      std::cerr << "warning: climdex_sdii skipping year " << yr << " with no wet days\n";
      continue;
    }
    total += wet_total / static_cast<double>(wet_days);
    ++used;
  }
  if (used == 0) throw DomainError("climdex_sdii: undefined index, no year has a wet day");
  return total / static_cast<double>(used);
}

std::vector<PrPoint> precision_recall(std::span<const double> score,
                                      std::span<const std::uint8_t> wet_label) {
  if (score.size() != wet_label.size() || score.empty())
    throw ContractViolation("precision_recall: series must be aligned and non-empty");
  std::int64_t positives = 0;
  for (auto l : wet_label) positives += l ? 1 : 0;
  if (positives == 0) throw DomainError("precision_recall: no positive labels");

  std::vector<std::size_t> order(score.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });

  std::vector<PrPoint> out;
  std::int64_t tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double thr = score[order[i]];
    // consume the whole tie group so each threshold yields one point
    while (i < order.size() && score[order[i]] == thr) {
      if (wet_label[order[i]]) ++tp; else ++fp;
      ++i;
    }
    out.push_back(PrPoint{thr, static_cast<double>(tp) / static_cast<double>(tp + fp),
                          static_cast<double>(tp) / static_cast<double>(positives)});
  }
  return out;
}

CalibrationReport calibration_from_pit(std::span<const double> pit, std::int64_t bins) {
  if (bins <= 0) throw ContractViolation("calibration: bin count must be positive");
  if (pit.empty()) throw ContractViolation("calibration: empty population");
  CalibrationReport rep;
  rep.bins = bins;
  rep.population = static_cast<std::int64_t>(pit.size());
  rep.c_values.assign(static_cast<std::size_t>(bins), 0.0);
  const double n = static_cast<double>(pit.size());
  double sq = 0.0;
  for (std::int64_t k = 1; k <= bins; ++k) {
    const double z = static_cast<double>(k) / static_cast<double>(bins);
    const double lo = 0.5 - z / 2.0, hi = 0.5 + z / 2.0;
    std::int64_t inside = 0;
    for (double u : pit)
      if (u > lo && u < hi) ++inside;
    const double c = static_cast<double>(inside) / n;
    rep.c_values[static_cast<std::size_t>(k - 1)] = c;
    sq += (c - z) * (c - z);
  }
  rep.rmse_cal = std::sqrt(sq / static_cast<double>(bins));
  return rep;
}

CalibrationReport calibration(std::span<const double> obs,
                              const std::function<double(std::size_t, double)>& pit,
                              std::int64_t bins, bool wet_only, double wet_threshold) {
  std::vector<double> us;
  us.reserve(obs.size());
  for (std::size_t i = 0; i < obs.size(); ++i) {
    if (wet_only && !(obs[i] >= wet_threshold)) continue;
    us.push_back(pit(i, obs[i]));
  }
  if (us.empty()) throw ContractViolation("calibration: empty population after filtering");
  return calibration_from_pit(us, bins);
}

}  // namespace dcbdl::metrics
