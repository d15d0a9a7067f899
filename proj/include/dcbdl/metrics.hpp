#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace dcbdl::metrics {

struct SeriesStats {
  double bias = 0.0;
  double rmse = 0.0;
};

// bias = mean(pred - obs); rmse = sqrt(mean((pred - obs)^2))
SeriesStats bias_rmse(std::span<const double> pred, std::span<const double> obs);

// Mean annual count of days >= 20 mm. The series is partitioned into
// consecutive full years of days_per_year; a trailing partial year is
// dropped.
double climdex_r20(std::span<const double> daily, std::int64_t days_per_year);

// Mean annual (total precip on wet days) / (wet-day count), wet = >= 0.5 mm.
// Years without a wet day are skipped with a warning; an all-dry series is an
// error.
double climdex_sdii(std::span<const double> daily, std::int64_t days_per_year);

struct PrPoint {
  double threshold;
  double precision;
  double recall;
};

// Precision/recall at descending score thresholds, points ordered by
// non-decreasing recall.
std::vector<PrPoint> precision_recall(std::span<const double> score,
                                      std::span<const std::uint8_t> wet_label);

struct CalibrationReport {
  std::int64_t bins = 100;
  std::vector<double> c_values;  // c(k/K) for k = 1..K
  double rmse_cal = 0.0;
  std::int64_t population = 0;
};

// c(z) = fraction of PIT values strictly inside (0.5 - z/2, 0.5 + z/2),
// z = k/K; RMSE_cal = sqrt(mean_k (c(k/K) - k/K)^2).
CalibrationReport calibration_from_pit(std::span<const double> pit, std::int64_t bins);

// Computes the PIT per observation via `pit(i, y_i)` and bins it. With
// wet_only, observations below wet_threshold are excluded first.
CalibrationReport calibration(std::span<const double> obs,
                              const std::function<double(std::size_t, double)>& pit,
                              std::int64_t bins, bool wet_only, double wet_threshold);

}  // namespace dcbdl::metrics
