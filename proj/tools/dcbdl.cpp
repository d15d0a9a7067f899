// Batch command-line surface: generate / train / predict / evaluate.

#include <omp.h>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dcbdl/checkpoint.hpp"
#include "dcbdl/grid.hpp"
#include "dcbdl/likelihood.hpp"
#include "dcbdl/metrics.hpp"
#include "dcbdl/pipeline.hpp"
#include "dcbdl/rng.hpp"
#include "dcbdl/runconfig.hpp"
#include "dcbdl/train.hpp"

namespace fs = std::filesystem;
using namespace dcbdl;

namespace {

constexpr double kGaussianPrecipScale = 0.01;  // mm -> training units

std::string day_name(const char* prefix, std::int64_t day) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%05lld.dcg", prefix, static_cast<long long>(day));
  return buf;
}

std::string pass_name(std::int64_t day) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "passes_%05lld.mcp", static_cast<long long>(day));
  return buf;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

struct Dataset {
  Grid elevation;
  std::vector<Grid> days;
  RunConfig config;
};

Dataset load_dataset(const std::string& dir) {
  Dataset ds;
  const fs::path root(dir);
  if (!fs::exists(root / "manifest.txt")) throw IoError("missing manifest: " + (root / "manifest.txt").string());
  ds.config = fs::exists(root / "config.resolved.txt")
                  ? RunConfig::load((root / "config.resolved.txt").string())
                  : RunConfig::defaults();
  ds.elevation = read_dcg((root / "elevation.dcg").string());
  for (const auto& entry : read_manifest((root / "manifest.txt").string()))
    ds.days.push_back(read_dcg((root / entry).string()));
  if (ds.days.empty()) throw IoError("dataset manifest is empty: " + dir);
  return ds;
}

double precip_scale_for(ModelTag tag) {
  return tag == ModelTag::dc_lognormal ? 1.0 : kGaussianPrecipScale;
}

// Input stack for one day: coarsened-then-refined precipitation (scaled per
// pathway) and normalized elevation.
Tensor<real> build_input(const Grid& hr_precip, const Grid& elev_norm, int factor,
                         double precip_scale) {
  const Grid lr = upscale_bilinear(hr_precip, factor);
  const Grid lr_on_hr = refine_bilinear(lr, factor);
  const std::int64_t h = hr_precip.height, w = hr_precip.width;
  auto input = Tensor<real>::zeros({1, 2, h, w});
  for (std::int64_t i = 0; i < h * w; ++i) {
    input[i] = static_cast<real>(lr_on_hr.values[static_cast<std::size_t>(i)] * precip_scale);
    input[h * w + i] = static_cast<real>(elev_norm.values[static_cast<std::size_t>(i)]);
  }
  return input;
}

NetworkConfig network_config_from(const RunConfig& cfg, ModelTag tag) {
  NetworkConfig nc;
  nc.kernel_sizes = cfg.get_int_list("network.kernels");
  nc.filters = cfg.get_int_list("network.filters");
  if (nc.kernel_sizes.size() == 1 && cfg.get_str("network.filters") == "none") nc.filters.clear();
  nc.tag = tag;
  nc.validate();
  return nc;
}

int cmd_generate(const std::string& config_path, const std::string& out_dir) {
  RunConfig cfg = RunConfig::load(config_path);
  SyntheticConfig sc;
  sc.seed = static_cast<std::uint64_t>(cfg.get_int("synthetic.seed"));
  sc.days = cfg.get_int("synthetic.days");
  sc.height = cfg.get_int("synthetic.height");
  sc.width = cfg.get_int("synthetic.width");
  sc.correlation_length = cfg.get_double("synthetic.correlation_length");
  sc.rain_fraction = cfg.get_double("synthetic.rain_fraction");
  sc.log_mu = cfg.get_double("synthetic.log_mu");
  sc.log_sigma = cfg.get_double("synthetic.log_sigma");
  sc.elevation_coeff = cfg.get_double("synthetic.elevation_coeff");

  const SyntheticData data = generate_synthetic(sc);
  fs::create_directories(out_dir);
  const fs::path root(out_dir);
  write_dcg((root / "elevation.dcg").string(), data.elevation);
  std::vector<std::string> manifest;
  for (std::size_t d = 0; d < data.precip_days.size(); ++d) {
    const std::string name = day_name("precip", static_cast<std::int64_t>(d));
    write_dcg((root / name).string(), data.precip_days[d]);
    manifest.push_back(name);
  }
  write_manifest((root / "manifest.txt").string(), manifest);
  cfg.write((root / "config.resolved.txt").string());
  std::cout << "generated " << data.precip_days.size() << " days at " << sc.height << "x"
            << sc.width << " in " << out_dir << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_dir,
              const std::string& model, const std::string& out_path,
              std::int64_t iterations_override, std::int64_t seed_override) {
  RunConfig cfg = RunConfig::load(config_path);
  const ModelTag tag = parse_model_tag(model);
  const Dataset ds = load_dataset(data_dir);
  const double scale = precip_scale_for(tag);

  const auto estats = elevation_stats(ds.elevation);
  const Grid elev_norm = normalize_elevation(ds.elevation, estats);
  const int factor = static_cast<int>(cfg.get_int("data.factor"));
  const std::int64_t patch = cfg.get_int("data.patch_size");
  const std::int64_t stride = cfg.get_int("data.stride");

  PatchSet patches;
  for (const auto& day : ds.days) {
    const Grid lr_on_hr = refine_bilinear(upscale_bilinear(day, factor), factor);
    const Grid precip_in = scale_precip(lr_on_hr, scale);
    const Grid label = scale_precip(day, scale);
    extract_patches({&precip_in, &elev_norm}, label, patch, stride, patches);
  }

  TrainingConfig tc;
  tc.learning_rate = cfg.get_double("train.learning_rate");
  tc.batch_size = cfg.get_int("train.batch_size");
  tc.iterations = iterations_override >= 0 ? iterations_override : cfg.get_int("train.iterations");
  tc.tau = cfg.get_double("train.tau");
  tc.length_scale = cfg.get_double("train.length_scale");
  tc.seed = seed_override >= 0 ? static_cast<std::uint64_t>(seed_override)
                               : static_cast<std::uint64_t>(cfg.get_int("train.seed"));
  tc.dataset_size = static_cast<std::int64_t>(ds.days.size()) * ds.days.front().height *
                    ds.days.front().width;
  tc.rain_threshold = cfg.get_double("train.rain_threshold");
  tc.precip_scale = scale;
  tc.log_interval = cfg.get_int("train.log_interval");

  const NetworkConfig nc = network_config_from(cfg, tag);
  const TrainResult result = train(tc, nc, patches);

  const CheckpointExtras extras{estats.mean, estats.stddev, scale};
  if (const auto parent = fs::path(out_path).parent_path(); !parent.empty())
    fs::create_directories(parent);
  save_checkpoint(out_path, nc, result.weights, extras);
  result.log.write_csv(out_path + ".log.csv");
  cfg.set("train.iterations", std::to_string(tc.iterations));
  cfg.set("train.seed", std::to_string(tc.seed));
  cfg.write(out_path + ".config.txt");
  if (result.diverged_at) {
    std::cerr << "error: training diverged at iteration " << *result.diverged_at
              << "; last finite checkpoint written to " << out_path << "\n";
    return 2;
  }
  std::cout << "trained " << model << " for " << tc.iterations << " iterations; checkpoint at "
            << out_path << "\n";
  return 0;
}

int cmd_predict(const std::string& checkpoint_path, const std::string& data_dir,
                std::int64_t passes, std::int64_t seed, const std::string& cdf_mode,
                const std::string& out_dir) {
  if (cdf_mode != "matched" && cdf_mode != "mixture")
    throw ContractViolation("predict: --cdf-mode must be 'matched' or 'mixture'");
  const CdfMode mode = cdf_mode == "matched" ? CdfMode::moment_matched : CdfMode::mc_mixture;
  const Checkpoint<real> ck = load_checkpoint<real>(checkpoint_path);
  const Dataset ds = load_dataset(data_dir);
  const int factor = static_cast<int>(ds.config.get_int("data.factor"));

  const ElevationStats estats{ck.extras.elev_mean, ck.extras.elev_std};
  const Grid elev_norm = normalize_elevation(ds.elevation, estats);

  fs::create_directories(out_dir);
  const fs::path root(out_dir);
  CounterRng day_seeds(static_cast<std::uint64_t>(seed));

  const std::int64_t h = ds.days.front().height, w = ds.days.front().width;
  auto as_grid = [&](const Tensor<double>& t) {
    Grid g = Grid::make(h, w, Grid::Variable::diagnostic_field);
    for (std::int64_t i = 0; i < h * w; ++i)
      g.values[static_cast<std::size_t>(i)] = static_cast<float>(t[i]);
    return g;
  };

  for (std::size_t d = 0; d < ds.days.size(); ++d) {
    const auto input = build_input(ds.days[d], elev_norm, factor, ck.extras.precip_scale);
    const std::uint64_t day_seed = day_seeds.stream(static_cast<std::uint64_t>(d)).next_u64();
    const McPassSet mc = mc_predict(ck.weights, ck.config, input, passes, day_seed,
                                    ck.extras.precip_scale);
    const PredictiveGrids grids = predict_distribution(mc, mode);
    const auto di = static_cast<std::int64_t>(d);
    write_dcg((root / day_name("mean", di)).string(), as_grid(grids.mean));
    write_dcg((root / day_name("var", di)).string(), as_grid(grids.var));
    write_dcg((root / day_name("rainprob", di)).string(), as_grid(grids.rain_prob));
    write_dcg((root / day_name("loc", di)).string(), as_grid(grids.loc));
    write_dcg((root / day_name("scale", di)).string(), as_grid(grids.scale));
    if (mode == CdfMode::mc_mixture)
      write_passes((root / pass_name(di)).string(), mc);
  }

  RunConfig cfg = ds.config;
  cfg.set("predict.passes", std::to_string(passes));
  cfg.set("predict.seed", std::to_string(seed));
  cfg.set("predict.cdf_mode", cdf_mode);
  cfg.set("predict.model", model_tag_name(ck.config.tag));
  cfg.write((root / "config.resolved.txt").string());
  std::cout << "predicted " << ds.days.size() << " days (" << model_tag_name(ck.config.tag)
            << ", " << cdf_mode << ") into " << out_dir << "\n";
  return 0;
}

// Single matched predictive distribution NLL; mixture mode uses
// predictive_nll over the stored passes instead.
double matched_nll(const PredictiveDistribution& d, double y, double thr) {
  constexpr double kLogSqrt2Pi = 0.91893853320467274178;
  auto normal_logpdf = [&](double x, double m, double sd) {
    const double z = (x - m) / sd;
    return -kLogSqrt2Pi - std::log(sd) - 0.5 * z * z;
  };
  switch (d.tag) {
    case ModelTag::gaussian:
      return -normal_logpdf(y, d.mean, std::sqrt(std::max(d.var, 1e-300)));
    case ModelTag::dc_gaussian: {
      if (y <= thr) return -std::log(std::max(1.0 - d.rain_prob, 1e-300));
      return -(std::log(std::max(d.rain_prob, 1e-300)) +
               normal_logpdf(y, d.loc, std::max(d.scale, 1e-150)));
    }
    case ModelTag::dc_lognormal: {
      if (y <= thr) return -std::log(std::max(1.0 - d.rain_prob, 1e-300));
      return -(std::log(std::max(d.rain_prob, 1e-300)) - std::log(y) +
               normal_logpdf(std::log(y), d.loc, std::max(d.scale, 1e-150)));
    }
  }
  throw ContractViolation("matched_nll: bad tag");
}

int cmd_evaluate(const std::string& pred_dir, const std::string& obs_dir,
                 const std::string& out_dir) {
  const Dataset obs = load_dataset(obs_dir);
  const fs::path pred(pred_dir);
  const RunConfig pred_cfg = RunConfig::load((pred / "config.resolved.txt").string());
  const bool mixture = pred_cfg.get_str("predict.cdf_mode") == "mixture";
  const CdfMode mode = mixture ? CdfMode::mc_mixture : CdfMode::moment_matched;
  const ModelTag tag = parse_model_tag(pred_cfg.get_str("predict.model"));

  const RunConfig& ecfg = obs.config;
  const std::int64_t days_per_year = ecfg.get_int("eval.days_per_year");
  const bool wet_only = ecfg.get_bool("eval.wet_only");
  const std::int64_t bins = ecfg.get_int("eval.calibration_bins");
  const double thr = ecfg.get_double("train.rain_threshold");
  CounterRng pit_root(static_cast<std::uint64_t>(ecfg.get_int("eval.seed")));

  const std::int64_t n_days = static_cast<std::int64_t>(obs.days.size());
  const std::int64_t h = obs.days.front().height, w = obs.days.front().width;
  const std::int64_t px = h * w;

  std::vector<PredictiveGrids> day_grids;
  std::vector<McPassSet> day_passes;
  for (std::int64_t d = 0; d < n_days; ++d) {
    PredictiveGrids g;
    auto load = [&](const char* prefix) {
      const Grid grid = read_dcg((pred / day_name(prefix, d)).string());
      if (grid.height != h || grid.width != w)
        throw IoError("prediction grid size mismatch on day " + std::to_string(d));
      auto t = Tensor<double>::zeros({h, w});
      for (std::int64_t i = 0; i < px; ++i) t[i] = grid.values[static_cast<std::size_t>(i)];
      return t;
    };
    g.tag = tag;
    g.mode = mode;
    g.mean = load("mean");
    g.var = load("var");
    g.rain_prob = load("rainprob");
    g.loc = load("loc");
    g.scale = load("scale");
    if (mixture)
      day_passes.push_back(
          read_passes((pred / pass_name(d)).string()));
    day_grids.push_back(std::move(g));
  }

  fs::create_directories(out_dir);
  const fs::path root(out_dir);
  auto as_grid = [&](const std::vector<double>& v) {
    Grid g = Grid::make(h, w, Grid::Variable::diagnostic_field);
    for (std::int64_t i = 0; i < px; ++i) g.values[static_cast<std::size_t>(i)] = static_cast<float>(v[static_cast<std::size_t>(i)]);
    return g;
  };

  // per-pixel accuracy maps over the day series
  std::vector<double> map_bias(static_cast<std::size_t>(px)), map_rmse(static_cast<std::size_t>(px)),
      map_r20(static_cast<std::size_t>(px)), map_sdii(static_cast<std::size_t>(px)),
      map_cal(static_cast<std::size_t>(px));
  std::vector<double> obs_series(static_cast<std::size_t>(n_days));
  std::vector<double> pred_series(static_cast<std::size_t>(n_days));
  std::int64_t sdii_skipped = 0;
  for (std::int64_t p = 0; p < px; ++p) {
    for (std::int64_t d = 0; d < n_days; ++d) {
      obs_series[static_cast<std::size_t>(d)] = obs.days[static_cast<std::size_t>(d)].values[static_cast<std::size_t>(p)];
      pred_series[static_cast<std::size_t>(d)] = day_grids[static_cast<std::size_t>(d)].mean[p];
    }
    const auto stats = metrics::bias_rmse(pred_series, obs_series);
    map_bias[static_cast<std::size_t>(p)] = stats.bias;
    map_rmse[static_cast<std::size_t>(p)] = stats.rmse;
    map_r20[static_cast<std::size_t>(p)] =
        metrics::climdex_r20(pred_series, days_per_year) - metrics::climdex_r20(obs_series, days_per_year);
    try {
      map_sdii[static_cast<std::size_t>(p)] = metrics::climdex_sdii(pred_series, days_per_year) -
                                              metrics::climdex_sdii(obs_series, days_per_year);
    } catch (const DomainError&) {
      map_sdii[static_cast<std::size_t>(p)] = 0.0;
      ++sdii_skipped;
    }

    // per-pixel calibration RMSE over this pixel's day series
    auto pix_rng = pit_root.stream(0xCA11B000u + static_cast<std::uint64_t>(p));
    try {
      const auto rep = metrics::calibration(
          obs_series,
          [&](std::size_t d, double y) {
            const auto dist = day_grids[d].at(p);
            const McPassSet* ps = mixture ? &day_passes[d] : nullptr;
            return predictive_pit(dist, ps, p, y, thr, pix_rng.uniform());
          },
          bins, wet_only, thr);
      map_cal[static_cast<std::size_t>(p)] = rep.rmse_cal;
    } catch (const ContractViolation&) {
      map_cal[static_cast<std::size_t>(p)] = 0.0;  // no wet days at this pixel
    }
  }
  if (sdii_skipped > 0)
    std::cerr << "warning: sdii undefined for " << sdii_skipped << " pixels, error set to 0\n";

  write_dcg((root / "bias.dcg").string(), as_grid(map_bias));
  write_dcg((root / "rmse.dcg").string(), as_grid(map_rmse));
  write_dcg((root / "r20_err.dcg").string(), as_grid(map_r20));
  write_dcg((root / "sdii_err.dcg").string(), as_grid(map_sdii));
  write_dcg((root / "calib_rmse.dcg").string(), as_grid(map_cal));

  // pooled calibration over all pixel-days
  std::vector<double> all_obs(static_cast<std::size_t>(px * n_days));
  for (std::int64_t d = 0; d < n_days; ++d)
    for (std::int64_t p = 0; p < px; ++p)
      all_obs[static_cast<std::size_t>(d * px + p)] =
          obs.days[static_cast<std::size_t>(d)].values[static_cast<std::size_t>(p)];
  auto pooled_rng = pit_root.stream(0x9001ED);
  const auto pooled_cal = metrics::calibration(
      all_obs,
      [&](std::size_t i, double y) {
        const std::size_t d = i / static_cast<std::size_t>(px);
        const std::int64_t p = static_cast<std::int64_t>(i % static_cast<std::size_t>(px));
        const auto dist = day_grids[d].at(p);
        const McPassSet* ps = mixture ? &day_passes[d] : nullptr;
        return predictive_pit(dist, ps, p, y, thr, pooled_rng.uniform());
      },
      bins, wet_only, thr);
  {
    std::ofstream os((root / "calibration.csv").string());
    os << "z,c_z\n";
    for (std::int64_t k = 1; k <= pooled_cal.bins; ++k)
      os << fmt(static_cast<double>(k) / static_cast<double>(pooled_cal.bins)) << ","
         << fmt(pooled_cal.c_values[static_cast<std::size_t>(k - 1)]) << "\n";
  }

  // rain classification (hurdle models only, as in the paper)
  if (tag != ModelTag::gaussian) {
    std::vector<double> scores(all_obs.size());
    std::vector<std::uint8_t> labels(all_obs.size());
    for (std::int64_t d = 0; d < n_days; ++d)
      for (std::int64_t p = 0; p < px; ++p) {
        scores[static_cast<std::size_t>(d * px + p)] = day_grids[static_cast<std::size_t>(d)].rain_prob[p];
        labels[static_cast<std::size_t>(d * px + p)] =
            all_obs[static_cast<std::size_t>(d * px + p)] > thr ? 1 : 0;
      }
    const auto curve = metrics::precision_recall(scores, labels);
    std::ofstream os((root / "pr_curve.csv").string());
    os << "threshold,precision,recall\n";
    for (const auto& pt : curve)
      os << fmt(pt.threshold) << "," << fmt(pt.precision) << "," << fmt(pt.recall) << "\n";
  }

  // full NLL: exact mixture average when passes are stored, matched otherwise
  double nll = 0.0;
  if (mixture) {
    for (std::int64_t d = 0; d < n_days; ++d) {
      std::vector<double> day_obs(static_cast<std::size_t>(px));
      for (std::int64_t p = 0; p < px; ++p)
        day_obs[static_cast<std::size_t>(p)] = all_obs[static_cast<std::size_t>(d * px + p)];
      nll += predictive_nll(day_passes[static_cast<std::size_t>(d)], day_obs, thr);
    }
    nll /= static_cast<double>(n_days);
  } else {
    for (std::int64_t d = 0; d < n_days; ++d)
      for (std::int64_t p = 0; p < px; ++p)
        nll += matched_nll(day_grids[static_cast<std::size_t>(d)].at(p),
                           all_obs[static_cast<std::size_t>(d * px + p)], thr);
    nll /= static_cast<double>(px * n_days);
  }

  // aggregate table, mean +- std across pixels
  auto aggregate = [&](const std::vector<double>& v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    return std::pair<double, double>(mean, std::sqrt(var / static_cast<double>(v.size())));
  };
  {
    std::ofstream os((root / "metrics.csv").string());
    os << "metric,mean,std\n";
    const std::pair<const char*, const std::vector<double>*> rows[] = {
        {"bias", &map_bias}, {"rmse", &map_rmse}, {"r20_error", &map_r20}, {"sdii_error", &map_sdii}};
    for (const auto& [name, values] : rows) {
      const auto [m, s] = aggregate(*values);
      os << name << "," << fmt(m) << "," << fmt(s) << "\n";
    }
    os << "nll," << fmt(nll) << ",\n";
    os << "calibration_rmse," << fmt(pooled_cal.rmse_cal) << ",\n";
  }

  RunConfig out_cfg = obs.config;
  out_cfg.write((root / "config.resolved.txt").string());
  std::cout << "evaluated " << n_days << " days (" << model_tag_name(tag) << ") into " << out_dir
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  if (const char* threads = std::getenv("DCBDL_THREADS")) {
    const int n = std::atoi(threads);
    if (n > 0) omp_set_num_threads(n);
  }

  CLI::App app{"discrete-continuous Bayesian deep learning downscaling toolkit"};
  app.require_subcommand(1);

  std::string config_path, data_dir, out_dir, out_path, model, checkpoint_path, cdf_mode = "matched";
  std::string pred_dir, obs_dir;
  std::int64_t passes = 50, seed = 99, iterations_override = -1, seed_override = -1;

  auto* gen = app.add_subcommand("generate", "write a synthetic dataset");
  gen->add_option("--config", config_path, "key=value config file")->required();
  gen->add_option("--out-dir", out_dir, "output directory")->required();

  auto* tr = app.add_subcommand("train", "train a model");
  tr->add_option("--config", config_path)->required();
  tr->add_option("--data-dir", data_dir)->required();
  tr->add_option("--model", model, "gaussian|dc-gaussian|dc-lognormal")->required();
  tr->add_option("--out", out_path, "checkpoint path")->required();
  tr->add_option("--iterations", iterations_override, "override train.iterations");
  tr->add_option("--seed", seed_override, "override train.seed");

  auto* pr = app.add_subcommand("predict", "MC-dropout inference");
  pr->add_option("--checkpoint", checkpoint_path)->required();
  pr->add_option("--data-dir", data_dir)->required();
  pr->add_option("--passes", passes, "Monte Carlo passes");
  pr->add_option("--seed", seed);
  pr->add_option("--cdf-mode", cdf_mode, "matched|mixture");
  pr->add_option("--out-dir", out_dir)->required();

  auto* ev = app.add_subcommand("evaluate", "metrics, calibration, maps");
  ev->add_option("--pred-dir", pred_dir)->required();
  ev->add_option("--obs-dir", obs_dir)->required();
  ev->add_option("--out-dir", out_dir)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_generate(config_path, out_dir);
    if (tr->parsed())
      return cmd_train(config_path, data_dir, model, out_path, iterations_override, seed_override);
    if (pr->parsed())
      return cmd_predict(checkpoint_path, data_dir, passes, seed, cdf_mode, out_dir);
    if (ev->parsed()) return cmd_evaluate(pred_dir, obs_dir, out_dir);
  } catch (const std::exception& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::cerr << "error: " << msg << "\n";
    return 1;
  }
  return 0;
}
