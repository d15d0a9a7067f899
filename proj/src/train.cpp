#include "dcbdl/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "dcbdl/adam.hpp"
#include "dcbdl/ops.hpp"
#include "dcbdl/rng.hpp"

namespace dcbdl {

void TrainingConfig::validate() const {
  if (!(learning_rate > 0) || batch_size <= 0 || iterations < 0 || !(tau > 0) ||
      !(length_scale > 0) || dataset_size <= 0 || !(precip_scale > 0) || log_interval <= 0)
    throw ContractViolation("training config fields must be positive");
}

void TrainingLog::write_csv(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os << "iteration,nll,kl";
  const std::size_t layers = records.empty() ? 2 : records.front().dropout_p.size();
  for (std::size_t l = 0; l < layers; ++l) os << ",p_layer" << (l + 1);
  os << ",seconds\n";
  char buf[64];
  for (const auto& r : records) {
    os << r.iteration;
    std::snprintf(buf, sizeof(buf), ",%.10g,%.10g", r.nll, r.kl);
    os << buf;
    for (double p : r.dropout_p) {
      std::snprintf(buf, sizeof(buf), ",%.10g", p);
      os << buf;
    }
    std::snprintf(buf, sizeof(buf), ",%.3f", r.seconds);
    os << buf << "\n";
  }
  if (!os) throw IoError("write failed for " + path);
}

namespace {

// Dropout on a hidden activation regularizes the conv layer consuming it, so
// layer l's mask pairs with kernel l+1 and width filters[l].
template <class T>
Var training_loss(Tape<T>& t, const NetworkConfig& nc, const NetworkWeights<T>& w,
                  const WeightVars<T>& wv, const Tensor<T>& input, const Tensor<T>& label,
                  const std::vector<Tensor<T>>* noise, const TrainingConfig& tc, Var* nll_out,
                  Var* kl_out) {
  HeadVars heads = srcnn_forward(t, input, w, wv, nc, noise);
  const T thr = static_cast<T>(tc.rain_threshold * tc.precip_scale);
  Var nll;
  switch (nc.tag) {
    case ModelTag::gaussian:
      nll = gaussian_nll(t, heads.loc, heads.s, label);
      break;
    case ModelTag::dc_gaussian:
      nll = dc_gaussian_nll(t, heads.loc, heads.s, heads.phi, label, thr);
      break;
    case ModelTag::dc_lognormal:
      nll = dc_lognormal_nll(t, heads.loc, heads.s, heads.phi, label, thr);
      break;
  }
  RegularizerConfig rc{tc.length_scale, tc.tau, tc.dataset_size};
  std::vector<Var> reg_weights;
  std::vector<std::int64_t> widths;
  for (std::int64_t l = 0; l < nc.hidden_count(); ++l) {
    reg_weights.push_back(wv.kernels[static_cast<std::size_t>(l + 1)]);
    widths.push_back(nc.filters[static_cast<std::size_t>(l)]);
  }
  Var kl = kl_regularizer<T>(t, reg_weights, wv.p_logits, widths, rc);
  *nll_out = nll;
  *kl_out = kl;
  return ops::add(t, nll, kl);
}

}  // namespace

TrainResult train(const TrainingConfig& tc, const NetworkConfig& nc, const PatchSet& patches) {
  tc.validate();
  nc.validate();
  if (patches.count() == 0) throw ContractViolation("train: patch set is empty");

  TrainResult result;
  result.weights = init_weights<real>(nc, tc.seed);
  auto& w = result.weights;

  const std::int64_t ps = patches.patch_size;
  CounterRng root(tc.seed);
  auto batch_rng = root.stream(0xBA7C);

  // persistent parameter tensors for Adam; dropout logits live in 1-element tensors
  std::vector<Tensor<real>> plogit_params;
  for (const auto& d : w.dropout) plogit_params.push_back(Tensor<real>::scalar(d.p_logit));
  AdamState<real> adam;

  const auto t0 = std::chrono::steady_clock::now();
  for (std::int64_t iter = 1; iter <= tc.iterations; ++iter) {
    // assemble batch
    auto input = Tensor<real>::zeros({tc.batch_size, nc.in_channels, ps, ps});
    auto label = Tensor<real>::zeros({tc.batch_size, 1, ps, ps});
    const std::int64_t chan_sz = ps * ps;
    for (std::int64_t b = 0; b < tc.batch_size; ++b) {
      const auto idx = static_cast<std::size_t>(batch_rng.below(static_cast<std::uint64_t>(patches.count())));
      std::memcpy(input.data.data() + b * nc.in_channels * chan_sz,
                  patches.inputs[idx].data.data(),
                  static_cast<std::size_t>(nc.in_channels * chan_sz) * sizeof(real));
      std::memcpy(label.data.data() + b * chan_sz, patches.labels[idx].data.data(),
                  static_cast<std::size_t>(chan_sz) * sizeof(real));
    }

    auto noise_rng = root.stream(0x4015E000u + static_cast<std::uint64_t>(iter));
    std::vector<Tensor<real>> noise;
    for (std::int64_t l = 0; l < nc.hidden_count(); ++l)
      noise.push_back(make_uniform_noise<real>(noise_rng, {nc.filters[static_cast<std::size_t>(l)], ps, ps}));

    try {
      Tape<real> tape;
      WeightVars<real> wv = push_weights(tape, w, true);
      for (std::size_t l = 0; l < plogit_params.size(); ++l)
        wv.p_logits[l] = tape.leaf(plogit_params[l], true);
      Var nll{}, kl{};
      Var total = training_loss(tape, nc, w, wv, input, label,
                                nc.hidden_count() > 0 ? &noise : nullptr, tc, &nll, &kl);
      tape.backward(total);

      std::vector<NamedParam<real>> params;
      std::vector<Tensor<real>> grads;
      grads.reserve(wv.kernels.size() * 2 + plogit_params.size());
      for (std::size_t l = 0; l < w.kernels.size(); ++l) {
        grads.push_back(tape.grad(wv.kernels[l]));
        params.push_back({"layer" + std::to_string(l) + "/kernel", &w.kernels[l], &grads.back()});
      }
      for (std::size_t l = 0; l < w.biases.size(); ++l) {
        grads.push_back(tape.grad(wv.biases[l]));
        params.push_back({"layer" + std::to_string(l) + "/bias", &w.biases[l], &grads.back()});
      }
      for (std::size_t l = 0; l < plogit_params.size(); ++l) {
        grads.push_back(tape.grad(wv.p_logits[l]));
        params.push_back(
            {"dropout" + std::to_string(l) + "/p_logit", &plogit_params[l], &grads.back()});
      }
      adam_step<real>(params, adam, tc.learning_rate);
      for (std::size_t l = 0; l < plogit_params.size(); ++l)
        w.dropout[l].p_logit = plogit_params[l][0];

      if (iter % tc.log_interval == 0 || iter == tc.iterations) {
        TrainRecord rec;
        rec.iteration = iter;
        rec.nll = static_cast<double>(tape.value(nll)[0]);
        rec.kl = static_cast<double>(tape.value(kl)[0]);
        for (const auto& d : w.dropout) rec.dropout_p.push_back(d.p());
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.log.records.push_back(std::move(rec));
      }
    } catch (const NumericError&) {
      result.diverged_at = iter;
      break;
    }
  }
  return result;
}

McPassSet mc_predict(const NetworkWeights<real>& weights, const NetworkConfig& nc,
                     const Tensor<real>& input, std::int64_t passes, std::uint64_t seed,
                     double precip_scale) {
  nc.validate();
  if (passes < 1) throw ContractViolation("mc_predict: pass count must be >= 1");
  if (!(precip_scale > 0)) throw ContractViolation("mc_predict: precip_scale must be positive");
  if (input.shape.size() != 4) throw ContractViolation("mc_predict: input must be rank 4");
  const std::int64_t h = input.shape[2], wd = input.shape[3];

  McPassSet out;
  out.tag = nc.tag;
  out.passes.resize(static_cast<std::size_t>(passes));
  CounterRng root(seed);
  const double s_shift = -2.0 * std::log(precip_scale);  // sigma^2_mm = sigma^2 / scale^2

  for (std::int64_t t = 0; t < passes; ++t) {
    auto rng = root.stream(static_cast<std::uint64_t>(t));
    std::vector<Tensor<real>> noise;
    for (std::int64_t l = 0; l < nc.hidden_count(); ++l)
      noise.push_back(make_uniform_noise<real>(rng, {nc.filters[static_cast<std::size_t>(l)], h, wd}));

    Tape<real> tape;
    WeightVars<real> wv = push_weights(tape, weights, false);
    HeadVars heads = srcnn_forward(tape, input, weights, wv, nc,
                                   nc.hidden_count() > 0 ? &noise : nullptr);
    McPass& pass = out.passes[static_cast<std::size_t>(t)];
    pass.loc = tape.value(heads.loc).template cast<double>();
    pass.s = tape.value(heads.s).template cast<double>();
    if (heads.has_phi) pass.phi = tape.value(heads.phi).template cast<double>();
    if (nc.tag != ModelTag::dc_lognormal && precip_scale != 1.0) {
      for (std::int64_t i = 0; i < pass.loc.numel(); ++i) {
        pass.loc[i] /= precip_scale;
        pass.s[i] += s_shift;
      }
    }
  }
  return out;
}

PredictiveDistribution PredictiveGrids::at(std::int64_t pixel) const {
  PredictiveDistribution d;
  d.mean = mean[pixel];
  d.var = var[pixel];
  d.rain_prob = rain_prob[pixel];
  d.loc = loc[pixel];
  d.scale = scale[pixel];
  d.tag = tag;
  d.mode = mode;
  return d;
}

PredictiveGrids predict_distribution(const McPassSet& passes, CdfMode mode) {
  MomentGrids mg = mc_moments(passes);
  PredictiveGrids out;
  out.tag = passes.tag;
  out.mode = mode;
  out.mean = std::move(mg.mean);
  out.var = std::move(mg.var);
  out.rain_prob = std::move(mg.rain_prob);
  out.loc = Tensor<double>::zeros(out.mean.shape);
  out.scale = Tensor<double>::zeros(out.mean.shape);
  const std::int64_t n = out.mean.numel();
  for (std::int64_t i = 0; i < n; ++i) {
    const double e = out.mean[i], v = out.var[i], pbar = out.rain_prob[i];
    switch (passes.tag) {
      case ModelTag::gaussian:
        out.loc[i] = e;
        out.scale[i] = std::sqrt(v);
        break;
      case ModelTag::dc_gaussian: {
        if (pbar < 1e-6) break;  // dry collapse: loc = scale = 0
        const double er = e / pbar;
        const double e2r = (v + e * e) / pbar;
        out.loc[i] = er;
        out.scale[i] = std::sqrt(std::max(0.0, e2r - er * er));
        break;
      }
      case ModelTag::dc_lognormal: {
        if (pbar < 1e-6) break;
        const double er = e / pbar;
        const double e2r = (v + e * e) / pbar;
        const auto [mu, sigma] = lognormal_moment_match(er, std::max(0.0, e2r - er * er));
        out.loc[i] = mu;
        out.scale[i] = sigma;
        break;
      }
    }
  }
  return out;
}

namespace {
constexpr char kPassMagic[4] = {'M', 'C', 'P', '1'};
}

void write_passes(const std::string& path, const McPassSet& ps) {
  ps.validate();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os.write(kPassMagic, 4);
  const std::uint8_t tag = static_cast<std::uint8_t>(ps.tag);
  const std::uint32_t t = static_cast<std::uint32_t>(ps.count());
  const auto& shape = ps.passes.front().loc.shape;
  const std::uint8_t rank = static_cast<std::uint8_t>(shape.size());
  os.write(reinterpret_cast<const char*>(&tag), 1);
  os.write(reinterpret_cast<const char*>(&t), 4);
  os.write(reinterpret_cast<const char*>(&rank), 1);
  for (auto e : shape) {
    const std::uint32_t v = static_cast<std::uint32_t>(e);
    os.write(reinterpret_cast<const char*>(&v), 4);
  }
  const bool has_phi = ps.tag != ModelTag::gaussian;
  std::vector<float> buf;
  auto dump = [&](const Tensor<double>& t64) {
    buf.resize(static_cast<std::size_t>(t64.numel()));
    for (std::int64_t i = 0; i < t64.numel(); ++i) buf[static_cast<std::size_t>(i)] = static_cast<float>(t64[i]);
    os.write(reinterpret_cast<const char*>(buf.data()),
             static_cast<std::streamsize>(buf.size() * sizeof(float)));
  };
  for (const auto& p : ps.passes) {
    dump(p.loc);
    dump(p.s);
    if (has_phi) dump(p.phi);
  }
  if (!os) throw IoError("write failed for " + path);
}

McPassSet read_passes(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kPassMagic, 4) != 0) throw IoError("bad MCP1 magic in " + path);
  std::uint8_t tag = 0, rank = 0;
  std::uint32_t t = 0;
  is.read(reinterpret_cast<char*>(&tag), 1);
  is.read(reinterpret_cast<char*>(&t), 4);
  is.read(reinterpret_cast<char*>(&rank), 1);
  std::vector<std::int64_t> shape;
  for (int r = 0; r < rank; ++r) {
    std::uint32_t e = 0;
    is.read(reinterpret_cast<char*>(&e), 4);
    shape.push_back(e);
  }
  if (!is || t == 0) throw IoError("bad MCP1 header in " + path);
  McPassSet ps;
  ps.tag = static_cast<ModelTag>(tag);
  const bool has_phi = ps.tag != ModelTag::gaussian;
  const std::int64_t n = shape_numel(shape);
  std::vector<float> buf(static_cast<std::size_t>(n));
  auto slurp = [&](Tensor<double>& t64) {
    is.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    t64 = Tensor<double>::zeros(shape);
    for (std::int64_t i = 0; i < n; ++i) t64[i] = buf[static_cast<std::size_t>(i)];
  };
  ps.passes.resize(t);
  for (auto& p : ps.passes) {
    slurp(p.loc);
    slurp(p.s);
    if (has_phi) slurp(p.phi);
  }
  if (!is) throw IoError("truncated MCP1 payload in " + path);
  return ps;
}

}  // namespace dcbdl
