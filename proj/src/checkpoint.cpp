#include "dcbdl/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

namespace dcbdl {

static_assert(std::endian::native == std::endian::little,
              "checkpoint and grid formats assume a little-endian host");

namespace {

constexpr char kMagic[4] = {'D', 'C', 'B', 'W'};
constexpr std::uint8_t kVersion = 1;

template <class V>
void write_pod(std::ostream& os, V v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <class V>
V read_pod(std::istream& is) {
  V v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(V));
  if (!is) throw IoError("checkpoint: truncated file");
  return v;
}

template <class T>
constexpr std::uint8_t dtype_code() {
  return sizeof(T) == 4 ? 0 : 1;
}

template <class T>
void write_entry(std::ostream& os, const std::string& name, const Tensor<T>& t) {
  write_pod<std::uint16_t>(os, static_cast<std::uint16_t>(name.size()));
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
  write_pod<std::uint8_t>(os, dtype_code<T>());
  write_pod<std::uint8_t>(os, static_cast<std::uint8_t>(t.shape.size()));
  for (auto e : t.shape) write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(e));
  os.write(reinterpret_cast<const char*>(t.data.data()),
           static_cast<std::streamsize>(t.data.size() * sizeof(T)));
}

template <class T>
std::pair<std::string, Tensor<T>> read_entry(std::istream& is) {
  const auto name_len = read_pod<std::uint16_t>(is);
  std::string name(name_len, '\0');
  is.read(name.data(), name_len);
  const auto dtype = read_pod<std::uint8_t>(is);
  if (dtype != dtype_code<T>())
    throw IoError("checkpoint: entry " + name + " has dtype code " + std::to_string(dtype) +
                  ", this build expects " + std::to_string(dtype_code<T>()));
  const auto rank = read_pod<std::uint8_t>(is);
  std::vector<std::int64_t> shape;
  for (int r = 0; r < rank; ++r) shape.push_back(read_pod<std::uint32_t>(is));
  auto t = Tensor<T>::zeros(shape);
  is.read(reinterpret_cast<char*>(t.data.data()),
          static_cast<std::streamsize>(t.data.size() * sizeof(T)));
  if (!is) throw IoError("checkpoint: truncated entry " + name);
  return {std::move(name), std::move(t)};
}

}  // namespace

template <class T>
void save_checkpoint(const std::string& path, const NetworkConfig& cfg,
                     const NetworkWeights<T>& weights, const CheckpointExtras& extras) {
  cfg.validate();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("checkpoint: cannot open " + path + " for writing");
  os.write(kMagic, 4);
  write_pod<std::uint8_t>(os, kVersion);
  write_pod<std::uint8_t>(os, static_cast<std::uint8_t>(cfg.tag));
  write_pod<std::uint8_t>(os, static_cast<std::uint8_t>(cfg.layer_count()));
  write_pod<std::uint16_t>(os, static_cast<std::uint16_t>(cfg.in_channels));
  for (auto k : cfg.kernel_sizes) write_pod<std::uint16_t>(os, static_cast<std::uint16_t>(k));
  for (auto f : cfg.filters) write_pod<std::uint16_t>(os, static_cast<std::uint16_t>(f));

  const std::uint32_t entries = static_cast<std::uint32_t>(
      weights.kernels.size() + weights.biases.size() + 2 * weights.dropout.size() + 3);
  write_pod<std::uint32_t>(os, entries);
  for (std::size_t l = 0; l < weights.kernels.size(); ++l) {
    write_entry(os, "layer" + std::to_string(l) + "/kernel", weights.kernels[l]);
    write_entry(os, "layer" + std::to_string(l) + "/bias", weights.biases[l]);
  }
  for (std::size_t l = 0; l < weights.dropout.size(); ++l) {
    write_entry(os, "dropout" + std::to_string(l) + "/p_logit",
                Tensor<T>::scalar(weights.dropout[l].p_logit));
    write_entry(os, "dropout" + std::to_string(l) + "/temperature",
                Tensor<T>::scalar(weights.dropout[l].temperature));
  }
  write_entry(os, "norm/elev_mean", Tensor<double>::scalar(extras.elev_mean));
  write_entry(os, "norm/elev_std", Tensor<double>::scalar(extras.elev_std));
  write_entry(os, "norm/precip_scale", Tensor<double>::scalar(extras.precip_scale));
  if (!os) throw IoError("checkpoint: write failed for " + path);
}

template <class T>
Checkpoint<T> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("checkpoint: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw IoError("checkpoint: bad magic in " + path);
  const auto version = read_pod<std::uint8_t>(is);
  if (version != kVersion)
    throw IoError("checkpoint: unsupported version " + std::to_string(version));

  Checkpoint<T> ck;
  ck.config.tag = static_cast<ModelTag>(read_pod<std::uint8_t>(is));
  const auto layers = read_pod<std::uint8_t>(is);
  ck.config.in_channels = read_pod<std::uint16_t>(is);
  ck.config.kernel_sizes.clear();
  ck.config.filters.clear();
  for (int l = 0; l < layers; ++l) ck.config.kernel_sizes.push_back(read_pod<std::uint16_t>(is));
  for (int l = 0; l + 1 < layers; ++l) ck.config.filters.push_back(read_pod<std::uint16_t>(is));
  ck.config.validate();

  const auto entries = read_pod<std::uint32_t>(is);
  ck.weights.dropout.resize(ck.config.filters.size());
  for (auto& d : ck.weights.dropout) d = DropoutLayerState<T>{};
  ck.weights.kernels.resize(static_cast<std::size_t>(layers));
  ck.weights.biases.resize(static_cast<std::size_t>(layers));
  for (std::uint32_t e = 0; e < entries; ++e) {
    // norm/* entries are stored in double regardless of build precision
    const auto pos = is.tellg();
    const auto name_len = read_pod<std::uint16_t>(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    is.seekg(pos);
    if (name.rfind("norm/", 0) == 0) {
      auto [n, t] = read_entry<double>(is);
      if (n == "norm/elev_mean") ck.extras.elev_mean = t[0];
      else if (n == "norm/elev_std") ck.extras.elev_std = t[0];
      else if (n == "norm/precip_scale") ck.extras.precip_scale = t[0];
      else throw IoError("checkpoint: unknown entry " + n);
      continue;
    }
    auto [n, t] = read_entry<T>(is);
    bool handled = false;
    for (std::size_t l = 0; l < static_cast<std::size_t>(layers); ++l) {
      if (n == "layer" + std::to_string(l) + "/kernel") {
        ck.weights.kernels[l] = std::move(t);
        handled = true;
      } else if (n == "layer" + std::to_string(l) + "/bias") {
        ck.weights.biases[l] = std::move(t);
        handled = true;
      }
      if (handled) break;
    }
    for (std::size_t l = 0; !handled && l < ck.weights.dropout.size(); ++l) {
      if (n == "dropout" + std::to_string(l) + "/p_logit") {
        ck.weights.dropout[l].p_logit = t[0];
        handled = true;
      } else if (n == "dropout" + std::to_string(l) + "/temperature") {
        ck.weights.dropout[l].temperature = t[0];
        handled = true;
      }
    }
    if (!handled) throw IoError("checkpoint: unknown entry " + n);
  }
  for (std::size_t l = 0; l < ck.weights.dropout.size(); ++l)
    ck.weights.dropout[l].width = ck.config.filters[l];
  return ck;
}

template void save_checkpoint<float>(const std::string&, const NetworkConfig&,
                                     const NetworkWeights<float>&, const CheckpointExtras&);
template void save_checkpoint<double>(const std::string&, const NetworkConfig&,
                                      const NetworkWeights<double>&, const CheckpointExtras&);
template Checkpoint<float> load_checkpoint<float>(const std::string&);
template Checkpoint<double> load_checkpoint<double>(const std::string&);

}  // namespace dcbdl
