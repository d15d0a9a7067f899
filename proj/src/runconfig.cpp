#include "dcbdl/runconfig.hpp"

#include <fstream>
#include <sstream>

#include "dcbdl/error.hpp"

namespace dcbdl {

namespace {

const std::map<std::string, std::string>& default_values() {
  static const std::map<std::string, std::string> defaults = {
      {"synthetic.seed", "1"},
      {"synthetic.days", "200"},
      {"synthetic.height", "64"},
      {"synthetic.width", "64"},
      {"synthetic.correlation_length", "4"},
      {"synthetic.rain_fraction", "0.3"},
      {"synthetic.log_mu", "1.0"},
      {"synthetic.log_sigma", "1.0"},
      {"synthetic.elevation_coeff", "0.5"},
      {"data.factor", "4"},
      {"data.patch_size", "64"},
      {"data.stride", "48"},
      {"network.kernels", "9,3,5"},
      {"network.filters", "64,64"},
      {"train.learning_rate", "1e-4"},
      {"train.batch_size", "10"},
      {"train.iterations", "10000"},
      {"train.tau", "1e-5"},
      {"train.length_scale", "1.0"},
      {"train.seed", "7"},
      {"train.log_interval", "100"},
      {"train.rain_threshold", "0.5"},
      {"predict.passes", "50"},
      {"predict.seed", "99"},
      {"predict.cdf_mode", "matched"},
      {"predict.model", "gaussian"},
      {"eval.days_per_year", "365"},
      {"eval.wet_only", "true"},
      {"eval.calibration_bins", "100"},
      {"eval.seed", "123"},
  };
  return defaults;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

RunConfig RunConfig::defaults() {
  RunConfig c;
  c.values_ = default_values();
  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config file " + path);
  RunConfig c = defaults();
  std::string line;
  std::int64_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ContractViolation("config " + path + ":" + std::to_string(lineno) +
                              ": expected key=value");
    c.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  return c;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (default_values().find(key) == default_values().end())
    throw ContractViolation("unknown config key: " + key);
  values_[key] = value;
}

const std::string& RunConfig::get_str(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ContractViolation("unknown config key: " + key);
  return it->second;
}

double RunConfig::get_double(const std::string& key) const {
  const auto& s = get_str(key);
  std::size_t pos = 0;
  const double v = std::stod(s, &pos);
  if (pos != s.size()) throw ContractViolation("config key " + key + ": bad number '" + s + "'");
  return v;
}

std::int64_t RunConfig::get_int(const std::string& key) const {
  const auto& s = get_str(key);
  std::size_t pos = 0;
  const double v = std::stod(s, &pos);  // accept 1e4 style
  if (pos != s.size() || v != static_cast<double>(static_cast<std::int64_t>(v)))
    throw ContractViolation("config key " + key + ": bad integer '" + s + "'");
  return static_cast<std::int64_t>(v);
}

bool RunConfig::get_bool(const std::string& key) const {
  const auto& s = get_str(key);
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ContractViolation("config key " + key + ": bad boolean '" + s + "'");
}

std::vector<std::int64_t> RunConfig::get_int_list(const std::string& key) const {
  const auto& s = get_str(key);
  std::vector<std::int64_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    out.push_back(std::stoll(item));
  }
  if (out.empty()) throw ContractViolation("config key " + key + ": empty list");
  return out;
}

void RunConfig::write(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path + " for writing");
  for (const auto& [k, v] : values_) os << k << "=" << v << "\n";
  if (!os) throw IoError("write failed for " + path);
}

}  // namespace dcbdl
