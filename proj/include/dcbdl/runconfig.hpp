#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace dcbdl {

// Flat key=value run configuration; nested structure uses dotted keys.
// Unknown keys are rejected, and every command writes the resolved config
// next to its outputs.
class RunConfig {
 public:
  static RunConfig defaults();

  // defaults overlaid with the file's entries
  static RunConfig load(const std::string& path);

  void set(const std::string& key, const std::string& value);

  const std::string& get_str(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<std::int64_t> get_int_list(const std::string& key) const;

  void write(const std::string& path) const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace dcbdl
