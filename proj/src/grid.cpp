#include "dcbdl/grid.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "dcbdl/error.hpp"

namespace dcbdl {

Grid Grid::make(std::int64_t h, std::int64_t w, Variable v, float cell_size) {
  if (h <= 0 || w <= 0) throw ContractViolation("grid dimensions must be positive");
  Grid g;
  g.height = h;
  g.width = w;
  g.cell_size_km = cell_size;
  g.variable = v;
  g.values.assign(static_cast<std::size_t>(h * w), 0.0f);
  return g;
}

void Grid::validate() const {
  if (height <= 0 || width <= 0 || static_cast<std::int64_t>(values.size()) != height * width)
    throw ContractViolation("grid dimensions inconsistent with value count");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i]))
      throw NumericError("grid: non-finite value at flat index " + std::to_string(i));
    if (variable == Variable::precip_mm_per_day && values[i] < 0.0f)
      throw DomainError("grid: negative precipitation at flat index " + std::to_string(i));
  }
}

namespace {
constexpr char kMagic[4] = {'D', 'C', 'G', '1'};
}

void write_dcg(const std::string& path, const Grid& g) {
  g.validate();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os.write(kMagic, 4);
  const std::uint32_t h = static_cast<std::uint32_t>(g.height);
  const std::uint32_t w = static_cast<std::uint32_t>(g.width);
  const std::uint8_t var = static_cast<std::uint8_t>(g.variable);
  os.write(reinterpret_cast<const char*>(&h), 4);
  os.write(reinterpret_cast<const char*>(&w), 4);
  os.write(reinterpret_cast<const char*>(&g.cell_size_km), 4);
  os.write(reinterpret_cast<const char*>(&var), 1);
  os.write(reinterpret_cast<const char*>(g.values.data()),
           static_cast<std::streamsize>(g.values.size() * sizeof(float)));
  if (!os) throw IoError("write failed for " + path);
}

Grid read_dcg(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) throw IoError("bad DCG1 magic in " + path);
  std::uint32_t h = 0, w = 0;
  float cell = 0;
  std::uint8_t var = 0;
  is.read(reinterpret_cast<char*>(&h), 4);
  is.read(reinterpret_cast<char*>(&w), 4);
  is.read(reinterpret_cast<char*>(&cell), 4);
  is.read(reinterpret_cast<char*>(&var), 1);
  if (!is || h == 0 || w == 0) throw IoError("bad DCG1 header in " + path);
  Grid g = Grid::make(h, w, static_cast<Grid::Variable>(var), cell);
  is.read(reinterpret_cast<char*>(g.values.data()),
          static_cast<std::streamsize>(g.values.size() * sizeof(float)));
  if (!is) throw IoError("truncated DCG1 payload in " + path);
  return g;
}

void write_manifest(const std::string& path, const std::vector<std::string>& entries) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path + " for writing");
  for (const auto& e : entries) os << e << "\n";
  if (!os) throw IoError("write failed for " + path);
}

std::vector<std::string> read_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

}  // namespace dcbdl
