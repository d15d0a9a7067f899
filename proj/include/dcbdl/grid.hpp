#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dcbdl {

// 2-D field of one physical variable, indexed row-major from the north-west
// corner. Serialized as DCG1: magic "DCG1", u32 height, u32 width,
// f32 cell_size_km, u8 variable code, then height*width little-endian f32.
struct Grid {
  // diagnostic_field carries derived quantities (moments, metric maps) that
  // are exempt from the non-negativity rule of precipitation.
  enum class Variable : std::uint8_t { precip_mm_per_day = 0, elevation_m = 1, diagnostic_field = 2 };

  std::int64_t height = 0;
  std::int64_t width = 0;
  float cell_size_km = 1.0f;
  Variable variable = Variable::precip_mm_per_day;
  std::vector<float> values;  // height * width

  float& at(std::int64_t y, std::int64_t x) { return values[static_cast<std::size_t>(y * width + x)]; }
  float at(std::int64_t y, std::int64_t x) const { return values[static_cast<std::size_t>(y * width + x)]; }
  std::int64_t cells() const { return height * width; }

  static Grid make(std::int64_t h, std::int64_t w, Variable v, float cell_size_km = 1.0f);
  void validate() const;  // precip >= 0, everything finite
};

void write_dcg(const std::string& path, const Grid& g);
Grid read_dcg(const std::string& path);

// One path per line, chronological order.
void write_manifest(const std::string& path, const std::vector<std::string>& entries);
std::vector<std::string> read_manifest(const std::string& path);

}  // namespace dcbdl
