#pragma once

// GCTF1 container: 8-byte magic "GCTFv001", little-endian u32 rows, u32 cols,
// row-major little-endian f32 payload, then a UTF-8 JSON trailer running to
// end of file. See docs/gctf1.md.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "gct/core.hpp"

namespace gct {

using Json = nlohmann::json;

inline constexpr std::string_view kGctfMagic = "GCTFv001";

struct GctfFile {
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<float> payload;  ///< row-major
  Json trailer = Json::object();

  Matrix to_matrix() const;
};

/// Payload checksum stored in the trailer as "payload_fnv1a64".
std::string payload_checksum(const std::vector<float>& payload);

std::string encode_gctf(const Matrix& values, Json trailer);
std::string encode_gctf(const GctfFile& file);
GctfFile decode_gctf(std::string_view bytes);

void write_gctf(const std::filesystem::path& path, const Matrix& values, Json trailer);
GctfFile read_gctf(const std::filesystem::path& path);

/// Values are stored as f32; doubles are rounded on save.
void save_responses(const std::filesystem::path& path, const ResponseMatrix& rm,
                    const Json& provenance = Json::object());
ResponseMatrix load_responses(const std::filesystem::path& path);

Json to_json(const TRGrid& grid);
TRGrid grid_from_json(const Json& j);

}  // namespace gct
