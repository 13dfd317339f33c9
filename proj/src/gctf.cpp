#include "gct/gctf.hpp"

#include <bit>
#include <cmath>
#include <cstring>

#include "gct/text.hpp"

namespace gct {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(std::string_view in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}

std::string payload_bytes(const std::vector<float>& payload) {
  std::string out;
  out.reserve(payload.size() * 4);
  for (float f : payload) put_u32(out, std::bit_cast<std::uint32_t>(f));
  return out;
}

}  // namespace

Matrix GctfFile::to_matrix() const {
  Matrix m(rows, cols);
  for (std::uint32_t r = 0; r < rows; ++r)
    for (std::uint32_t c = 0; c < cols; ++c) m(r, c) = payload[static_cast<std::size_t>(r) * cols + c];
  return m;
}

std::string payload_checksum(const std::vector<float>& payload) {
  return hex64(fnv1a64(payload_bytes(payload)));
}

std::string encode_gctf(const GctfFile& file) {
  if (file.payload.size() != static_cast<std::size_t>(file.rows) * file.cols)
    throw ShapeMismatch("GCTF payload size does not match rows*cols");
  std::string out(kGctfMagic);
  put_u32(out, file.rows);
  put_u32(out, file.cols);
  out += payload_bytes(file.payload);
  Json trailer = file.trailer;
  trailer["payload_fnv1a64"] = payload_checksum(file.payload);
  out += trailer.dump();
  return out;
}

std::string encode_gctf(const Matrix& values, Json trailer) {
  GctfFile f;
  f.rows = static_cast<std::uint32_t>(values.rows());
  f.cols = static_cast<std::uint32_t>(values.cols());
  f.payload.resize(static_cast<std::size_t>(f.rows) * f.cols);
  for (std::uint32_t r = 0; r < f.rows; ++r)
    for (std::uint32_t c = 0; c < f.cols; ++c)
      f.payload[static_cast<std::size_t>(r) * f.cols + c] = static_cast<float>(values(r, c));
  f.trailer = std::move(trailer);
  return encode_gctf(f);
}

GctfFile decode_gctf(std::string_view bytes) {
  if (bytes.size() < 16 || bytes.substr(0, 8) != kGctfMagic) throw FormatError("not a GCTF1 file (bad magic)");
  GctfFile f;
  f.rows = get_u32(bytes, 8);
  f.cols = get_u32(bytes, 12);
  std::size_t n = static_cast<std::size_t>(f.rows) * f.cols;
  if (bytes.size() < 16 + 4 * n) throw FormatError("GCTF1 payload truncated");
  f.payload.resize(n);
  for (std::size_t i = 0; i < n; ++i) f.payload[i] = std::bit_cast<float>(get_u32(bytes, 16 + 4 * i));
  auto trailer = bytes.substr(16 + 4 * n);
  if (trim(trailer).empty()) {
    f.trailer = Json::object();
  } else {
    try {
      f.trailer = Json::parse(trailer);
    } catch (const Json::exception& e) {
      throw FormatError(std::string("GCTF1 trailer is not valid JSON: ") + e.what());
    }
  }
  if (!f.trailer.is_object()) throw FormatError("GCTF1 trailer must be a JSON object");
  if (f.trailer.contains("payload_fnv1a64")) {
    if (f.trailer["payload_fnv1a64"].get<std::string>() != payload_checksum(f.payload))
      throw FormatError("GCTF1 payload checksum mismatch");
  }
  return f;
}

void write_gctf(const std::filesystem::path& path, const Matrix& values, Json trailer) {
  write_text_file(path, encode_gctf(values, std::move(trailer)));
}

GctfFile read_gctf(const std::filesystem::path& path) { return decode_gctf(read_text_file(path)); }

Json to_json(const TRGrid& g) {
  return Json{{"tr_s", g.tr_s}, {"n_volumes", g.n_volumes}, {"trim_head", g.trim_head}, {"trim_tail", g.trim_tail}};
}

TRGrid grid_from_json(const Json& j) {
  TRGrid g;
  g.tr_s = j.at("tr_s").get<double>();
  g.n_volumes = j.at("n_volumes").get<int>();
  g.trim_head = j.value("trim_head", 10);
  g.trim_tail = j.value("trim_tail", 10);
  return g;
}

void save_responses(const std::filesystem::path& path, const ResponseMatrix& rm, const Json& provenance) {
  rm.validate();
  Json t{{"kind", "responses"}, {"voxel_ids", rm.voxel_ids}, {"grid", to_json(rm.grid)},
         {"trimmed", rm.trimmed}, {"provenance", provenance}};
  write_gctf(path, rm.values, std::move(t));
}

ResponseMatrix load_responses(const std::filesystem::path& path) {
  auto f = read_gctf(path);
  const auto& t = f.trailer;
  if (t.value("kind", "") != "responses") throw FormatError(path.string() + " is not a responses file");
  ResponseMatrix rm;
  rm.grid = grid_from_json(t.at("grid"));
  rm.voxel_ids = t.at("voxel_ids").get<std::vector<VoxelId>>();
  rm.trimmed = t.value("trimmed", false);
  rm.values = f.to_matrix();
  rm.validate();
  return rm;
}

}  // namespace gct
