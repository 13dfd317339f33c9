#include "gct/core.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>
#include <fstream>
#include <set>
#include <sstream>

#include "gct/text.hpp"

namespace gct {

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis) {
  std::uint64_t h = basis;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = digits[value & 0xf];
    value >>= 4;
  }
  return out;
}

double standard_normal(std::uint64_t& state) {
  const double r = std::sqrt(-2.0 * std::log(uniform01(state)));
  return r * std::cos(2.0 * std::numbers::pi * uniform01(state));
}

std::uint64_t derive_seed(std::uint64_t root, std::string_view name) {
  std::uint64_t state = root ^ fnv1a64(name);
  return splitmix64(state);
}

std::uint64_t derive_seed(std::uint64_t root, std::uint64_t index) {
  std::uint64_t state = root + 0x632be59bd9b4e019ULL * (index + 1);
  return splitmix64(state);
}

// ---------------------------------------------------------------------------

Transcript::Transcript(std::string story_id, std::vector<Word> words)
    : story_id_(std::move(story_id)), words_(std::move(words)) {
  for (std::size_t i = 0; i < words_.size(); ++i) {
    const Word& w = words_[i];
    if (w.token.empty()) throw ParseError("empty token at word " + std::to_string(i));
    if (!std::isfinite(w.onset_s) || !std::isfinite(w.offset_s))
      throw ParseError("non-finite time at word " + std::to_string(i));
    if (w.offset_s < w.onset_s)
      throw OrderError("offset before onset at word " + std::to_string(i) + " ('" + w.token + "')");
    if (i > 0 && w.onset_s < words_[i - 1].onset_s)
      throw OrderError("onset " + format_double(w.onset_s) + " after onset " +
                       format_double(words_[i - 1].onset_s) + " at word " + std::to_string(i));
  }
}

std::vector<double> Transcript::onsets() const {
  std::vector<double> out;
  out.reserve(words_.size());
  for (const auto& w : words_) out.push_back(w.onset_s);
  return out;
}

double Transcript::end_time() const {
  double end = 0.0;
  for (const auto& w : words_) end = std::max(end, w.offset_s);
  return end;
}

namespace {

std::vector<std::string> split_csv_line(std::string_view line, std::size_t line_no) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (quoted) throw ParseError("unterminated quote on line " + std::to_string(line_no));
  fields.push_back(std::move(cur));
  return fields;
}

double parse_seconds(std::string_view s, std::size_t line_no) {
  auto t = trim(s);
  double v = 0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size())
    throw ParseError("bad number '" + std::string(t) + "' on line " + std::to_string(line_no));
  return v;
}

std::string quote_token(const std::string& token) {
  if (token.find_first_of(",\"") == std::string::npos) return token;
  std::string out = "\"";
  for (char c : token) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace

Transcript parse_transcript(std::string_view csv, std::string story_id) {
  std::vector<Word> words;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= csv.size()) {
    std::size_t nl = csv.find('\n', pos);
    std::string_view line = csv.substr(pos, nl == std::string_view::npos ? csv.size() - pos : nl - pos);
    pos = nl == std::string_view::npos ? csv.size() + 1 : nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (trim(line).empty()) continue;
    if (line_no == 1 && trim(line) == "token,onset_s,offset_s") continue;
    auto fields = split_csv_line(line, line_no);
    if (fields.size() != 3)
      throw ParseError("expected 3 fields on line " + std::to_string(line_no) + ", got " +
                       std::to_string(fields.size()));
    std::string token(trim(fields[0]));
    if (token.empty()) throw ParseError("empty token on line " + std::to_string(line_no));
    words.push_back({std::move(token), parse_seconds(fields[1], line_no), parse_seconds(fields[2], line_no)});
  }
  return Transcript(std::move(story_id), std::move(words));
}

Transcript load_transcript(const std::filesystem::path& path, std::optional<std::string> story_id) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open transcript " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_transcript(ss.str(), story_id.value_or(path.stem().string()));
}

std::string format_transcript(const Transcript& transcript) {
  std::string out = "token,onset_s,offset_s\n";
  for (const auto& w : transcript.words()) {
    out += quote_token(w.token);
    out += ',';
    out += format_double(w.onset_s);
    out += ',';
    out += format_double(w.offset_s);
    out += '\n';
  }
  return out;
}

void save_transcript(const std::filesystem::path& path, const Transcript& transcript) {
  write_text_file(path, format_transcript(transcript));
}

// ---------------------------------------------------------------------------

void TRGrid::validate() const {
  if (!(tr_s > 0)) throw InvalidArgument("TR must be positive");
  if (trim_head < 0 || trim_tail < 0) throw InvalidArgument("negative trim");
  if (n_volumes <= trim_head + trim_tail)
    throw TooShort("grid has " + std::to_string(n_volumes) + " volumes, trims remove " +
                   std::to_string(trim_head + trim_tail));
}

TRGrid TRGrid::covering(double duration_s, double tr_s, double tail_s) {
  TRGrid g;
  g.tr_s = tr_s;
  g.n_volumes = static_cast<int>(std::ceil((duration_s + tail_s) / tr_s)) + 1;
  g.n_volumes = std::max(g.n_volumes, g.trim_head + g.trim_tail + 1);
  return g;
}

void ResponseMatrix::validate() const {
  if (static_cast<std::size_t>(values.cols()) != voxel_ids.size())
    throw ShapeMismatch("response has " + std::to_string(values.cols()) + " columns but " +
                        std::to_string(voxel_ids.size()) + " voxel ids");
  int expected = trimmed ? grid.retained() : grid.n_volumes;
  if (values.rows() != expected)
    throw ShapeMismatch("response has " + std::to_string(values.rows()) + " rows, grid implies " +
                        std::to_string(expected));
}

std::optional<int> ResponseMatrix::column_of(VoxelId id) const {
  auto it = std::find(voxel_ids.begin(), voxel_ids.end(), id);
  if (it == voxel_ids.end()) return std::nullopt;
  return static_cast<int>(it - voxel_ids.begin());
}

// ---------------------------------------------------------------------------

std::string normalize_token(std::string_view token) {
  std::string out;
  out.reserve(token.size());
  for (unsigned char c : token) {
    if (std::isalnum(c)) {
      out.push_back(static_cast<char>(std::tolower(c)));
    } else if (c == '\'' || c == '-') {
      // keep intra-word apostrophes and hyphens ("don't", "well-known")
      if (!out.empty()) out.push_back(static_cast<char>(c));
    } else if (c >= 0x80) {
      out.push_back(static_cast<char>(c));
    }
  }
  while (!out.empty() && (out.back() == '\'' || out.back() == '-')) out.pop_back();
  return out;
}

std::vector<std::string> normalize_words(std::string_view text) {
  std::vector<std::string> out;
  for (auto& tok : split_whitespace(text)) {
    auto n = normalize_token(tok);
    if (!n.empty()) out.push_back(std::move(n));
  }
  return out;
}

std::optional<std::size_t> NGramCatalog::count_of(std::string_view text) const {
  auto it = std::lower_bound(unique.begin(), unique.end(), text,
                             [](const NGram& g, std::string_view t) { return g.text < t; });
  if (it == unique.end() || it->text != text) return std::nullopt;
  return counts[static_cast<std::size_t>(it - unique.begin())];
}

namespace {

void add_to_catalog(std::map<std::string, std::pair<int, std::size_t>>& acc,
                    const std::vector<NGramOccurrence>& occ) {
  for (const auto& o : occ) {
    auto& slot = acc[o.gram.text];
    slot.first = o.gram.n;
    slot.second += 1;
  }
}

NGramCatalog to_catalog(const std::map<std::string, std::pair<int, std::size_t>>& acc) {
  NGramCatalog cat;
  cat.unique.reserve(acc.size());
  cat.counts.reserve(acc.size());
  for (const auto& [text, v] : acc) {
    cat.unique.push_back({text, v.first});
    cat.counts.push_back(v.second);
  }
  return cat;
}

}  // namespace

NGramExtraction extract_ngrams(const Transcript& transcript, int n_max) {
  if (n_max < 1 || n_max > 3) throw InvalidArgument("n_max must be in {1,2,3}");
  std::vector<std::string> norm;
  std::vector<std::size_t> index;
  for (std::size_t i = 0; i < transcript.size(); ++i) {
    auto t = normalize_token(transcript.words()[i].token);
    if (t.empty()) continue;
    norm.push_back(std::move(t));
    index.push_back(i);
  }
  NGramExtraction out;
  for (std::size_t j = 0; j < norm.size(); ++j) {
    std::string text;
    for (int n = 1; n <= n_max && static_cast<std::size_t>(n) <= j + 1; ++n) {
      text = n == 1 ? norm[j] : norm[j + 1 - n] + " " + text;
      std::size_t w = index[j];
      out.occurrences.push_back({NGram{text, n}, transcript.words()[w].onset_s, w});
    }
  }
  std::map<std::string, std::pair<int, std::size_t>> acc;
  add_to_catalog(acc, out.occurrences);
  out.catalog = to_catalog(acc);
  return out;
}

NGramCatalog build_catalog(std::span<const Transcript> transcripts, int n_max) {
  std::map<std::string, std::pair<int, std::size_t>> acc;
  for (const auto& t : transcripts) add_to_catalog(acc, extract_ngrams(t, n_max).occurrences);
  return to_catalog(acc);
}

// ---------------------------------------------------------------------------

std::string to_string(ROIKind kind) {
  switch (kind) {
    case ROIKind::localizer: return "localizer";
    case ROIKind::candidate_micro: return "candidate_micro";
    case ROIKind::language_network: return "language_network";
  }
  return "localizer";
}

ROIKind roi_kind_from_string(std::string_view s) {
  if (s == "localizer") return ROIKind::localizer;
  if (s == "candidate_micro") return ROIKind::candidate_micro;
  if (s == "language_network") return ROIKind::language_network;
  throw ParseError("unknown ROI kind '" + std::string(s) + "'");
}

ROIMask::ROIMask(std::string n, std::vector<VoxelId> ids, ROIKind k)
    : name(std::move(n)), voxel_ids(std::move(ids)), kind(k) {
  std::sort(voxel_ids.begin(), voxel_ids.end());
  voxel_ids.erase(std::unique(voxel_ids.begin(), voxel_ids.end()), voxel_ids.end());
  if (voxel_ids.empty()) throw EmptyROI("ROI '" + name + "' has no voxels");
}

void ROIMask::check_subset_of(std::span<const VoxelId> universe) const {
  std::set<VoxelId> u(universe.begin(), universe.end());
  for (auto id : voxel_ids)
    if (!u.count(id)) throw EmptyROI("ROI '" + name + "' voxel " + std::to_string(id) + " not in subject");
}

}  // namespace gct
