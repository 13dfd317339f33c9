#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "gct/error.hpp"

namespace gct {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using VoxelId = std::int64_t;

// ---------------------------------------------------------------------------
// Hashing and seed derivation. Everything random in the library is derived
// from these so results do not depend on the standard library's
// distribution implementations where bit-exactness matters.

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t value);

/// splitmix64 step; good enough to expand one 64-bit seed into a stream.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Uniform double in (0, 1] from 53 bits of a splitmix stream.
inline double uniform01(std::uint64_t& state) {
  return (static_cast<double>(splitmix64(state) >> 11) + 1.0) * 0x1.0p-53;
}

/// Standard normal draw (Box-Muller, one value per call).
double standard_normal(std::uint64_t& state);

/// Named substream of a root seed.
std::uint64_t derive_seed(std::uint64_t root, std::string_view name);
std::uint64_t derive_seed(std::uint64_t root, std::uint64_t index);

// ---------------------------------------------------------------------------

struct Word {
  std::string token;
  double onset_s = 0.0;
  double offset_s = 0.0;

  bool operator==(const Word&) const = default;
};

/// Time-stamped word sequence of one stimulus story. Validated on construction.
class Transcript {
 public:
  Transcript() = default;
  Transcript(std::string story_id, std::vector<Word> words);

  const std::string& story_id() const { return story_id_; }
  const std::vector<Word>& words() const { return words_; }
  std::size_t size() const { return words_.size(); }
  bool empty() const { return words_.empty(); }
  std::vector<double> onsets() const;
  /// Offset of the last word, 0 for an empty transcript.
  double end_time() const;

  bool operator==(const Transcript&) const = default;

 private:
  std::string story_id_;
  std::vector<Word> words_;
};

/// CSV `token,onset_s,offset_s`, one header line. The story id defaults to
/// the file stem.
Transcript load_transcript(const std::filesystem::path& path,
                           std::optional<std::string> story_id = std::nullopt);
Transcript parse_transcript(std::string_view csv, std::string story_id);
void save_transcript(const std::filesystem::path& path, const Transcript& transcript);
std::string format_transcript(const Transcript& transcript);

/// Acquisition grid. Volume v is sampled at time v * tr_s.
struct TRGrid {
  double tr_s = 2.0;
  int n_volumes = 0;
  int trim_head = 10;
  int trim_tail = 10;

  void validate() const;
  double volume_time(int v) const { return v * tr_s; }
  int retained() const { return n_volumes - trim_head - trim_tail; }
  /// Smallest grid with the default trims covering [0, duration_s + tail_s].
  static TRGrid covering(double duration_s, double tr_s = 2.0, double tail_s = 20.0);

  bool operator==(const TRGrid&) const = default;
};

/// BOLD responses, one column per voxel. When `trimmed` is set, row r holds
/// acquisition volume r + grid.trim_head.
struct ResponseMatrix {
  TRGrid grid;
  std::vector<VoxelId> voxel_ids;
  Matrix values;
  bool trimmed = false;

  void validate() const;
  int first_volume() const { return trimmed ? grid.trim_head : 0; }
  double row_time(int r) const { return grid.volume_time(r + first_volume()); }
  std::optional<int> column_of(VoxelId id) const;
};

// ---------------------------------------------------------------------------
// N-grams

struct NGram {
  std::string text;  ///< lowercase tokens joined by single spaces
  int n = 1;

  auto operator<=>(const NGram&) const = default;
};

struct NGramOccurrence {
  NGram gram;
  double onset_s = 0.0;  ///< onset of the n-gram's last word
  std::size_t last_word = 0;
};

struct NGramCatalog {
  std::vector<NGram> unique;      ///< sorted by (text)
  std::vector<std::size_t> counts;  ///< occurrences, parallel to `unique`

  std::size_t size() const { return unique.size(); }
  bool empty() const { return unique.empty(); }
  std::optional<std::size_t> count_of(std::string_view text) const;
};

struct NGramExtraction {
  std::vector<NGramOccurrence> occurrences;
  NGramCatalog catalog;
};

/// Lowercases and strips punctuation; returns "" for pure punctuation.
std::string normalize_token(std::string_view token);
/// Normalizes every whitespace-separated token and drops empty ones.
std::vector<std::string> normalize_words(std::string_view text);

/// Every contiguous window of 1..n_max normalized words, in order of the last
/// word, shorter windows first. Words that normalize to "" are skipped.
NGramExtraction extract_ngrams(const Transcript& transcript, int n_max = 3);
/// Union catalog over several transcripts.
NGramCatalog build_catalog(std::span<const Transcript> transcripts, int n_max = 3);

// ---------------------------------------------------------------------------

enum class ROIKind { localizer, candidate_micro, language_network };

std::string to_string(ROIKind kind);
ROIKind roi_kind_from_string(std::string_view s);

struct ROIMask {
  std::string name;
  std::vector<VoxelId> voxel_ids;  ///< sorted, unique
  ROIKind kind = ROIKind::localizer;

  ROIMask() = default;
  ROIMask(std::string name, std::vector<VoxelId> ids, ROIKind kind = ROIKind::localizer);
  /// Throws EmptyROI if any member is outside `universe`.
  void check_subset_of(std::span<const VoxelId> universe) const;
};

/// Optional voxel coordinates, carried as metadata (mm, flat-map x/y plus z).
struct VoxelCoord {
  double x = 0, y = 0, z = 0;
};
using VoxelCoords = std::map<VoxelId, VoxelCoord>;

}  // namespace gct
