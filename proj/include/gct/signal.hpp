#pragma once

// Word features -> TR-aligned, lag-expanded design matrices, and response
// preprocessing (Savitzky-Golay detrend, trim, z-score).

#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "gct/core.hpp"
#include "gct/gctf.hpp"

namespace gct {

struct WordFeatureSeq {
  std::string story_id;
  std::vector<double> onsets;  ///< one per word
  Matrix rows;                 ///< n_words x dim
  std::string extractor_id;

  Eigen::Index dim() const { return rows.cols(); }
};

struct FeatureMatrix {
  TRGrid grid;
  Matrix values;                 ///< n_volumes x dim (or retained x dim when trimmed)
  std::vector<double> lag_set;  ///< seconds; empty if not FIR-expanded
  std::string extractor_id;
  bool trimmed = false;

  Eigen::Index dim() const { return values.cols(); }
  Eigen::Index base_dim() const {
    return lag_set.empty() ? values.cols() : values.cols() / static_cast<Eigen::Index>(lag_set.size());
  }
};

class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::string id() const = 0;
  virtual int dim() const = 0;
  virtual bool deterministic() const = 0;
  /// One row per transcript word.
  virtual Matrix embed(const Transcript& transcript) const = 0;
};

/// Seed of the hash embedding shared by every extractor's common component
/// and by the simulated subject's word space.
inline constexpr std::uint64_t kSemanticSeed = 0x5e3a471c0ffeeULL;

/// Each word's vector is the normalized sum of seeded Gaussian hash
/// embeddings of the n-grams (n <= context) ending at that word. With
/// shared > 0 each n-gram embedding mixes in the seed-independent embedding
/// (weight sqrt(shared)), so extractors with different seeds agree on part
/// of their geometry.
class HashedNgramExtractor final : public FeatureExtractor {
 public:
  HashedNgramExtractor(std::uint64_t seed, int dim, int context = 3, double shared = 0.0);
  std::string id() const override;
  int dim() const override { return dim_; }
  bool deterministic() const override { return true; }
  Matrix embed(const Transcript& transcript) const override;

  /// Raw (unnormalized, unit-variance entries) embedding of one n-gram text.
  Vector hash_embedding(std::string_view ngram_text) const;

 private:
  std::uint64_t seed_;
  int dim_;
  int context_;
  double shared_;
};

/// Reads `<dir>/<story_id>.gctf` word-feature files written by an exporter.
class FileFeatureExtractor final : public FeatureExtractor {
 public:
  explicit FileFeatureExtractor(std::filesystem::path dir);
  std::string id() const override { return id_; }
  int dim() const override { return dim_; }
  bool deterministic() const override { return true; }
  Matrix embed(const Transcript& transcript) const override;

 private:
  std::filesystem::path dir_;
  std::string id_;
  int dim_ = 0;
};

/// Serializable extractor description; round-trips through JSON and ids.
struct ExtractorSpec {
  std::string kind = "hashed";  ///< "hashed" | "file"
  std::uint64_t seed = 0;
  int dim = 128;
  int context = 3;
  double shared = 0.5;  ///< variance fraction from the seed-independent embedding
  std::string dir;      ///< for kind == "file"

  Json to_json() const;
  static ExtractorSpec from_json(const Json& j);
  bool operator==(const ExtractorSpec&) const = default;
};

std::unique_ptr<FeatureExtractor> make_extractor(const ExtractorSpec& spec);
std::unique_ptr<FeatureExtractor> hashed_ngram_extractor(std::uint64_t seed, int dim, int context = 3,
                                                         double shared = 0.0);

WordFeatureSeq embed_words(const FeatureExtractor& extractor, const Transcript& transcript);

/// Lanczos kernel sinc(x) sinc(x/a) on |x| < a, zero elsewhere.
double lanczos_kernel(double x, int a);

/// Row t = sum_w seq.rows(w) * L((t*tr - onset_w) / tr, window). Weights are
/// used unnormalized unless `renormalize` is set, in which case each TR's
/// weights are divided by their sum (rows with zero total weight stay zero).
FeatureMatrix lanczos_resample(const WordFeatureSeq& seq, const TRGrid& grid, int window = 3,
                               bool renormalize = false);

inline const std::vector<double> kDefaultDelays = {-8.0, -6.0, -4.0, -2.0};

/// Lag block k holds the input delayed by |delays_s[k]| seconds, so a
/// feature at stimulus volume v lands on row v + |d|/tr; rows shifted in from
/// outside the matrix are zero.
FeatureMatrix fir_expand(const FeatureMatrix& fm, std::span<const double> delays_s = kDefaultDelays);

/// Drops the trimmed head/tail rows so features align with trimmed responses.
FeatureMatrix trim_features(const FeatureMatrix& fm);

/// Window length in volumes: round(window_s / tr) bumped to the next odd.
int savgol_window_volumes(double window_s, double tr_s);

/// Subtracts a per-column Savitzky-Golay trend. At the series edges the
/// polynomial is fit on the truncated window.
ResponseMatrix savgol_detrend(const ResponseMatrix& rm, int order = 2, double window_s = 120.0);
/// The trend itself, for one column.
Vector savgol_trend(const Vector& y, int order, int window);

struct ZscoreReport {
  std::vector<VoxelId> constant_voxels;
};

/// Drops grid.trim_head / trim_tail volumes, then centers each column and
/// scales to unit population variance. Constant columns become zero and are
/// listed in `report`.
ResponseMatrix trim_and_zscore(const ResponseMatrix& rm, ZscoreReport* report = nullptr);

/// Z-scores columns in place (no trimming). Returns indices of constant columns.
std::vector<Eigen::Index> zscore_columns(Matrix& m);

/// Full response preprocessing: detrend, trim, z-score.
ResponseMatrix preprocess_responses(const ResponseMatrix& raw, ZscoreReport* report = nullptr);

/// Extractor -> Lanczos -> FIR -> optional trim, for one transcript.
struct FeatureSpec {
  ExtractorSpec extractor;
  double tr_s = 2.0;
  int lanczos_window = 3;
  bool lanczos_renormalize = false;
  std::vector<double> delays_s = kDefaultDelays;
  double word_duration_s = 0.4;  ///< isolated n-gram spacing (150 words/min)

  Json to_json() const;
  static FeatureSpec from_json(const Json& j);
  bool operator==(const FeatureSpec&) const = default;
};

FeatureMatrix story_features(const FeatureExtractor& extractor, const FeatureSpec& spec,
                             const Transcript& transcript, const TRGrid& grid, bool trim = true);

/// Vertical concatenation; grids are not merged (result keeps the first grid).
FeatureMatrix stack_rows(std::span<const FeatureMatrix> parts);
ResponseMatrix stack_rows(std::span<const ResponseMatrix> parts);

void save_features(const std::filesystem::path& path, const FeatureMatrix& fm, const Json& provenance = Json::object());
FeatureMatrix load_features(const std::filesystem::path& path);
void save_word_features(const std::filesystem::path& path, const WordFeatureSeq& seq, const Json& provenance = Json::object());
WordFeatureSeq load_word_features(const std::filesystem::path& path);

}  // namespace gct
