#pragma once

// Scoring isolated phrases through an encoding model. A phrase's words are
// placed at consecutive onsets (FeatureSpec::word_duration_s apart) with no
// surrounding context, pushed through extractor -> Lanczos -> FIR on a grid
// padded so that no lagged row falls off the end, and the predicted response
// is summed over the grid.

#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gct/core.hpp"
#include "gct/encoding.hpp"

namespace gct {

/// A linear read-out of model voxels: a voxel, an ROI mean, or an ROI mean
/// minus the mean of other ROI means.
struct Target {
  std::string name;
  std::vector<std::pair<VoxelId, double>> weights;

  static Target voxel(VoxelId id);
  static Target roi(const ROIMask& roi);
  static Target contrast(const ROIMask& roi, std::span<const ROIMask> suppress);

  Json to_json() const;
  static Target from_json(const Json& j);
};

/// Coefficients over the model's voxel columns. Throws ShapeMismatch if a
/// target voxel is missing from the model.
Vector target_coefficients(const EncodingModel& model, const Target& target);

/// Literal pipeline rows: one summed FIR design row per phrase (N x dim*lags).
Matrix phrase_design(const FeatureExtractor& extractor, const FeatureSpec& spec, std::span<const std::string> phrases);
/// Same quantity folded over lags: N x base_dim. Row i times the
/// lag-summed weights equals phrase_design row i times the full weights.
Matrix phrase_design_folded(const FeatureExtractor& extractor, const FeatureSpec& spec,
                            std::span<const std::string> phrases);

struct NGramScoreTable {
  std::string target;
  std::vector<std::pair<NGram, double>> scored;  ///< descending; ties by text

  std::vector<std::string> top_texts(std::size_t k) const;
};

/// Caches the folded catalog design for one model so repeated queries
/// (targets, phrases) cost one matrix-vector product each.
class NGramScorer {
 public:
  NGramScorer(const EncodingModel& model, NGramCatalog catalog);

  const EncodingModel& model() const { return *model_; }
  const NGramCatalog& catalog() const { return catalog_; }

  Vector catalog_scores(const Target& target) const;
  /// N x k scores for the given model voxels.
  Matrix catalog_scores(std::span<const VoxelId> voxels) const;
  Vector phrase_scores(const Target& target, std::span<const std::string> phrases) const;
  /// Sample SD of the target's scores over the catalog.
  double catalog_sd(const Target& target) const;
  NGramScoreTable table(const Target& target) const;

 private:
  Vector target_weights(const Target& target) const;

  std::shared_ptr<const EncodingModel> model_;
  NGramCatalog catalog_;
  std::unique_ptr<FeatureExtractor> extractor_;
  Matrix folded_;          ///< N x base_dim
  Matrix summed_weights_;  ///< base_dim x n_voxels
};

NGramScoreTable score_ngrams(const EncodingModel& model, const Target& target, const NGramCatalog& catalog);

}  // namespace gct
