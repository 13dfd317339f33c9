#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "gct/core.hpp"
#include "gct/signal.hpp"

namespace gct {

/// Chunked cross-validation: rows are cut into contiguous chunks, chunks are
/// shuffled with `seed` and dealt round-robin into folds.
struct CvSpec {
  int chunk_len = 40;
  int n_folds = 15;
  std::vector<double> lambdas = default_lambdas();
  std::uint64_t seed = 0;

  /// logspace(0, 4, 10)
  static std::vector<double> default_lambdas();
  Json to_json() const;
  static CvSpec from_json(const Json& j);
  bool operator==(const CvSpec&) const = default;
};

struct EncodingModel {
  std::vector<VoxelId> voxel_ids;
  Matrix weights;  ///< dim x n_voxels
  std::vector<double> lambda_per_voxel;
  std::string extractor_id;
  Vector test_r;  ///< empty until evaluate_test has been recorded
  Vector cv_r;    ///< mean held-out correlation at the chosen lambda
  FeatureSpec features;
  CvSpec cv;
  std::vector<VoxelId> skipped;  ///< zero-variance or non-finite training columns

  void validate() const;
  std::optional<Eigen::Index> column_of(VoxelId id) const;
  /// Weights summed over FIR lag blocks: base_dim x n_voxels.
  Matrix lag_summed_weights() const;
};

/// (X'X + lambda_j I)^-1 X'Y_j for every column j.
Matrix ridge_solve(const Matrix& x, const Matrix& y, std::span<const double> lambda_per_col);

EncodingModel fit_ridge_cv(const FeatureMatrix& x_train, const ResponseMatrix& y_train, const CvSpec& cv,
                           const FeatureSpec& features = {});

Matrix predict(const EncodingModel& model, const FeatureMatrix& x);

/// Column-wise Pearson r. Columns where either side has zero variance get
/// r = 0 and are listed in `zero_variance`.
Vector pearson_columns(const Matrix& a, const Matrix& b, std::vector<Eigen::Index>* zero_variance = nullptr);

struct TestEvaluation {
  std::vector<VoxelId> voxel_ids;
  Vector r;
  std::vector<VoxelId> zero_variance;
  double mean_r = 0.0;
};

/// Pearson r per model voxel between prediction and the repeat-averaged response.
TestEvaluation evaluate_test(const EncodingModel& model, const FeatureMatrix& x_test, const ResponseMatrix& y_test_avg);

/// Element-wise mean of repeated runs of the same stimulus.
ResponseMatrix average_repeats(std::span<const ResponseMatrix> repeats);

// ---------------------------------------------------------------------------

/// Uniform sampling inside the convex hull of a point cloud by rejection from
/// the bounding box; membership is an LP feasibility problem.
class ConvexHullSampler {
 public:
  explicit ConvexHullSampler(Matrix points);  ///< one point per row

  bool contains(const Vector& p, double tol = 1e-9) const;
  /// Throws DegenerateHull after `max_tries` rejections in a row.
  Vector sample(std::mt19937_64& rng, int max_tries = 100000) const;
  const Matrix& points() const { return points_; }
  const Vector& lower() const { return lo_; }
  const Vector& upper() const { return hi_; }

 private:
  Matrix points_;
  Vector lo_, hi_;
};

/// Phase-1 simplex: is there lambda >= 0 with A lambda = b? A is k x m.
bool lp_feasible(const Matrix& a, const Vector& b, double tol = 1e-9);

struct VoxelSelection {
  std::vector<VoxelId> selected;
  Matrix pc_projection;  ///< n_selected x 4
  double r_threshold = 0.15;
  std::vector<VoxelId> candidates;  ///< all voxels above threshold
  Matrix candidate_projection;      ///< hull-generating points
  Matrix pc_axes;                   ///< dim x 4
};

VoxelSelection select_voxels(const EncodingModel& model, int n = 500, double r_threshold = 0.15, std::uint64_t seed = 0,
                             int n_components = 4);

// ---------------------------------------------------------------------------

enum class CorrelationFlavor { spearman, pearson };
std::string to_string(CorrelationFlavor f);
CorrelationFlavor correlation_flavor_from_string(std::string_view s);

struct StabilityTable {
  std::vector<VoxelId> voxel_ids;
  Vector stability;
  std::size_t catalog_size = 0;
  std::string extractor_a, extractor_b;
  CorrelationFlavor flavor = CorrelationFlavor::spearman;

  std::optional<double> of(VoxelId id) const;
  Json to_json() const;
  static StabilityTable from_json(const Json& j);
};

/// Per voxel, rank (or Pearson) correlation between the two models' n-gram
/// scores over `catalog`. `voxels` empty means every voxel in both models.
StabilityTable stability_score(const EncodingModel& a, const EncodingModel& b, const NGramCatalog& catalog,
                               std::span<const VoxelId> voxels = {},
                               CorrelationFlavor flavor = CorrelationFlavor::spearman);

void save_model(const std::filesystem::path& path, const EncodingModel& model, const Json& provenance = Json::object());
EncodingModel load_model(const std::filesystem::path& path);

Json to_json(const VoxelSelection& sel);
VoxelSelection selection_from_json(const Json& j);

}  // namespace gct
