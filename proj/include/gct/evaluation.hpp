#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gct/core.hpp"
#include "gct/ngram_scoring.hpp"
#include "gct/stats.hpp"
#include "gct/storygen.hpp"

namespace gct {

/// Target `target` is expected to be driven by paragraph `paragraph`.
struct Assignment {
  std::size_t target = 0;
  std::size_t paragraph = 0;
  bool operator==(const Assignment&) const = default;
};

/// Assignments from paragraph target names (exact match on Target::name).
std::vector<Assignment> assignments_from_story(const Story& story, const std::vector<std::string>& target_names);

struct PooledTest {
  double mean_score = 0.0;
  double p = 1.0;
};

struct DrivingReport {
  std::string story_id;
  std::vector<std::string> targets;
  std::vector<Assignment> assignments;
  Vector scores;  ///< per assignment, sigma above the other paragraphs
  Matrix cross;   ///< targets x paragraphs
  Vector p_values;                ///< per assignment; empty until tested
  std::vector<bool> significant;  ///< BH at fdr_q
  std::optional<PooledTest> pooled;
  double fdr_q = 0.05;
  int hrf_lag_trs = 3;
  int n_perm = 0;
  bool exhaustive = false;
  std::uint64_t seed = 0;

  /// Fraction of assignments with a positive score.
  double fraction_positive() const;
  Json to_json() const;
  std::string to_csv() const;
};

/// Response timecourse of a target: response columns weighted by the target.
Vector target_timecourse(const ResponseMatrix& responses, const Target& target);

/// Rows of `responses` inside each paragraph's lagged window. Throws
/// TimingMismatch if a paragraph has no rows.
std::vector<std::vector<int>> paragraph_rows(const ResponseMatrix& responses, const Story& story, int hrf_lag_trs);

/// cross(t, p) = mean over paragraph p's rows minus the mean of the other
/// paragraphs' means.
Matrix cross_matrix(const Matrix& timecourses, const std::vector<std::vector<int>>& rows);

DrivingReport driving_scores(const ResponseMatrix& responses, const Story& story, const std::vector<Target>& targets,
                             int hrf_lag_trs = 3);
DrivingReport driving_scores(const ResponseMatrix& responses, const Story& story, const std::vector<Target>& targets,
                             const std::vector<Assignment>& assignments, int hrf_lag_trs = 3);

struct PermutationOptions {
  int n_perm = 10000;
  std::uint64_t seed = 0;
  /// Enumerate all paragraphs exactly when there are at most this many.
  std::size_t exhaustive_max_paragraphs = 8;
  double fdr_q = 0.05;
};

/// Per assignment: the driving paragraph is replaced by a random paragraph
/// (any of the story's paragraphs). Monte-Carlo p = (1 + #null >= obs) /
/// (1 + n_perm); exhaustive p = #{p' : cross(t, p') >= obs} / P. The pooled
/// test permutes every assignment independently and compares the mean
/// score. Fills p_values, significant, pooled.
void permutation_test(DrivingReport& report, const PermutationOptions& options = {});

/// Benjamini-Hochberg step-up.
std::vector<bool> bh_fdr(std::span<const double> pvals, double q = 0.05);

/// "p=0.020" for p >= 0.001, otherwise "p<10^-k".
std::string format_p(double p);

struct RoiDrivingReport {
  DrivingReport report;  ///< on ROI-mean timecourses
  std::map<std::string, std::map<VoxelId, double>> voxel_scores;  ///< roi -> voxel -> score on that ROI's paragraphs
  Json to_json() const;
};

/// ROI targets are matched to paragraphs by ROI name (the paragraph target
/// string equals ROIMask::name).
RoiDrivingReport roi_driving(const ResponseMatrix& responses, const Story& story, const std::vector<ROIMask>& rois,
                             int hrf_lag_trs = 3);

/// One-tailed Welch t-test: ROI-mean response during its paragraphs versus
/// the rest of the story's paragraph rows.
stats::TTest micro_roi_ttest(const ResponseMatrix& responses, const Story& story, const ROIMask& roi,
                             int hrf_lag_trs = 3);

struct CandidateCircle {
  VoxelId center = 0;  ///< mask voxel nearest the lattice point
  VoxelCoord lattice_point;
  double radius_mm = 0.0;
  std::vector<VoxelId> members;
};

struct CandidateROISet {
  std::vector<CandidateCircle> circles;
  std::vector<std::size_t> stable;  ///< indices passing the stability filter
  std::vector<ROIMask> masks() const;
  Json to_json() const;
};

/// Hexagonal lattice (spacing_mm) over the mask's x/y coordinates; members
/// are mask voxels strictly closer than radius_mm to the lattice point.
/// Circles without members are dropped.
CandidateROISet candidate_roi_grid(const VoxelCoords& mask, double radius_mm = 4.0, double spacing_mm = 8.0);

/// Keeps circles with stability >= threshold.
void filter_stable(CandidateROISet& set, std::span<const double> stability, double threshold = 0.6);

struct DrivingVector {
  std::string roi;
  Vector scores;
};

double cosine(const Vector& a, const Vector& b);

struct SimilarityResult {
  double observed = 0.0;  ///< mean pairwise cosine
  std::vector<double> pair_cosines;
  std::vector<double> null_cosines;
  double percentile = 0.0;  ///< 100 * fraction of null cosines <= observed
  double p = 1.0;           ///< one-tailed t-test, observed pairs > null
};

/// Null pairs are drawn from `null_pool` (driving vectors of random
/// similarly-sized ROIs).
SimilarityResult selectivity_similarity(const std::vector<DrivingVector>& vectors,
                                        const std::vector<DrivingVector>& null_pool, int n_null = 1000,
                                        std::uint64_t seed = 0);

struct LockedResponse {
  std::vector<double> lags_s;
  Vector curve;  ///< mean response per lag
  std::vector<int> counts;
  double peak_lag_s = 0.0;
  double test_lag_s = 6.0;
  stats::TTest peak_test;  ///< one-sided, response at test_lag_s > 0
  std::size_t n_events = 0;
  Json to_json() const;
};

/// Onsets of every occurrence (last-word onset) of the given n-grams.
std::vector<double> key_ngram_onsets(const Transcript& transcript, const std::vector<std::string>& key_ngrams);

LockedResponse ngram_locked_response(const ResponseMatrix& responses, const Target& target,
                                     std::span<const double> onsets_s, int window_trs = 8, double test_lag_s = 6.0);

struct Reconstruction {
  Vector pattern;  ///< unit norm
  double r = 0.0;
};

/// Sum over rows of cos(row, target) * row on the patch columns, normalized,
/// and its Pearson r with the target.
Reconstruction checkerboard_reconstruct(const ResponseMatrix& responses, const std::vector<VoxelId>& patch,
                                        const Vector& target);

struct AlternativeReport {
  DrivingReport targets;
  DrivingReport alternatives;
  Json to_json() const;
};

/// `alternatives[i]` shares the explanation of `targets[i]` and is scored on
/// the paragraphs that drive `targets[i]`.
AlternativeReport alternative_voxel_check(const ResponseMatrix& responses, const Story& story,
                                          const std::vector<Target>& targets, const std::vector<Target>& alternatives,
                                          const PermutationOptions& options = {}, int hrf_lag_trs = 3);

}  // namespace gct
