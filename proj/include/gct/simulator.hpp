#pragma once

// Synthetic subject: hidden concept selectivity -> BOLD-like responses.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "gct/core.hpp"
#include "gct/gctf.hpp"
#include "gct/lexicon.hpp"

namespace gct {

/// Double-gamma kernel: gamma(peak+1) minus undershoot_ratio * gamma(undershoot+1),
/// sampled at the TR and scaled to unit sum.
struct HrfParams {
  double peak_s = 6.0;
  double undershoot_s = 16.0;
  double undershoot_ratio = 1.0 / 6.0;
  double length_s = 32.0;

  Vector kernel(double tr_s) const;
  /// Time of the continuous kernel's maximum.
  double peak_time() const;
  void validate() const;
  Json to_json() const;
  static HrfParams from_json(const Json& j);
  bool operator==(const HrfParams&) const = default;
};

struct SubjectSpec {
  int n_voxels = 200;
  double polysemantic_fraction = 0.0;
  double null_fraction = 0.0;  ///< voxels with no concept
  double noise_sd = 1.0;
  double gain = 1.0;
  double drift_sd = 0.0;      ///< amplitude of an injected quadratic drift
  int embedding_dim = 64;
  std::uint64_t seed = 0;

  Json to_json() const;
  static SubjectSpec from_json(const Json& j);
  bool operator==(const SubjectSpec&) const = default;
};

struct SyntheticSubject {
  std::vector<VoxelId> voxel_ids;
  Matrix selectivity;  ///< n_voxels x n_concepts
  ConceptLexicon concepts;
  HrfParams hrf;
  double noise_sd = 1.0;
  std::vector<double> noise_scale;  ///< per voxel multiplier on noise_sd
  double gain = 1.0;
  double drift_sd = 0.0;
  int embedding_dim = 64;
  std::uint64_t seed = 0;
  VoxelCoords coords;  ///< flat grid layout, 1 mm pitch

  void validate() const;
  /// Rectified cosine between the subject's word embedding and each concept's
  /// keyword centroid; n_words x n_concepts.
  Matrix concept_activation(const Transcript& transcript) const;
  Json to_json() const;
  static SyntheticSubject from_json(const Json& j);
};

struct GroundTruthLedger {
  std::map<VoxelId, std::vector<std::string>> concepts;
  std::map<std::string, double> run_snr;

  /// Write-once per run id.
  void record_run(const std::string& run_id, double snr);
  Json to_json() const;
  static GroundTruthLedger from_json(const Json& j);
};

struct SubjectAndLedger {
  SyntheticSubject subject;
  GroundTruthLedger ledger;
};

SubjectAndLedger make_subject(const SubjectSpec& spec, const ConceptLexicon& concept_bank, const HrfParams& hrf = {});

/// The noise-free, pre-z-score voxel signal on the full grid.
Matrix simulate_signal(const SyntheticSubject& subject, const Transcript& transcript, const TRGrid& grid);

struct SimulatedRun {
  ResponseMatrix responses;  ///< full grid, z-scored per column
  std::vector<VoxelId> constant_voxels;
  double snr = 0.0;  ///< signal variance over noise variance, pooled
};

/// signal + seeded Gaussian noise (+ optional drift), z-scored. `run_seed`
/// separates repeated presentations of one stimulus.
SimulatedRun simulate_run(const SyntheticSubject& subject, const Transcript& transcript, const TRGrid& grid,
                          std::uint64_t run_seed = 0);

struct CorpusSpec {
  int n_stories = 20;
  int words_per_story = 600;
  int segment_words = 30;        ///< words per topical stretch
  double keyword_density = 0.25;
  double word_duration_s = 0.4;
  double duration_jitter_s = 0.1;
  double lead_in_s = 10.0;
  std::uint64_t seed = 0;

  Json to_json() const;
  static CorpusSpec from_json(const Json& j);
  bool operator==(const CorpusSpec&) const = default;
};

/// Stories alternating topical stretches (keywords of one concept mixed into
/// filler) with their timing.
std::vector<Transcript> generate_corpus(const ConceptLexicon& lexicon, const CorpusSpec& spec,
                                        const std::string& prefix = "train");

void save_subject(const std::filesystem::path& path, const SyntheticSubject& subject);
SyntheticSubject load_subject(const std::filesystem::path& path);

}  // namespace gct
