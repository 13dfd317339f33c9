#pragma once

// Pipeline configuration. On disk it is a flat TOML-style file: [section]
// headers and `key = value` lines with strings, numbers, booleans and
// one-line arrays. Every key must appear in the schema; see docs/config.md.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "gct/encoding.hpp"
#include "gct/explain.hpp"
#include "gct/llm.hpp"
#include "gct/signal.hpp"

namespace gct {

struct SimulateConfig {
  int n_concepts = 12;
  int n_voxels = 96;
  double noise_sd = 1.0;
  double gain = 12.0;
  double polysemantic_fraction = 0.0;
  double null_fraction = 0.0;
  double drift_sd = 0.0;
  int n_train_stories = 14;
  int n_test_stories = 2;
  int test_repeats = 2;
  int words_per_story = 500;
  std::string lexicon;  ///< empty = built-in toy lexicon

  bool operator==(const SimulateConfig&) const = default;
};

struct StoryConfig {
  PromptVersion prompt_version = PromptVersion::v1_coherent;
  double words_per_minute = 150.0;
  int n_candidates = 3;    ///< candidate stories before pre-validation
  int max_targets = 12;    ///< paragraphs per story
  int n_examples = 3;      ///< key n-grams injected per paragraph
  /// Also write (and evaluate) candidates with the other prompt version;
  /// only the configured version is eligible for selection.
  bool compare_versions = true;

  bool operator==(const StoryConfig&) const = default;
};

struct EvaluateConfig {
  int hrf_lag_trs = 3;
  int n_perm = 2000;
  int repeats = 1;  ///< simulated presentations averaged before scoring
  bool detrend = true;

  bool operator==(const EvaluateConfig&) const = default;
};

struct PipelineConfig {
  std::string workdir = "work";
  std::uint64_t seed = 1;
  SimulateConfig simulate;
  ExtractorSpec extractor;               ///< primary feature space
  std::uint64_t secondary_seed = 2;      ///< stability comparison feature space
  double tr_s = 2.0;
  std::vector<double> delays_s = kDefaultDelays;
  CvSpec cv;
  double r_threshold = 0.15;
  double stability_threshold = 0.6;
  double fdr_q = 0.05;
  int n_targets = 36;  ///< voxels picked by hull sampling and explained
  SascOptions sasc;
  LLMSpec llm;
  StoryConfig story;
  EvaluateConfig evaluate;

  void validate() const;
  FeatureSpec primary_features() const;
  FeatureSpec secondary_features() const;
  /// Stage-relevant parts for hashing.
  Json to_json() const;

  bool operator==(const PipelineConfig&) const = default;
};

/// Throws ConfigError naming the offending line or key.
PipelineConfig parse_config(std::string_view text);
PipelineConfig load_config(const std::filesystem::path& path);
/// Canonical text; parse_config(emit_config(c)) == c.
std::string emit_config(const PipelineConfig& config);

/// Key, type and description of every accepted key, as JSON.
Json config_schema();

}  // namespace gct
