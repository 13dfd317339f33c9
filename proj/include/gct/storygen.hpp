#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "gct/core.hpp"
#include "gct/encoding.hpp"
#include "gct/llm.hpp"
#include "gct/ngram_scoring.hpp"

namespace gct {

struct Paragraph {
  std::string text;
  std::vector<std::string> targets;       ///< target names; two for pair paragraphs
  std::vector<std::string> explanations;  ///< topics given to the LLM
  std::vector<std::string> examples;      ///< injected key n-grams
  std::string suffix;
  bool multi = false;  ///< pair or polysemantic paragraph
  bool compliance_failed = false;
  std::vector<std::string> banned_hits;

  bool operator==(const Paragraph&) const = default;
};

struct LoggedCall {
  Conversation prompt;
  std::string response;
  bool operator==(const LoggedCall&) const = default;
};

enum class StoryMode { single, pair, polysemantic, selective };
std::string to_string(StoryMode m);
StoryMode story_mode_from_string(std::string_view s);

struct Story {
  std::string story_id;
  std::vector<Paragraph> paragraphs;
  std::uint64_t seed = 0;
  PromptVersion prompt_version = PromptVersion::v1_coherent;
  StoryMode mode = StoryMode::single;
  double words_per_minute = 150.0;
  double lead_in_s = 10.0;  ///< silence before the first word
  double tail_s = 20.0;     ///< acquisition continues this long after the last word
  std::vector<LoggedCall> log;

  void validate() const;
  double seconds_per_word() const { return 60.0 / words_per_minute; }
  /// Words of all paragraphs at the presentation cadence.
  Transcript transcript() const;
  /// [onset of first word, offset of last word) per paragraph, seconds.
  std::vector<std::pair<double, double>> paragraph_spans() const;
  TRGrid grid(double tr_s = 2.0) const;
  std::vector<std::string> compliance_failures() const;

  Json to_json() const;
  static Story from_json(const Json& j);
  bool operator==(const Story&) const = default;
};

void save_story(const std::filesystem::path& path, const Story& story);
Story load_story(const std::filesystem::path& path);

/// One unit of a story request. Single mode: one target, one explanation.
/// Pair mode: up to two targets and explanations written into one paragraph.
/// Polysemantic mode: one target with two explanations, one paragraph each.
struct StorySegment {
  std::vector<std::string> targets;
  std::vector<std::string> explanations;
  std::vector<std::string> examples;
  std::string suffix;
  std::vector<std::string> banned_terms;
};

struct StoryOptions {
  PromptVersion version = PromptVersion::v1_coherent;
  double words_per_minute = 150.0;
  std::size_t max_paragraphs = 17;
};

Story generate_story(LLMClient& llm, const std::vector<StorySegment>& segments, StoryMode mode, std::uint64_t seed,
                     const StoryOptions& options = {});

/// Built-in ROI suffix table; empty for unknown names.
std::string roi_suffix(std::string_view roi_name);
/// Lexical ban list implied by a suffix (quoted names).
std::vector<std::string> banned_terms_for_suffix(std::string_view suffix);

struct SelectiveEntry {
  std::string roi;
  std::string explanation;
  std::vector<std::string> examples;
  std::string suffix;                     ///< empty: roi_suffix(roi)
  std::vector<std::string> banned_terms;  ///< added to the suffix's list
};

/// Paragraphs driving `target_roi` (one per entry of that ROI), each prompt
/// carrying the ROI suffix plus an exclusion clause naming the explanations
/// of `suppress_rois`. Compliance with the ban lists is checked lexically;
/// a violating paragraph is retried once, then kept and flagged.
Story generate_selective_story(LLMClient& llm, const std::string& target_roi, const std::vector<std::string>& suppress_rois,
                               const std::vector<SelectiveEntry>& explanations, std::uint64_t seed,
                               const StoryOptions& options = {});

/// Banned terms found in `text` (case-insensitive, whole-word/phrase).
std::vector<std::string> banned_hits(std::string_view text, const std::vector<std::string>& banned);

enum class ZAxis { per_explanation, per_paragraph };

struct MatchMatrix {
  Matrix fraction;  ///< paragraphs x explanations, relevant-trigram fraction
  Matrix z;         ///< z-scored along `axis`
  ZAxis axis = ZAxis::per_explanation;
  Json to_json() const;
};

/// Contiguous word trigrams of a paragraph (the whole text if shorter).
std::vector<std::string> paragraph_trigrams(std::string_view text);

MatchMatrix matching_score(LLMClient& llm, const Story& story, const std::vector<std::string>& explanations,
                           ZAxis axis = ZAxis::per_explanation);

/// Volumes v with v * tr in [start, end), shifted by `hrf_lag_trs`.
std::vector<int> paragraph_volumes(const Story& story, const TRGrid& grid, std::size_t paragraph, int hrf_lag_trs);

struct Prevalidation {
  std::vector<std::string> targets;
  Matrix window_mean;  ///< targets x paragraphs, mean prediction over the paragraph window
  Matrix relative;     ///< window_mean minus the story mean, in SDs of the prediction
  int hrf_lag_trs = 3;
  /// Mean of cells (target, paragraph) where the paragraph lists the target.
  double mean_diagonal(const Story& story) const;
  Json to_json() const;
};

Prevalidation encoding_prevalidation(const EncodingModel& model, const Story& story, const std::vector<Target>& targets,
                                     int hrf_lag_trs = 3);

/// Indices of the best `k` candidates by mean prevalidation diagonal,
/// descending; ties keep candidate order.
std::vector<std::size_t> select_best_stories(const std::vector<Story>& candidates, const EncodingModel& model,
                                             const std::vector<Target>& targets, std::size_t k, int hrf_lag_trs = 3);

}  // namespace gct
