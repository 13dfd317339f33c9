#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gct/llm.hpp"
#include "gct/ngram_scoring.hpp"

namespace gct {

struct CandidateScore {
  std::string text;
  double score = 0.0;  ///< sigma units
  double mean_similar = 0.0;
  double mean_dissimilar = 0.0;
  std::vector<std::string> similar;
  std::vector<std::string> dissimilar;
};

struct Explanation {
  std::string target;
  std::string text;
  double explanation_score = 0.0;
  std::optional<double> stability;
  std::vector<std::string> top_ngrams;
  std::vector<CandidateScore> candidates;  ///< every distinct candidate, in summary order

  void validate() const;
  Json to_json() const;
  static Explanation from_json(const Json& j);
};

struct SascOptions {
  std::size_t top_n = 50;     ///< n-grams mined from the top of the table
  std::size_t sample_n = 30;  ///< random subset shown to the summarizer
  int k = 5;                  ///< summarization calls
  std::uint64_t seed = 0;

  Json to_json() const;
  static SascOptions from_json(const Json& j);
  bool operator==(const SascOptions&) const = default;
};

/// `k` summaries, each over a different random `sample_n` subset of
/// `top_ngrams` (all of them if fewer). A response that fails to parse is
/// retried once.
std::vector<std::string> summarize_candidates(LLMClient& llm, const std::vector<std::string>& top_ngrams, int k,
                                              std::uint64_t seed, std::size_t sample_n = 30);

/// (mean response to similar phrases - mean response to dissimilar phrases)
/// divided by the SD of the target's responses over the scorer's catalog.
/// Zero when that SD is zero.
CandidateScore score_explanation(LLMClient& llm, const NGramScorer& scorer, const Target& target,
                                 const std::string& candidate);

/// Rank correlation of two models' catalog scores for one target.
double target_stability(const NGramScorer& a, const NGramScorer& b, const Target& target,
                        CorrelationFlavor flavor = CorrelationFlavor::spearman);

/// Mine -> summarize -> score; returns the best candidate. `secondary` (same
/// catalog, other feature space) supplies the stability field when given.
/// Throws NoViableCandidate when no candidate scores above zero.
Explanation explain_target(LLMClient& llm, const NGramScorer& primary, const NGramScorer* secondary,
                           const Target& target, const SascOptions& options = {});

/// Greedy max-min picker over explanation texts, embedded with a hashed
/// n-gram extractor. Starts from the highest score; returns indices. A
/// heuristic aid for choosing diverse follow-up targets.
std::vector<std::size_t> pick_diverse(const std::vector<Explanation>& explanations, std::size_t n,
                                      std::uint64_t seed = 0);

}  // namespace gct
