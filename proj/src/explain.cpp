#include "gct/explain.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "gct/stats.hpp"
#include "gct/text.hpp"

namespace gct {

void Explanation::validate() const {
  if (trim(text).empty()) throw InvalidArgument("explanation text is empty");
  if (split_whitespace(text).size() > 12) throw InvalidArgument("explanation longer than 12 words: " + text);
  if (!std::isfinite(explanation_score)) throw InvalidArgument("explanation score is not finite");
}

Json Explanation::to_json() const {
  Json cands = Json::array();
  for (const auto& c : candidates)
    cands.push_back({{"text", c.text},
                     {"score", c.score},
                     {"mean_similar", c.mean_similar},
                     {"mean_dissimilar", c.mean_dissimilar},
                     {"similar", c.similar},
                     {"dissimilar", c.dissimilar}});
  Json j{{"target", target},
         {"text", text},
         {"explanation_score", explanation_score},
         {"top_ngrams", top_ngrams},
         {"candidates", cands}};
  j["stability"] = stability ? Json(*stability) : Json(nullptr);
  return j;
}

Explanation Explanation::from_json(const Json& j) {
  Explanation e;
  e.target = j.at("target").get<std::string>();
  e.text = j.at("text").get<std::string>();
  e.explanation_score = j.at("explanation_score").get<double>();
  if (j.contains("stability") && !j["stability"].is_null()) e.stability = j["stability"].get<double>();
  e.top_ngrams = j.value("top_ngrams", std::vector<std::string>{});
  for (const auto& c : j.value("candidates", Json::array())) {
    CandidateScore s;
    s.text = c.at("text").get<std::string>();
    s.score = c.at("score").get<double>();
    s.mean_similar = c.value("mean_similar", 0.0);
    s.mean_dissimilar = c.value("mean_dissimilar", 0.0);
    s.similar = c.value("similar", std::vector<std::string>{});
    s.dissimilar = c.value("dissimilar", std::vector<std::string>{});
    e.candidates.push_back(std::move(s));
  }
  return e;
}

Json SascOptions::to_json() const {
  return {{"top_n", top_n}, {"sample_n", sample_n}, {"k", k}, {"seed", seed}};
}

SascOptions SascOptions::from_json(const Json& j) {
  SascOptions o;
  o.top_n = j.value("top_n", o.top_n);
  o.sample_n = j.value("sample_n", o.sample_n);
  o.k = j.value("k", o.k);
  o.seed = j.value("seed", o.seed);
  return o;
}

namespace {

/// First `m` entries of a seeded Fisher-Yates shuffle of `items`.
std::vector<std::string> sample_without_replacement(const std::vector<std::string>& items, std::size_t m,
                                                    std::uint64_t seed) {
  std::vector<std::string> v = items;
  std::uint64_t state = seed;
  m = std::min(m, v.size());
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(splitmix64(state) % (v.size() - i));
    std::swap(v[i], v[j]);
  }
  v.resize(m);
  return v;
}

template <class Parse>
auto ask_with_retry(LLMClient& llm, const std::string& prompt, Parse&& parse) {
  try {
    return parse(llm.complete(prompt));
  } catch (const ParseError&) {
    return parse(llm.complete(prompt));
  }
}

double mean_of(const Vector& v) { return v.size() ? v.mean() : 0.0; }

}  // namespace

std::vector<std::string> summarize_candidates(LLMClient& llm, const std::vector<std::string>& top_ngrams, int k,
                                              std::uint64_t seed, std::size_t sample_n) {
  if (top_ngrams.empty()) throw InvalidArgument("no n-grams to summarize");
  if (k < 1) throw InvalidArgument("candidate count must be positive");
  std::vector<std::string> out;
  for (int i = 0; i < k; ++i) {
    auto subset = sample_without_replacement(top_ngrams, sample_n, derive_seed(seed, static_cast<std::uint64_t>(i)));
    out.push_back(ask_with_retry(llm, prompts::summarize(subset), [](const std::string& r) { return prompts::parse_summary(r); }));
  }
  return out;
}

CandidateScore score_explanation(LLMClient& llm, const NGramScorer& scorer, const Target& target,
                                 const std::string& candidate) {
  if (trim(candidate).empty()) throw InvalidArgument("candidate explanation is empty");
  auto list = [](const std::string& r) { return prompts::parse_bulleted_list(r); };
  CandidateScore s;
  s.text = candidate;
  s.similar = ask_with_retry(llm, prompts::similar_phrases(candidate), list);
  s.dissimilar = ask_with_retry(llm, prompts::dissimilar_phrases(candidate), list);
  s.mean_similar = mean_of(scorer.phrase_scores(target, s.similar));
  s.mean_dissimilar = mean_of(scorer.phrase_scores(target, s.dissimilar));
  const double sd = scorer.catalog_sd(target);
  s.score = sd > 0.0 ? (s.mean_similar - s.mean_dissimilar) / sd : 0.0;
  return s;
}

double target_stability(const NGramScorer& a, const NGramScorer& b, const Target& target, CorrelationFlavor flavor) {
  if (a.catalog().unique != b.catalog().unique) throw ShapeMismatch("stability needs both models scored on one catalog");
  const Vector sa = a.catalog_scores(target), sb = b.catalog_scores(target);
  return flavor == CorrelationFlavor::spearman ? stats::spearman(stats::span_of(sa), stats::span_of(sb))
                                               : stats::pearson(stats::span_of(sa), stats::span_of(sb));
}

Explanation explain_target(LLMClient& llm, const NGramScorer& primary, const NGramScorer* secondary,
                           const Target& target, const SascOptions& options) {
  Explanation e;
  e.target = target.name;
  e.top_ngrams = primary.table(target).top_texts(options.top_n);
  auto raw = summarize_candidates(llm, e.top_ngrams, options.k, derive_seed(options.seed, target.name), options.sample_n);
  std::vector<std::string> distinct;
  for (auto& c : raw)
    if (std::find(distinct.begin(), distinct.end(), c) == distinct.end()) distinct.push_back(c);
  for (const auto& c : distinct) e.candidates.push_back(score_explanation(llm, primary, target, c));

  // argmax; ties keep the earliest candidate
  const CandidateScore* best = &e.candidates.front();
  for (const auto& c : e.candidates)
    if (c.score > best->score) best = &c;
  if (!(best->score > 0.0))
    throw NoViableCandidate("all " + std::to_string(e.candidates.size()) + " candidates for " + target.name +
                            " score <= 0 (best '" + best->text + "')");
  e.text = best->text;
  e.explanation_score = best->score;
  if (secondary) e.stability = target_stability(primary, *secondary, target);
  return e;
}

std::vector<std::size_t> pick_diverse(const std::vector<Explanation>& explanations, std::size_t n, std::uint64_t seed) {
  const std::size_t m = explanations.size();
  n = std::min(n, m);
  if (n == 0) return {};
  HashedNgramExtractor ex(seed, 64, 1);
  Matrix emb(static_cast<Eigen::Index>(m), 64);
  for (std::size_t i = 0; i < m; ++i) {
    Vector v = Vector::Zero(64);
    for (const auto& w : normalize_words(explanations[i].text)) v += ex.hash_embedding(w);
    const double nv = v.norm();
    emb.row(static_cast<Eigen::Index>(i)) = nv > 0 ? Vector(v / nv) : v;
  }
  std::vector<std::size_t> picked;
  std::vector<double> min_dist(m, std::numeric_limits<double>::infinity());
  std::size_t first = 0;
  for (std::size_t i = 1; i < m; ++i)
    if (explanations[i].explanation_score > explanations[first].explanation_score) first = i;
  picked.push_back(first);
  while (picked.size() < n) {
    const auto last = static_cast<Eigen::Index>(picked.back());
    std::size_t best = m;
    double best_d = -1.0;
    for (std::size_t i = 0; i < m; ++i) {
      if (std::find(picked.begin(), picked.end(), i) != picked.end()) continue;
      min_dist[i] = std::min(min_dist[i], (emb.row(static_cast<Eigen::Index>(i)) - emb.row(last)).norm());
      if (min_dist[i] > best_d) {
        best_d = min_dist[i];
        best = i;
      }
    }
    picked.push_back(best);
  }
  return picked;
}

}  // namespace gct
