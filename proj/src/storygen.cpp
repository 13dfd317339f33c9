#include "gct/storygen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "gct/stats.hpp"
#include "gct/text.hpp"

namespace gct {

std::string to_string(StoryMode m) {
  switch (m) {
    case StoryMode::single: return "single";
    case StoryMode::pair: return "pair";
    case StoryMode::polysemantic: return "polysemantic";
    case StoryMode::selective: return "selective";
  }
  return "single";
}

StoryMode story_mode_from_string(std::string_view s) {
  if (s == "single") return StoryMode::single;
  if (s == "pair") return StoryMode::pair;
  if (s == "polysemantic") return StoryMode::polysemantic;
  if (s == "selective") return StoryMode::selective;
  throw ParseError("unknown story mode '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------

void Story::validate() const {
  if (paragraphs.empty()) throw InvalidArgument("story has no paragraphs");
  if (!(words_per_minute > 0)) throw InvalidArgument("cadence must be positive");
  for (std::size_t i = 0; i < paragraphs.size(); ++i) {
    const auto& p = paragraphs[i];
    if (split_whitespace(p.text).empty()) throw InvalidArgument("paragraph " + std::to_string(i) + " is empty");
    if (p.targets.empty()) throw InvalidArgument("paragraph " + std::to_string(i) + " has no target");
    if (p.targets.size() > 2 || (p.targets.size() == 2 && !p.multi))
      throw InvalidArgument("paragraph " + std::to_string(i) + " has more than one primary target");
  }
}

Transcript Story::transcript() const {
  const double spw = seconds_per_word();
  std::vector<Word> words;
  for (const auto& p : paragraphs) {
    for (auto& tok : split_whitespace(p.text)) {
      const double on = lead_in_s + static_cast<double>(words.size()) * spw;
      words.push_back({tok, on, on + spw});
    }
  }
  return Transcript(story_id, std::move(words));
}

std::vector<std::pair<double, double>> Story::paragraph_spans() const {
  const double spw = seconds_per_word();
  std::vector<std::pair<double, double>> out;
  std::size_t n = 0;
  for (const auto& p : paragraphs) {
    const std::size_t k = split_whitespace(p.text).size();
    out.emplace_back(lead_in_s + static_cast<double>(n) * spw, lead_in_s + static_cast<double>(n + k) * spw);
    n += k;
  }
  return out;
}

TRGrid Story::grid(double tr_s) const {
  const auto spans = paragraph_spans();
  const double end = spans.empty() ? lead_in_s : spans.back().second;
  return TRGrid::covering(end, tr_s, tail_s);
}

std::vector<std::string> Story::compliance_failures() const {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < paragraphs.size(); ++i)
    if (paragraphs[i].compliance_failed)
      out.push_back("paragraph " + std::to_string(i) + ": " + join(paragraphs[i].banned_hits, ", "));
  return out;
}

namespace {

Json conversation_json(const Conversation& c) {
  Json a = Json::array();
  for (const auto& m : c) a.push_back({{"role", m.role}, {"content", m.content}});
  return a;
}

Conversation conversation_from_json(const Json& j) {
  Conversation c;
  for (const auto& m : j) c.push_back({m.at("role").get<std::string>(), m.at("content").get<std::string>()});
  return c;
}

}  // namespace

Json Story::to_json() const {
  Json ps = Json::array();
  for (const auto& p : paragraphs)
    ps.push_back({{"text", p.text},
                  {"targets", p.targets},
                  {"explanations", p.explanations},
                  {"examples", p.examples},
                  {"suffix", p.suffix},
                  {"multi", p.multi},
                  {"compliance_failed", p.compliance_failed},
                  {"banned_hits", p.banned_hits}});
  Json log_j = Json::array();
  for (const auto& c : log) log_j.push_back({{"prompt", conversation_json(c.prompt)}, {"response", c.response}});
  return {{"story_id", story_id},
          {"seed", seed},
          {"prompt_version", gct::to_string(prompt_version)},
          {"mode", gct::to_string(mode)},
          {"words_per_minute", words_per_minute},
          {"lead_in_s", lead_in_s},
          {"tail_s", tail_s},
          {"paragraphs", ps},
          {"log", log_j}};
}

Story Story::from_json(const Json& j) {
  Story s;
  s.story_id = j.at("story_id").get<std::string>();
  s.seed = j.value("seed", std::uint64_t{0});
  s.prompt_version = prompt_version_from_string(j.value("prompt_version", "v1"));
  s.mode = story_mode_from_string(j.value("mode", "single"));
  s.words_per_minute = j.value("words_per_minute", 150.0);
  s.lead_in_s = j.value("lead_in_s", 10.0);
  s.tail_s = j.value("tail_s", 20.0);
  for (const auto& p : j.at("paragraphs")) {
    Paragraph q;
    q.text = p.at("text").get<std::string>();
    q.targets = p.at("targets").get<std::vector<std::string>>();
    q.explanations = p.value("explanations", std::vector<std::string>{});
    q.examples = p.value("examples", std::vector<std::string>{});
    q.suffix = p.value("suffix", "");
    q.multi = p.value("multi", false);
    q.compliance_failed = p.value("compliance_failed", false);
    q.banned_hits = p.value("banned_hits", std::vector<std::string>{});
    s.paragraphs.push_back(std::move(q));
  }
  for (const auto& c : j.value("log", Json::array()))
    s.log.push_back({conversation_from_json(c.at("prompt")), c.at("response").get<std::string>()});
  s.validate();
  return s;
}

void save_story(const std::filesystem::path& path, const Story& story) {
  write_text_file(path, story.to_json().dump(2) + "\n");
}

Story load_story(const std::filesystem::path& path) {
  try {
    return Story::from_json(Json::parse(read_text_file(path)));
  } catch (const Json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------

std::vector<std::string> banned_hits(std::string_view text, const std::vector<std::string>& banned) {
  const auto words = normalize_words(text);
  std::vector<std::string> hits;
  for (const auto& term : banned) {
    const auto tw = normalize_words(term);
    if (tw.empty() || tw.size() > words.size()) continue;
    for (std::size_t i = 0; i + tw.size() <= words.size(); ++i) {
      if (std::equal(tw.begin(), tw.end(), words.begin() + static_cast<std::ptrdiff_t>(i))) {
        hits.push_back(term);
        break;
      }
    }
  }
  return hits;
}

namespace {

struct ParagraphRequest {
  std::vector<std::string> targets;
  std::vector<std::string> topics;
  std::vector<std::string> examples;
  std::string suffix;
  std::vector<std::string> banned;
  bool multi = false;
};

std::vector<ParagraphRequest> expand(const std::vector<StorySegment>& segments, StoryMode mode) {
  std::vector<ParagraphRequest> out;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const auto& s = segments[i];
    const std::string where = "segment " + std::to_string(i);
    if (s.targets.empty() || s.explanations.empty()) throw InvalidArgument(where + " needs a target and an explanation");
    switch (mode) {
      case StoryMode::single:
      case StoryMode::selective:
        if (s.targets.size() != 1 || s.explanations.size() != 1)
          throw InvalidArgument(where + ": single mode takes one target and one explanation");
        out.push_back({s.targets, s.explanations, s.examples, s.suffix, s.banned_terms, false});
        break;
      case StoryMode::pair:
        if (s.targets.size() > 2 || s.explanations.size() != s.targets.size())
          throw InvalidArgument(where + ": pair mode takes one explanation per target, at most two");
        out.push_back({s.targets, s.explanations, s.examples, s.suffix, s.banned_terms, s.targets.size() == 2});
        break;
      case StoryMode::polysemantic:
        if (s.targets.size() != 1 || s.explanations.size() > 2)
          throw InvalidArgument(where + ": polysemantic mode takes one target with at most two explanations");
        for (const auto& e : s.explanations)
          out.push_back({s.targets, {e}, s.examples, s.suffix, s.banned_terms, s.explanations.size() == 2});
        break;
    }
  }
  return out;
}

std::vector<std::string> shuffled(std::vector<std::string> v, std::uint64_t seed) {
  std::uint64_t state = seed;
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[splitmix64(state) % i]);
  return v;
}

Story run_generation(LLMClient& llm, const std::vector<ParagraphRequest>& requests, StoryMode mode, std::uint64_t seed,
                     const StoryOptions& options) {
  if (requests.empty()) throw InvalidArgument("story needs at least one paragraph");
  if (requests.size() > options.max_paragraphs)
    throw InvalidArgument("story asks for " + std::to_string(requests.size()) + " paragraphs, limit is " +
                          std::to_string(options.max_paragraphs));
  Story story;
  story.seed = seed;
  story.prompt_version = options.version;
  story.mode = mode;
  story.words_per_minute = options.words_per_minute;
  story.story_id = "story-" + to_string(mode) + "-" + hex64(seed).substr(8);

  Conversation conv;
  for (std::size_t i = 0; i < requests.size(); ++i) {
    const auto& r = requests[i];
    Paragraph para;
    para.targets = r.targets;
    para.explanations = r.topics;
    para.examples = shuffled(r.examples, derive_seed(seed, static_cast<std::uint64_t>(i)));
    para.suffix = r.suffix;
    para.multi = r.multi;
    const std::string prompt = prompts::story_paragraph(options.version, i == 0, r.topics, para.examples, r.suffix);

    auto ask = [&](const std::string& content) {
      Conversation c = conv;
      c.push_back({"user", content});
      const std::string resp = llm.complete(c);
      story.log.push_back({c, resp});
      return resp;
    };
    auto coherent = [&](const std::string& resp) -> std::optional<std::string> {
      try {
        auto text = prompts::parse_paragraph(resp);
        for (const auto& prev : story.paragraphs)
          if (prev.text == text) return std::nullopt;
        return text;
      } catch (const ParseError&) {
        return std::nullopt;
      }
    };

    std::string used_prompt = prompt;
    auto text = coherent(ask(prompt));
    if (!text) text = coherent(ask(prompt));
    if (!text) throw IncoherentOutput("paragraph " + std::to_string(i) + " is empty or repeats an earlier paragraph");

    auto hits = banned_hits(*text, r.banned);
    if (!hits.empty()) {
      used_prompt = prompt + " Do not use these words: " + join(r.banned, ", ") + ".";
      auto retry = coherent(ask(used_prompt));
      if (retry) {
        text = retry;
        hits = banned_hits(*text, r.banned);
      }
      para.compliance_failed = !hits.empty();
      para.banned_hits = hits;
    }
    para.text = *text;
    conv.push_back({"user", used_prompt});
    conv.push_back({"assistant", para.text});
    story.paragraphs.push_back(std::move(para));
  }
  story.validate();
  return story;
}

}  // namespace

Story generate_story(LLMClient& llm, const std::vector<StorySegment>& segments, StoryMode mode, std::uint64_t seed,
                     const StoryOptions& options) {
  return run_generation(llm, expand(segments, mode), mode, seed, options);
}

std::string roi_suffix(std::string_view roi_name) {
  static const std::map<std::string, std::string, std::less<>> table = {
      {"IPS", "Avoid mentioning any locations."},
      {"OFA", "Avoid mentioning any locations."},
      {"sPMv", "Avoid mentioning any locations."},
      {"OPA", "Avoid mentioning any specific location names (like \"New York\" or \"Europe\")."},
      {"OPA-only", "Avoid mentioning any specific location names (like \"New York\" or \"Europe\")."},
      {"PPA", "Avoid mentioning any specific location names (like \"New York\" or \"Europe\")."},
      {"PPA-only", "Avoid mentioning any specific location names (like \"New York\" or \"Europe\")."},
      {"RSC", ""},
      {"RSC-only", ""},
  };
  auto it = table.find(roi_name);
  return it == table.end() ? std::string{} : it->second;
}

std::vector<std::string> banned_terms_for_suffix(std::string_view suffix) {
  std::vector<std::string> out;
  for (;;) {
    auto a = suffix.find('"');
    if (a == std::string_view::npos) break;
    auto b = suffix.find('"', a + 1);
    if (b == std::string_view::npos) break;
    out.emplace_back(to_lower(suffix.substr(a + 1, b - a - 1)));
    suffix.remove_prefix(b + 1);
  }
  return out;
}

Story generate_selective_story(LLMClient& llm, const std::string& target_roi, const std::vector<std::string>& suppress_rois,
                               const std::vector<SelectiveEntry>& explanations, std::uint64_t seed,
                               const StoryOptions& options) {
  if (std::find(suppress_rois.begin(), suppress_rois.end(), target_roi) != suppress_rois.end())
    throw InvalidArgument("target ROI " + target_roi + " is also in the suppress set");
  std::vector<std::string> excluded;
  for (const auto& s : suppress_rois) {
    bool found = false;
    for (const auto& e : explanations)
      if (e.roi == s) {
        found = true;
        if (std::find(excluded.begin(), excluded.end(), e.explanation) == excluded.end()) excluded.push_back(e.explanation);
      }
    if (!found) throw InvalidArgument("no explanation for suppressed ROI " + s);
  }
  std::vector<ParagraphRequest> requests;
  for (const auto& e : explanations) {
    if (e.roi != target_roi) continue;
    ParagraphRequest r;
    r.targets = {e.roi};
    r.topics = {e.explanation};
    r.examples = e.examples;
    std::string suffix = e.suffix.empty() ? roi_suffix(e.roi) : e.suffix;
    r.banned = banned_terms_for_suffix(suffix);
    r.banned.insert(r.banned.end(), e.banned_terms.begin(), e.banned_terms.end());
    if (!excluded.empty()) {
      std::vector<std::string> q;
      for (const auto& x : excluded) q.push_back("\"" + x + "\"");
      std::string clause = "Avoid mentioning anything related to " + join(q, " or ") + ".";
      suffix = suffix.empty() ? clause : suffix + " " + clause;
    }
    r.suffix = suffix;
    requests.push_back(std::move(r));
  }
  if (requests.empty()) throw InvalidArgument("no explanation for target ROI " + target_roi);
  auto story = run_generation(llm, requests, suppress_rois.empty() ? StoryMode::single : StoryMode::selective, seed, options);
  return story;
}

// ---------------------------------------------------------------------------

Json MatchMatrix::to_json() const {
  auto rows = [](const Matrix& m) {
    Json a = Json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      std::vector<double> row;
      for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
      a.push_back(row);
    }
    return a;
  };
  return {{"fraction", rows(fraction)},
          {"z", rows(z)},
          {"axis", axis == ZAxis::per_explanation ? "per_explanation" : "per_paragraph"}};
}

std::vector<std::string> paragraph_trigrams(std::string_view text) {
  const auto words = normalize_words(text);
  if (words.empty()) return {};
  if (words.size() < 3) return {join(words, " ")};
  std::vector<std::string> out;
  for (std::size_t i = 0; i + 3 <= words.size(); ++i) out.push_back(words[i] + " " + words[i + 1] + " " + words[i + 2]);
  return out;
}

namespace {

void zscore_inplace(Eigen::Ref<Vector> v) {
  const double mu = v.mean();
  const double var = (v.array() - mu).square().mean();
  if (var <= 0.0) v.setZero();
  else v = (v.array() - mu) / std::sqrt(var);
}

}  // namespace

MatchMatrix matching_score(LLMClient& llm, const Story& story, const std::vector<std::string>& explanations, ZAxis axis) {
  if (story.paragraphs.empty() || explanations.empty()) throw InvalidArgument("matching needs paragraphs and explanations");
  const auto np = static_cast<Eigen::Index>(story.paragraphs.size());
  const auto ne = static_cast<Eigen::Index>(explanations.size());
  std::vector<std::vector<std::string>> tri;
  std::vector<Conversation> calls;
  for (const auto& p : story.paragraphs) {
    tri.push_back(paragraph_trigrams(p.text));
    for (const auto& e : explanations) calls.push_back({{"user", prompts::relevance_judgment(e, tri.back())}});
  }
  const auto responses = llm.complete_batch(calls);
  MatchMatrix m;
  m.axis = axis;
  m.fraction.resize(np, ne);
  for (Eigen::Index p = 0; p < np; ++p) {
    for (Eigen::Index e = 0; e < ne; ++e) {
      const auto& t = tri[static_cast<std::size_t>(p)];
      const auto flags = prompts::parse_judgments(responses[static_cast<std::size_t>(p * ne + e)], t.size());
      const auto yes = std::count(flags.begin(), flags.end(), true);
      m.fraction(p, e) = t.empty() ? 0.0 : static_cast<double>(yes) / static_cast<double>(t.size());
    }
  }
  m.z = m.fraction;
  if (axis == ZAxis::per_explanation)
    for (Eigen::Index e = 0; e < ne; ++e) zscore_inplace(m.z.col(e));
  else
    for (Eigen::Index p = 0; p < np; ++p) {
      Vector row = m.z.row(p).transpose();
      zscore_inplace(row);
      m.z.row(p) = row.transpose();
    }
  return m;
}

// ---------------------------------------------------------------------------

std::vector<int> paragraph_volumes(const Story& story, const TRGrid& grid, std::size_t paragraph, int hrf_lag_trs) {
  const auto spans = story.paragraph_spans();
  if (paragraph >= spans.size()) throw InvalidArgument("paragraph index out of range");
  const auto [start, end] = spans[paragraph];
  std::vector<int> out;
  for (int v = 0; v < grid.n_volumes; ++v) {
    const double t = grid.volume_time(v);
    if (t >= start && t < end) {
      const int shifted = v + hrf_lag_trs;
      if (shifted >= 0 && shifted < grid.n_volumes) out.push_back(shifted);
    }
  }
  return out;
}

double Prevalidation::mean_diagonal(const Story& story) const {
  double sum = 0.0;
  int n = 0;
  for (std::size_t p = 0; p < story.paragraphs.size(); ++p)
    for (const auto& name : story.paragraphs[p].targets)
      for (std::size_t t = 0; t < targets.size(); ++t)
        if (targets[t] == name) {
          sum += relative(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(p));
          ++n;
        }
  return n ? sum / n : 0.0;
}

Json Prevalidation::to_json() const {
  auto rows = [](const Matrix& m) {
    Json a = Json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      std::vector<double> row;
      for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
      a.push_back(row);
    }
    return a;
  };
  return {{"targets", targets}, {"window_mean", rows(window_mean)}, {"relative", rows(relative)}, {"hrf_lag_trs", hrf_lag_trs}};
}

Prevalidation encoding_prevalidation(const EncodingModel& model, const Story& story, const std::vector<Target>& targets,
                                     int hrf_lag_trs) {
  story.validate();
  auto extractor = make_extractor(model.features.extractor);
  const TRGrid grid = story.grid(model.features.tr_s);
  const FeatureMatrix x = story_features(*extractor, model.features, story.transcript(), grid, true);
  const Matrix pred = predict(model, x);
  const int first = grid.trim_head;
  const int rows = static_cast<int>(pred.rows());

  Prevalidation out;
  out.hrf_lag_trs = hrf_lag_trs;
  const auto np = static_cast<Eigen::Index>(story.paragraphs.size());
  out.window_mean.resize(static_cast<Eigen::Index>(targets.size()), np);
  out.relative.resize(static_cast<Eigen::Index>(targets.size()), np);

  std::vector<std::vector<int>> windows;
  for (std::size_t p = 0; p < story.paragraphs.size(); ++p) {
    std::vector<int> w;
    for (int v : paragraph_volumes(story, grid, p, hrf_lag_trs))
      if (v - first >= 0 && v - first < rows) w.push_back(v - first);
    if (w.empty()) throw TimingMismatch("paragraph " + std::to_string(p) + " has no retained volumes");
    windows.push_back(std::move(w));
  }
  for (std::size_t t = 0; t < targets.size(); ++t) {
    const Vector series = pred * target_coefficients(model, targets[t]);
    const double mu = series.mean();
    const double sd = stats::sd(stats::span_of(series));
    for (Eigen::Index p = 0; p < np; ++p) {
      double s = 0.0;
      for (int r : windows[static_cast<std::size_t>(p)]) s += series(r);
      const double m = s / static_cast<double>(windows[static_cast<std::size_t>(p)].size());
      out.window_mean(static_cast<Eigen::Index>(t), p) = m;
      out.relative(static_cast<Eigen::Index>(t), p) = sd > 0 ? (m - mu) / sd : 0.0;
    }
    out.targets.push_back(targets[t].name);
  }
  return out;
}

std::vector<std::size_t> select_best_stories(const std::vector<Story>& candidates, const EncodingModel& model,
                                             const std::vector<Target>& targets, std::size_t k, int hrf_lag_trs) {
  if (candidates.empty()) throw InvalidArgument("no candidate stories");
  std::vector<double> score;
  for (const auto& s : candidates) score.push_back(encoding_prevalidation(model, s, targets, hrf_lag_trs).mean_diagonal(s));
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return score[a] > score[b]; });
  order.resize(std::min(k, order.size()));
  return order;
}

}  // namespace gct
