#include "gct/llm.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>

#include "gct/core.hpp"
#include "gct/text.hpp"

namespace gct {

using nlohmann::json;

std::string canonical_prompt(const Conversation& conv) {
  json arr = json::array();
  for (const auto& m : conv) arr.push_back({{"role", m.role}, {"content", std::string(trim(m.content))}});
  return arr.dump();
}

std::string prompt_hash(const Conversation& conv) { return hex64(fnv1a64(canonical_prompt(conv))); }

std::vector<std::string> LLMClient::complete_batch(const std::vector<Conversation>& convs) {
  std::vector<std::string> out;
  out.reserve(convs.size());
  for (const auto& c : convs) out.push_back(complete(c));
  return out;
}

// ---------------------------------------------------------------------------
// Prompt templates

std::string to_string(PromptVersion v) { return v == PromptVersion::v1_coherent ? "v1" : "v0"; }

PromptVersion prompt_version_from_string(std::string_view s) {
  if (s == "v1" || s == "v1_coherent") return PromptVersion::v1_coherent;
  if (s == "v0" || s == "v0_first_person") return PromptVersion::v0_first_person;
  throw ParseError("unknown prompt version '" + std::string(s) + "'");
}

namespace prompts {
namespace {

constexpr std::string_view kSummarizeHead = "Here is a list of phrases:\n";
constexpr std::string_view kSummarizeTail =
    "\nWhat is a common theme among these phrases?\nThe common theme among these phrases is";
constexpr std::string_view kSimilarHead = "Generate 10 phrases that are similar to the concept of ";
constexpr std::string_view kDissimilarHead = "Generate 10 phrases that are not similar to the concept of ";
constexpr std::string_view kJudgeHead = "Here is a concept: ";
constexpr std::string_view kJudgeBody =
    "For each numbered phrase below, answer yes if the phrase is relevant to the concept and no otherwise. "
    "Reply with one line per phrase in the form \"<number>. yes\" or \"<number>. no\".\n";

std::string quoted_topics(const std::vector<std::string>& topics) {
  std::vector<std::string> q;
  for (const auto& t : topics) q.push_back("\"" + t + "\"");
  return join(q, " and ");
}

std::string strip_item_marker(std::string_view line) {
  line = trim(line);
  std::size_t i = 0;
  while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
  if (i > 0 && i < line.size() && (line[i] == '.' || line[i] == ')')) line.remove_prefix(i + 1);
  else if (!line.empty() && (line[0] == '-' || line[0] == '*' || line[0] == '\xe2')) {
    // "-", "*", or a UTF-8 bullet
    std::size_t skip = line[0] == '\xe2' ? std::min<std::size_t>(3, line.size()) : 1;
    line.remove_prefix(skip);
  }
  return std::string(trim(line));
}

void reject_sentinel(std::string_view response) {
  if (trim(response) == kStubUnknownPrompt) throw ParseError("LLM backend has no answer for this prompt");
}

}  // namespace

std::string summarize(const std::vector<std::string>& phrases) {
  std::string body;
  for (const auto& p : phrases) body += "- " + p + "\n";
  if (!body.empty()) body.pop_back();
  return std::string(kSummarizeHead) + body + std::string(kSummarizeTail);
}

std::string similar_phrases(std::string_view explanation) {
  return std::string(kSimilarHead) + std::string(explanation) + ":";
}

std::string dissimilar_phrases(std::string_view explanation) {
  return std::string(kDissimilarHead) + std::string(explanation) + ":";
}

std::string render_examples(const std::vector<std::string>& examples) {
  std::vector<std::string> q;
  for (const auto& e : examples) q.push_back("\"" + e + "\"");
  if (q.size() <= 1) return q.empty() ? std::string{} : q[0];
  if (q.size() == 2) return q[0] + " and " + q[1];
  std::string last = q.back();
  q.pop_back();
  return join(q, ", ") + ", and " + last;
}

std::string story_paragraph(PromptVersion version, bool opening, const std::vector<std::string>& topics,
                            const std::vector<std::string>& examples, std::string_view suffix) {
  if (topics.empty()) throw InvalidArgument("paragraph prompt needs a topic");
  const std::string about = quoted_topics(topics);
  std::string p;
  if (version == PromptVersion::v1_coherent) {
    p = opening ? "Write the beginning paragraph of a long, coherent story. The story should be about " + about + "."
                : "Write the next paragraph of the story, staying consistent with the story so far, but now make it about " +
                      about + ".";
  } else {
    p = opening ? "Write the beginning paragraph of an interesting story told in first person. The story should have a "
                  "plot and characters. The story should be about " +
                      about + "."
                : "Write the next paragraph of the story, but now make it about " + about + ".";
  }
  p += " Make sure it contains several words related to " + about;
  if (!examples.empty()) p += ", such as " + render_examples(examples);
  p += ".";
  if (!trim(suffix).empty()) p += " " + std::string(trim(suffix));
  return p;
}

std::string relevance_judgment(std::string_view explanation, const std::vector<std::string>& phrases) {
  std::string p = std::string(kJudgeHead) + "\"" + std::string(explanation) + "\".\n" + std::string(kJudgeBody);
  for (std::size_t i = 0; i < phrases.size(); ++i) p += std::to_string(i + 1) + ". " + phrases[i] + "\n";
  if (!phrases.empty()) p.pop_back();
  return p;
}

std::string parse_summary(std::string_view response) {
  reject_sentinel(response);
  auto lines = split_lines(response);
  std::string first;
  for (const auto& l : lines) {
    auto item = strip_item_marker(l);
    if (!item.empty()) {
      first = item;
      break;
    }
  }
  std::string s = collapse_whitespace(first);
  constexpr std::string_view lead = "the common theme among these phrases is";
  if (s.starts_with(lead)) s = std::string(trim(std::string_view(s).substr(lead.size())));
  while (!s.empty() && (std::ispunct(static_cast<unsigned char>(s.back())) || s.back() == ' ')) s.pop_back();
  while (!s.empty() && (s.front() == '"' || s.front() == '\'' || s.front() == ' ')) s.erase(s.begin());
  if (s.empty()) throw ParseError("empty summary");
  return s;
}

std::vector<std::string> parse_bulleted_list(std::string_view response) {
  reject_sentinel(response);
  std::vector<std::string> out;
  for (const auto& l : split_lines(response)) {
    auto item = collapse_whitespace(strip_item_marker(l));
    while (!item.empty() && (item.back() == '.' || item.back() == ',')) item.pop_back();
    if (item.size() >= 2 && item.front() == '"' && item.back() == '"') item = item.substr(1, item.size() - 2);
    if (!item.empty()) out.push_back(item);
  }
  if (out.empty()) throw ParseError("no list items in response");
  return out;
}

std::vector<bool> parse_judgments(std::string_view response, std::size_t expected) {
  reject_sentinel(response);
  std::vector<bool> out;
  for (const auto& l : split_lines(response)) {
    auto item = to_lower(strip_item_marker(l));
    if (item.empty()) continue;
    if (item.starts_with("yes")) out.push_back(true);
    else if (item.starts_with("no")) out.push_back(false);
    else throw ParseError("judgment line is neither yes nor no: '" + l + "'");
  }
  if (out.size() != expected)
    throw ParseError("expected " + std::to_string(expected) + " judgments, got " + std::to_string(out.size()));
  return out;
}

std::string parse_paragraph(std::string_view response) {
  reject_sentinel(response);
  auto s = std::string(trim(response));
  if (s.empty()) throw ParseError("empty paragraph");
  return s;
}

}  // namespace prompts

// ---------------------------------------------------------------------------
// Stub backend

namespace {

std::string_view between(std::string_view s, std::string_view head, std::string_view tail) {
  auto a = s.find(head);
  if (a == std::string_view::npos) return {};
  a += head.size();
  auto b = tail.empty() ? s.size() : s.find(tail, a);
  if (b == std::string_view::npos) b = s.size();
  return s.substr(a, b - a);
}

/// Quoted strings in `s` up to the first '.' outside quotes.
std::vector<std::string> quoted_until_period(std::string_view s) {
  std::vector<std::string> out;
  bool in = false;
  std::string cur;
  for (char c : s) {
    if (c == '"') {
      if (in) out.push_back(cur);
      cur.clear();
      in = !in;
    } else if (in) {
      cur += c;
    } else if (c == '.') {
      break;
    }
  }
  return out;
}

std::vector<std::string> all_quoted(std::string_view s) {
  std::vector<std::string> out;
  for (;;) {
    auto a = s.find('"');
    if (a == std::string_view::npos) break;
    auto b = s.find('"', a + 1);
    if (b == std::string_view::npos) break;
    out.emplace_back(s.substr(a + 1, b - a - 1));
    s.remove_prefix(b + 1);
  }
  return out;
}

std::string singular(std::string w) {
  if (w.size() > 3 && w.ends_with('s') && !w.ends_with("ss")) w.pop_back();
  return w;
}

const std::set<std::string>& stopwords() {
  static const std::set<std::string> s = {"a",    "an",   "and",  "the", "of",    "to",  "in",   "on",
                                          "for",  "with", "or",   "about", "is",  "are", "its",  "their",
                                          "that", "this", "these", "those", "at", "by",  "from", "as"};
  return s;
}

struct Draw {
  std::uint64_t state;
  std::uint64_t next() { return splitmix64(state); }
  std::size_t below(std::size_t n) { return n == 0 ? 0 : static_cast<std::size_t>(next() % n); }
};

std::string capitalize(std::string s) {
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

}  // namespace

StubLLM::StubLLM(ConceptLexicon lexicon, std::uint64_t seed) : lexicon_(std::move(lexicon)), seed_(seed) {
  if (lexicon_.filler.empty()) throw InvalidArgument("stub lexicon needs filler vocabulary");
}

void StubLLM::add_fixture(std::string hash, std::string response) { fixtures_[std::move(hash)] = std::move(response); }

void StubLLM::load_fixtures(const std::filesystem::path& path) {
  for (const auto& e : read_cassette(path)) add_fixture(e.prompt_hash, e.response);
}

std::vector<std::string> StubLLM::focus_words(std::string_view explanation) const {
  std::vector<std::string> words;
  for (auto idx : lexicon_.concepts_named_in(explanation))
    for (const auto& k : lexicon_.concepts[idx].keywords) words.push_back(k);
  if (words.empty()) {
    for (auto& w : normalize_words(explanation))
      if (!stopwords().contains(w) && !contains_word(lexicon_.filler, w)) words.push_back(w);
  }
  return words;
}

std::string StubLLM::complete(const Conversation& conv) {
  if (conv.empty()) throw LLMError("empty conversation");
  const std::string h = prompt_hash(conv);
  if (auto it = fixtures_.find(h); it != fixtures_.end()) return it->second;
  const std::string& prompt = conv.back().content;
  const std::uint64_t draw_seed = derive_seed(seed_, h);
  using namespace std::string_view_literals;
  if (prompt.starts_with("Here is a list of phrases:\n")) return summarize(prompt, draw_seed);
  if (prompt.starts_with("Generate 10 phrases that are not similar to the concept of "))
    return phrases(prompt, false, draw_seed);
  if (prompt.starts_with("Generate 10 phrases that are similar to the concept of "))
    return phrases(prompt, true, draw_seed);
  if (prompt.starts_with("Write the beginning paragraph of ") || prompt.starts_with("Write the next paragraph of "))
    return paragraph(prompt, draw_seed);
  if (prompt.starts_with("Here is a concept: ")) return judge(prompt);
  return std::string(kStubUnknownPrompt);
}

std::string StubLLM::summarize(const std::string& prompt, std::uint64_t h) const {
  auto body = between(prompt, "Here is a list of phrases:\n", "\nWhat is a common theme");
  std::vector<int> hits(lexicon_.concepts.size(), 0);
  for (const auto& line : split_lines(body)) {
    std::set<std::size_t> named;
    for (const auto& w : normalize_words(line))
      for (auto c : lexicon_.concepts_with_keyword(w)) named.insert(c);
    for (auto c : named) ++hits[c];
  }
  auto best = std::max_element(hits.begin(), hits.end());
  if (best == hits.end() || *best == 0) return " theme-" + std::to_string(h % 10) + ".";
  return " " + lexicon_.concepts[static_cast<std::size_t>(best - hits.begin())].label + ".";
}

std::string StubLLM::phrases(const std::string& prompt, bool similar, std::uint64_t h) const {
  auto expl = trim(between(prompt, "to the concept of ", ""));
  if (expl.ends_with(':')) expl.remove_suffix(1);
  Draw d{h};
  const auto focus = similar ? focus_words(expl) : std::vector<std::string>{};
  const auto& filler = lexicon_.filler;
  std::string out;
  for (int i = 0; i < 10; ++i) {
    std::vector<std::string> words;
    if (!focus.empty()) {
      if (i % 2 == 0) words = {filler[d.below(filler.size())], focus[d.below(focus.size())], filler[d.below(filler.size())]};
      else words = {focus[d.below(focus.size())], filler[d.below(filler.size())], focus[d.below(focus.size())]};
    } else {
      for (int k = 0; k < 3; ++k) words.push_back(filler[d.below(filler.size())]);
    }
    out += std::to_string(i + 1) + ". " + join(words, " ") + "\n";
  }
  return out;
}

std::string StubLLM::paragraph(const std::string& prompt, std::uint64_t h) const {
  const auto topics = quoted_until_period(between(prompt, "should be about ", ""));
  const auto topics_next = quoted_until_period(between(prompt, "now make it about ", ""));
  const auto& about = topics.empty() ? topics_next : topics;
  const auto examples = quoted_until_period(between(prompt, ", such as ", ""));
  const auto avoid = between(prompt, "Avoid mentioning ", "");

  std::set<std::string> banned;
  if (!avoid.empty()) {
    std::vector<std::size_t> avoided;
    for (const auto& q : all_quoted(avoid)) {
      auto named = lexicon_.concepts_named_in(q);
      if (named.empty())
        for (auto& w : normalize_words(q)) banned.insert(w);
      avoided.insert(avoided.end(), named.begin(), named.end());
    }
    // label words only count outside quotes; quoted text is matched whole above
    std::string unquoted;
    bool in_quote = false;
    for (char c : avoid) {
      if (c == '"') in_quote = !in_quote;
      else if (!in_quote) unquoted += c;
    }
    std::set<std::string> clause_words;
    for (auto& w : normalize_words(unquoted)) clause_words.insert(singular(w));
    for (std::size_t c = 0; c < lexicon_.concepts.size(); ++c)
      for (auto& lw : normalize_words(lexicon_.concepts[c].label))
        if (lw.size() >= 4 && clause_words.contains(singular(lw))) avoided.push_back(c);
    for (auto c : avoided)
      for (const auto& k : lexicon_.concepts[c].keywords) banned.insert(k);
  }

  std::vector<std::string> focus;
  for (const auto& t : about)
    for (auto& w : focus_words(t))
      if (!banned.contains(w)) focus.push_back(w);
  std::vector<std::string> inserts;
  for (const auto& e : examples) {
    auto ws = normalize_words(e);
    if (std::none_of(ws.begin(), ws.end(), [&](const std::string& w) { return banned.contains(w); }))
      inserts.push_back(e);
  }

  Draw d{h};
  const auto& filler = lexicon_.filler;
  const std::size_t n_words = 80 + d.below(21);
  std::vector<std::string> words;
  std::size_t next_insert = 0;
  while (words.size() < n_words) {
    const auto slot = words.size();
    if (slot % 12 == 5 && next_insert < inserts.size() * 2 && !inserts.empty()) {
      for (auto& w : split_whitespace(inserts[next_insert % inserts.size()])) words.push_back(w);
      ++next_insert;
    } else if (!focus.empty() && slot % 3 == 1) {
      words.push_back(focus[d.below(focus.size())]);
    } else {
      words.push_back(filler[d.below(filler.size())]);
    }
  }
  std::string out;
  std::size_t sentence_left = 8 + d.below(7);
  bool start = true;
  for (std::size_t i = 0; i < words.size(); ++i) {
    out += start ? capitalize(words[i]) : words[i];
    start = false;
    if (--sentence_left == 0 || i + 1 == words.size()) {
      out += ".";
      start = true;
      sentence_left = 8 + d.below(7);
    }
    if (i + 1 < words.size()) out += " ";
  }
  return out;
}

std::string StubLLM::judge(const std::string& prompt) const {
  auto first_line = between(prompt, "Here is a concept: ", "\n");
  auto q = all_quoted(first_line);
  const std::string expl = q.empty() ? std::string(trim(first_line)) : q.front();
  std::set<std::string> relevant;
  for (auto& w : focus_words(expl)) relevant.insert(w);
  for (auto& w : normalize_words(expl))
    if (!stopwords().contains(w) && !contains_word(lexicon_.filler, w)) relevant.insert(w);

  std::string out;
  std::size_t idx = 0;
  auto lines = split_lines(prompt);
  for (const auto& l : lines) {
    auto t = trim(l);
    std::size_t i = 0;
    while (i < t.size() && std::isdigit(static_cast<unsigned char>(t[i]))) ++i;
    if (i == 0 || i >= t.size() || t[i] != '.') continue;
    auto words = normalize_words(t.substr(i + 1));
    const bool yes = std::any_of(words.begin(), words.end(), [&](const std::string& w) { return relevant.contains(w); });
    out += std::to_string(++idx) + ". " + (yes ? "yes" : "no") + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Cassettes

std::vector<CassetteEntry> read_cassette(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open cassette " + path.string());
  std::vector<CassetteEntry> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      auto j = json::parse(line);
      CassetteEntry e;
      e.prompt_hash = j.at("prompt_hash").get<std::string>();
      e.response = j.at("response").get<std::string>();
      if (j.contains("prompt"))
        for (const auto& m : j["prompt"]) e.prompt.push_back({m.at("role").get<std::string>(), m.at("content").get<std::string>()});
      out.push_back(std::move(e));
    } catch (const json::exception& ex) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + ex.what());
    }
  }
  return out;
}

ReplayLLM::ReplayLLM(const std::filesystem::path& cassette) : path_(cassette) {
  // later entries win, matching append order
  for (auto& e : read_cassette(cassette)) responses_[e.prompt_hash] = std::move(e.response);
}

std::string ReplayLLM::complete(const Conversation& conv) {
  const auto h = prompt_hash(conv);
  auto it = responses_.find(h);
  if (it == responses_.end()) throw LLMError("cassette " + path_.string() + " has no entry for prompt " + h);
  return it->second;
}

RecordingLLM::RecordingLLM(std::unique_ptr<LLMClient> inner, std::filesystem::path cassette)
    : inner_(std::move(inner)), path_(std::move(cassette)) {
  if (!inner_) throw InvalidArgument("recording decorator needs a backend");
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
}

void RecordingLLM::append(const Conversation& conv, const std::string& response) {
  json prompt = json::array();
  for (const auto& m : conv) prompt.push_back({{"role", m.role}, {"content", m.content}});
  json line{{"prompt_hash", prompt_hash(conv)}, {"prompt", prompt}, {"response", response}};
  std::lock_guard lock(mu_);
  std::ofstream out(path_, std::ios::app);
  if (!out) throw IoError("cannot append to cassette " + path_.string());
  out << line.dump() << "\n";
}

std::string RecordingLLM::complete(const Conversation& conv) {
  auto r = inner_->complete(conv);
  append(conv, r);
  return r;
}

std::vector<std::string> RecordingLLM::complete_batch(const std::vector<Conversation>& convs) {
  auto rs = inner_->complete_batch(convs);
  for (std::size_t i = 0; i < convs.size(); ++i) append(convs[i], rs[i]);
  return rs;
}

// ---------------------------------------------------------------------------

json HttpChatConfig::to_json() const {
  return {{"endpoint", endpoint},       {"model", model},
          {"api_key_env", api_key_env}, {"temperature", temperature},
          {"seed", seed},               {"max_retries", max_retries},
          {"backoff_initial_s", backoff_initial_s}, {"max_concurrency", max_concurrency},
          {"timeout_s", timeout_s}};
}

HttpChatConfig HttpChatConfig::from_json(const json& j) {
  HttpChatConfig c;
  c.endpoint = j.value("endpoint", c.endpoint);
  c.model = j.value("model", c.model);
  c.api_key_env = j.value("api_key_env", c.api_key_env);
  c.temperature = j.value("temperature", c.temperature);
  c.seed = j.value("seed", c.seed);
  c.max_retries = j.value("max_retries", c.max_retries);
  c.backoff_initial_s = j.value("backoff_initial_s", c.backoff_initial_s);
  c.max_concurrency = j.value("max_concurrency", c.max_concurrency);
  c.timeout_s = j.value("timeout_s", c.timeout_s);
  return c;
}

json LLMSpec::to_json() const {
  return {{"backend", backend},           {"seed", seed},
          {"lexicon_path", lexicon_path}, {"fixtures_path", fixtures_path},
          {"cassette_path", cassette_path}, {"record", record},
          {"http", http.to_json()}};
}

LLMSpec LLMSpec::from_json(const json& j) {
  LLMSpec s;
  s.backend = j.value("backend", s.backend);
  s.seed = j.value("seed", s.seed);
  s.lexicon_path = j.value("lexicon_path", s.lexicon_path);
  s.fixtures_path = j.value("fixtures_path", s.fixtures_path);
  s.cassette_path = j.value("cassette_path", s.cassette_path);
  s.record = j.value("record", s.record);
  if (j.contains("http")) s.http = HttpChatConfig::from_json(j["http"]);
  return s;
}

std::unique_ptr<LLMClient> make_llm(const LLMSpec& spec) {
  std::unique_ptr<LLMClient> client;
  if (spec.backend == "stub") {
    auto lex = spec.lexicon_path.empty() ? ConceptLexicon::toy() : ConceptLexicon::load(spec.lexicon_path);
    auto stub = std::make_unique<StubLLM>(std::move(lex), spec.seed);
    if (!spec.fixtures_path.empty()) stub->load_fixtures(spec.fixtures_path);
    client = std::move(stub);
  } else if (spec.backend == "replay") {
    if (spec.cassette_path.empty()) throw ConfigError("replay backend needs a cassette path");
    return std::make_unique<ReplayLLM>(spec.cassette_path);
  } else if (spec.backend == "http_chat") {
    client = std::make_unique<HttpChatLLM>(spec.http);
  } else {
    throw ConfigError("unknown LLM backend '" + spec.backend + "'");
  }
  if (spec.record) {
    if (spec.cassette_path.empty()) throw ConfigError("recording needs a cassette path");
    client = std::make_unique<RecordingLLM>(std::move(client), spec.cassette_path);
  }
  return client;
}

}  // namespace gct
