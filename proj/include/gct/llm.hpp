#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "gct/error.hpp"

#include "gct/lexicon.hpp"

namespace gct {

struct ChatMessage {
  std::string role;  ///< "system" | "user" | "assistant"
  std::string content;

  bool operator==(const ChatMessage&) const = default;
};
using Conversation = std::vector<ChatMessage>;

/// Compact JSON of [{role, content}] with whitespace-trimmed contents.
std::string canonical_prompt(const Conversation& conv);
/// fnv1a64 of the canonical prompt, 16 hex digits.
std::string prompt_hash(const Conversation& conv);

class LLMClient {
 public:
  virtual ~LLMClient() = default;
  virtual std::string complete(const Conversation& conv) = 0;
  virtual std::string backend() const = 0;
  /// Default is sequential; the HTTP backend issues calls concurrently.
  virtual std::vector<std::string> complete_batch(const std::vector<Conversation>& convs);

  std::string complete(std::string_view user_prompt) { return complete(Conversation{{"user", std::string(user_prompt)}}); }
};

/// Returned by the stub for prompts it does not recognize; parsers reject it.
inline constexpr std::string_view kStubUnknownPrompt = "[[gct-stub: no fixture for this prompt]]";

/// Deterministic offline backend. Fixtures keyed by prompt hash are consulted
/// first; otherwise each known prompt family is answered from the concept
/// lexicon, seeded by (seed, prompt hash).
class StubLLM final : public LLMClient {
 public:
  explicit StubLLM(ConceptLexicon lexicon, std::uint64_t seed = 0);

  std::string complete(const Conversation& conv) override;
  std::string backend() const override { return "stub"; }

  void add_fixture(std::string prompt_hash, std::string response);
  /// JSON-lines file of {"prompt_hash", "response"} (cassette format works).
  void load_fixtures(const std::filesystem::path& path);
  const ConceptLexicon& lexicon() const { return lexicon_; }

 private:
  std::string summarize(const std::string& prompt, std::uint64_t h) const;
  std::string phrases(const std::string& prompt, bool similar, std::uint64_t h) const;
  std::string paragraph(const std::string& prompt, std::uint64_t h) const;
  std::string judge(const std::string& prompt) const;
  std::vector<std::string> focus_words(std::string_view explanation) const;

  ConceptLexicon lexicon_;
  std::uint64_t seed_;
  std::map<std::string, std::string> fixtures_;
};

struct CassetteEntry {
  std::string prompt_hash;
  Conversation prompt;
  std::string response;
};

std::vector<CassetteEntry> read_cassette(const std::filesystem::path& path);

/// Answers only from a recorded cassette; a missing entry is an LLMError.
class ReplayLLM final : public LLMClient {
 public:
  explicit ReplayLLM(const std::filesystem::path& cassette);
  std::string complete(const Conversation& conv) override;
  std::string backend() const override { return "replay"; }

 private:
  std::map<std::string, std::string> responses_;
  std::filesystem::path path_;
};

/// Decorator appending every call to an append-only JSON-lines cassette.
class RecordingLLM final : public LLMClient {
 public:
  RecordingLLM(std::unique_ptr<LLMClient> inner, std::filesystem::path cassette);
  std::string complete(const Conversation& conv) override;
  std::vector<std::string> complete_batch(const std::vector<Conversation>& convs) override;
  std::string backend() const override { return inner_->backend(); }

 private:
  void append(const Conversation& conv, const std::string& response);

  std::unique_ptr<LLMClient> inner_;
  std::filesystem::path path_;
  std::mutex mu_;
};

/// OpenAI-style chat-completion endpoint.
struct HttpChatConfig {
  std::string endpoint = "https://api.openai.com/v1/chat/completions";
  std::string model = "gpt-4";
  std::string api_key_env = "GCT_LLM_API_KEY";
  double temperature = 0.0;
  std::uint64_t seed = 0;
  int max_retries = 4;
  double backoff_initial_s = 1.0;
  int max_concurrency = 4;
  double timeout_s = 120.0;

  nlohmann::json to_json() const;
  static HttpChatConfig from_json(const nlohmann::json& j);
  bool operator==(const HttpChatConfig&) const = default;
};

class HttpChatLLM final : public LLMClient {
 public:
  explicit HttpChatLLM(HttpChatConfig config);
  ~HttpChatLLM() override;
  std::string complete(const Conversation& conv) override;
  std::vector<std::string> complete_batch(const std::vector<Conversation>& convs) override;
  std::string backend() const override { return "http_chat"; }

  /// Request body sent for `conv`.
  nlohmann::json request_body(const Conversation& conv) const;
  /// Extracts choices[0].message.content.
  static std::string parse_response(std::string_view body);

 private:
  struct Impl;
  HttpChatConfig config_;
  std::unique_ptr<Impl> impl_;
};

struct LLMSpec {
  std::string backend = "stub";  ///< stub | replay | http_chat
  std::uint64_t seed = 0;
  std::string lexicon_path;   ///< stub world knowledge; empty = built-in toy lexicon
  std::string fixtures_path;  ///< stub fixtures
  std::string cassette_path;  ///< replay source, or recording target
  bool record = false;
  HttpChatConfig http;

  nlohmann::json to_json() const;
  static LLMSpec from_json(const nlohmann::json& j);
  bool operator==(const LLMSpec&) const = default;
};

std::unique_ptr<LLMClient> make_llm(const LLMSpec& spec);

// ---------------------------------------------------------------------------
// Prompt templates and response parsing shared by explain and storygen.

enum class PromptVersion { v1_coherent, v0_first_person };
std::string to_string(PromptVersion v);
PromptVersion prompt_version_from_string(std::string_view s);

namespace prompts {

std::string summarize(const std::vector<std::string>& phrases);
std::string similar_phrases(std::string_view explanation);
std::string dissimilar_phrases(std::string_view explanation);
/// `{examples}` rendering: "a", "b", and "c"
std::string render_examples(const std::vector<std::string>& examples);
/// Paragraph prompt. `topics` has one entry, or two for pair paragraphs.
std::string story_paragraph(PromptVersion version, bool opening, const std::vector<std::string>& topics,
                            const std::vector<std::string>& examples, std::string_view suffix);
std::string relevance_judgment(std::string_view explanation, const std::vector<std::string>& phrases);

/// Lowercased, whitespace-normalized summary; throws ParseError on the stub
/// sentinel or an empty answer.
std::string parse_summary(std::string_view response);
/// Bulleted or numbered list -> lowercased items.
std::vector<std::string> parse_bulleted_list(std::string_view response);
/// One yes/no per phrase; throws ParseError if the count differs.
std::vector<bool> parse_judgments(std::string_view response, std::size_t expected);
/// Trimmed paragraph; throws ParseError on the sentinel.
std::string parse_paragraph(std::string_view response);

}  // namespace prompts

}  // namespace gct
