#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace gct {

struct Concept {
  std::string label;
  std::vector<std::string> keywords;

  bool operator==(const Concept&) const = default;
};

/// Concept labels with keyword sets, plus neutral filler vocabulary. Serves as
/// the simulator's concept bank and as the stub LLM's world knowledge.
struct ConceptLexicon {
  std::vector<Concept> concepts;
  std::vector<std::string> filler;

  /// Case- and whitespace-insensitive label lookup.
  const Concept* find(std::string_view label) const;
  /// Concepts whose keyword list contains `word` (already normalized).
  std::vector<std::size_t> concepts_with_keyword(std::string_view word) const;
  /// Concepts named by `text`: exact label match, or label words contained
  /// in the text ("unappetizing foods and mold" names "unappetizing foods").
  std::vector<std::size_t> concepts_named_in(std::string_view text) const;

  nlohmann::json to_json() const;
  static ConceptLexicon from_json(const nlohmann::json& j);
  static ConceptLexicon load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  /// 16 concepts x 8 keywords and ~150 filler words, keyword sets disjoint.
  static ConceptLexicon toy();
  /// First `n` concepts of `toy()`.
  static ConceptLexicon toy(std::size_t n);

  bool operator==(const ConceptLexicon&) const = default;
};

}  // namespace gct
