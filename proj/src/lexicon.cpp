#include "gct/lexicon.hpp"

#include <algorithm>

#include "gct/core.hpp"
#include "gct/text.hpp"

namespace gct {

const Concept* ConceptLexicon::find(std::string_view label) const {
  auto key = collapse_whitespace(label);
  for (const auto& c : concepts)
    if (collapse_whitespace(c.label) == key) return &c;
  return nullptr;
}

std::vector<std::size_t> ConceptLexicon::concepts_with_keyword(std::string_view word) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < concepts.size(); ++i)
    if (contains_word(concepts[i].keywords, word)) out.push_back(i);
  return out;
}

std::vector<std::size_t> ConceptLexicon::concepts_named_in(std::string_view text) const {
  std::vector<std::size_t> out;
  if (const Concept* c = find(text)) {
    out.push_back(static_cast<std::size_t>(c - concepts.data()));
    return out;
  }
  auto words = normalize_words(text);
  for (std::size_t i = 0; i < concepts.size(); ++i) {
    auto label_words = normalize_words(concepts[i].label);
    bool all = !label_words.empty();
    for (const auto& lw : label_words) all = all && contains_word(words, lw);
    if (all) out.push_back(i);
  }
  return out;
}

nlohmann::json ConceptLexicon::to_json() const {
  nlohmann::json cs = nlohmann::json::array();
  for (const auto& c : concepts) cs.push_back({{"label", c.label}, {"keywords", c.keywords}});
  return {{"concepts", cs}, {"filler", filler}};
}

ConceptLexicon ConceptLexicon::from_json(const nlohmann::json& j) {
  ConceptLexicon lex;
  for (const auto& c : j.at("concepts"))
    lex.concepts.push_back({c.at("label").get<std::string>(), c.at("keywords").get<std::vector<std::string>>()});
  lex.filler = j.value("filler", std::vector<std::string>{});
  if (lex.concepts.empty()) throw ParseError("concept lexicon has no concepts");
  return lex;
}

ConceptLexicon ConceptLexicon::load(const std::filesystem::path& path) {
  try {
    return from_json(nlohmann::json::parse(read_text_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("lexicon " + path.string() + ": " + e.what());
  }
}

void ConceptLexicon::save(const std::filesystem::path& path) const { write_text_file(path, to_json().dump(2)); }

ConceptLexicon ConceptLexicon::toy() {
  ConceptLexicon lex;
  lex.concepts = {
      {"food preparation", {"cinnamon", "bake", "oven", "flour", "dough", "simmer", "chop", "recipe"}},
      {"location names", {"paris", "texas", "chicago", "europe", "tokyo", "york", "london", "brazil"}},
      {"directions", {"north", "left", "south", "turn", "east", "west", "straight", "corner"}},
      {"measurements", {"inches", "pounds", "meters", "gallons", "miles", "ounces", "feet", "degrees"}},
      {"communication", {"said", "asked", "told", "replied", "called", "answered", "whispered", "shouted"}},
      {"emotional expression", {"cried", "laughed", "tears", "smiled", "sobbing", "hugged", "grief", "joy"}},
      {"family", {"mother", "father", "sister", "brother", "grandmother", "uncle", "cousin", "daughter"}},
      {"music", {"guitar", "piano", "song", "melody", "drums", "chorus", "violin", "singer"}},
      {"weather", {"rain", "storm", "thunder", "snow", "clouds", "wind", "sunshine", "fog"}},
      {"animals", {"dog", "cat", "horse", "rabbit", "cow", "bird", "goat", "puppy"}},
      {"sports", {"football", "basketball", "goal", "coach", "tournament", "pitcher", "quarterback", "referee"}},
      {"medicine", {"doctor", "hospital", "nurse", "surgery", "medicine", "patient", "fever", "clinic"}},
      {"money", {"dollars", "bank", "cash", "salary", "loan", "price", "rent", "paycheck"}},
      {"unappetizing foods", {"mold", "rotten", "slime", "spoiled", "gristle", "sour", "mush", "stale"}},
      {"clothing", {"shirt", "jacket", "shoes", "dress", "scarf", "boots", "sweater", "hat"}},
      {"vehicles", {"car", "truck", "bus", "train", "bicycle", "motorcycle", "taxi", "tractor"}},
  };
  lex.filler = {
      "the",      "a",       "and",      "then",     "was",       "were",     "it",       "he",
      "she",      "they",    "we",       "i",        "of",        "to",       "in",       "on",
      "at",       "with",    "for",      "from",     "that",      "this",     "there",    "some",
      "very",     "just",    "again",    "later",    "soon",      "still",    "around",   "about",
      "something", "nothing", "thing",   "way",      "day",       "night",    "morning",  "moment",
      "went",     "came",    "looked",   "thought",  "knew",      "walked",   "sat",      "stood",
      "waited",   "opened",  "closed",   "found",    "took",      "gave",     "made",     "saw",
      "heard",    "kept",    "began",    "tried",    "wanted",    "needed",   "seemed",   "remembered",
      "noticed",  "moved",   "stayed",   "carried",  "held",      "pulled",   "pushed",   "reached",
      "watched",  "wondered", "started", "finished", "decided",   "believed", "door",     "window",
      "room",     "table",   "chair",    "wall",     "paper",     "box",      "book",     "letter",
      "idea",     "plan",    "question", "story",    "problem",   "reason",   "part",     "side",
      "end",      "old",     "new",      "small",    "large",     "long",     "short",    "quiet",
      "strange",  "simple",  "different", "same",    "whole",     "other",    "few",      "many",
      "several",  "good",    "bad",      "little",   "big",       "certain",  "careful",  "slow",
      "quick",    "early",   "late",     "real",     "true",      "open",     "empty",    "full",
      "slowly",   "quickly", "finally",  "suddenly", "quietly",   "really",   "almost",   "maybe",
      "perhaps",  "always",  "never",    "often",    "sometimes", "together", "already",  "once",
      "his",      "her",     "their",    "our",      "my",        "had",      "have",     "would",
      "could",    "not",     "but",      "so",       "because",   "while",    "when",     "where",
  };
  return lex;
}

ConceptLexicon ConceptLexicon::toy(std::size_t n) {
  auto lex = toy();
  if (n < lex.concepts.size()) lex.concepts.resize(n);
  return lex;
}

}  // namespace gct
