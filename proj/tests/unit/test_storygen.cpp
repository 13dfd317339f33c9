#include <gtest/gtest.h>

#include "gct/text.hpp"
#include "support/bench.hpp"

using namespace gct;

namespace {

StorySegment seg(const std::string& target, const std::string& expl, std::vector<std::string> examples = {}) {
  StorySegment s;
  s.targets = {target};
  s.explanations = {expl};
  s.examples = std::move(examples);
  return s;
}

bool mentions_any(const std::string& text, const std::vector<std::string>& words) {
  const auto ws = normalize_words(text);
  return std::any_of(words.begin(), words.end(), [&](const std::string& w) { return contains_word(ws, w); });
}

std::vector<std::string> keywords(const std::string& label) { return ConceptLexicon::toy().find(label)->keywords; }

Paragraph para(const std::string& text, const std::string& target) {
  Paragraph p;
  p.text = text;
  p.targets = {target};
  return p;
}

std::string repeat(const std::string& w, int n) {
  std::string s;
  for (int i = 0; i < n; ++i) s += (i ? " " : "") + w;
  return s;
}

EncodingModel two_word_model() {
  EncodingModel m;
  m.features.extractor.dim = 64;
  m.features.extractor.shared = 0.0;
  const auto ex = make_extractor(m.features.extractor);
  const auto& h = static_cast<const HashedNgramExtractor&>(*ex);
  m.extractor_id = ex->id();
  m.weights = Matrix::Zero(256, 2);
  for (int k = 0; k < 4; ++k) {
    m.weights.block(64 * k, 0, 64, 1) = h.hash_embedding("cinnamon");
    m.weights.block(64 * k, 1, 64, 1) = h.hash_embedding("north");
  }
  m.voxel_ids = {0, 1};
  m.lambda_per_voxel = {1, 1};
  m.cv_r = Vector::Zero(2);
  return m;
}

}  // namespace

TEST(Story, SingleModeOneParagraphPerExplanation) {
  StubLLM llm(ConceptLexicon::toy(), 3);
  const std::vector<StorySegment> segs = {seg("voxel:1", "food preparation", {"warm oven"}), seg("voxel:2", "music"),
                                          seg("voxel:3", "weather")};
  const auto a = generate_story(llm, segs, StoryMode::single, 11);
  ASSERT_EQ(a.paragraphs.size(), 3u);
  EXPECT_TRUE(mentions_any(a.paragraphs[0].text, keywords("food preparation")));
  EXPECT_TRUE(mentions_any(a.paragraphs[1].text, keywords("music")));
  EXPECT_TRUE(mentions_any(a.paragraphs[2].text, keywords("weather")));
  EXPECT_NE(a.paragraphs[0].text.find("warm oven"), std::string::npos);
  EXPECT_EQ(a.paragraphs[1].targets, std::vector<std::string>{"voxel:2"});
  EXPECT_EQ(a.log.size(), 3u);
  EXPECT_EQ(generate_story(llm, segs, StoryMode::single, 11), a);
  EXPECT_EQ(Story::from_json(a.to_json()), a);
  EXPECT_NO_THROW(a.validate());
}

TEST(Story, PromptsCarryVersionAndHistory) {
  StubLLM llm(ConceptLexicon::toy(), 3);
  const std::vector<StorySegment> segs = {seg("a", "music"), seg("b", "family")};
  StoryOptions v0;
  v0.version = PromptVersion::v0_first_person;
  const auto s1 = generate_story(llm, segs, StoryMode::single, 1);
  const auto s0 = generate_story(llm, segs, StoryMode::single, 1, v0);
  EXPECT_NE(s1.log[0].prompt.back().content.find("long, coherent story"), std::string::npos);
  EXPECT_NE(s0.log[0].prompt.back().content.find("first person"), std::string::npos);
  // later paragraphs see the earlier exchange
  EXPECT_GT(s1.log[1].prompt.size(), s1.log[0].prompt.size());
  EXPECT_NE(s1.log[1].prompt.back().content.find("next paragraph"), std::string::npos);
}

TEST(Story, PairAndPolysemanticShapes) {
  StubLLM llm(ConceptLexicon::toy(), 4);
  const auto concepts = ConceptLexicon::toy().concepts;
  std::vector<StorySegment> pairs, poly;
  for (int i = 0; i < 8; ++i) {
    StorySegment p;
    p.targets = {"voxel:" + std::to_string(2 * i), "voxel:" + std::to_string(2 * i + 1)};
    p.explanations = {concepts[static_cast<std::size_t>(i)].label, concepts[static_cast<std::size_t>(i + 8)].label};
    pairs.push_back(p);
    StorySegment q;
    q.targets = {"voxel:" + std::to_string(i)};
    q.explanations = p.explanations;
    poly.push_back(q);
  }
  const auto ps = generate_story(llm, pairs, StoryMode::pair, 2);
  ASSERT_EQ(ps.paragraphs.size(), 8u);
  for (const auto& p : ps.paragraphs) {
    EXPECT_TRUE(p.multi);
    EXPECT_EQ(p.targets.size(), 2u);
  }
  const auto po = generate_story(llm, poly, StoryMode::polysemantic, 2, StoryOptions{.max_paragraphs = 16});
  ASSERT_EQ(po.paragraphs.size(), 16u);
  EXPECT_EQ(po.paragraphs[0].targets, po.paragraphs[1].targets);
  EXPECT_NE(po.paragraphs[0].explanations, po.paragraphs[1].explanations);
}

TEST(Story, TimingFollowsCadence) {
  Story s;
  s.paragraphs = {para(repeat("a", 10), "x"), para(repeat("b", 5), "y")};
  const auto t = s.transcript();
  ASSERT_EQ(t.size(), 15u);
  EXPECT_DOUBLE_EQ(t.words()[0].onset_s, 10.0);
  EXPECT_DOUBLE_EQ(t.words()[1].onset_s, 10.4);
  const auto spans = s.paragraph_spans();
  EXPECT_DOUBLE_EQ(spans[1].first, 14.0);
  EXPECT_DOUBLE_EQ(spans[1].second, 16.0);
  EXPECT_EQ(paragraph_volumes(s, s.grid(), 1, 0), (std::vector<int>{7}));
  EXPECT_EQ(paragraph_volumes(s, s.grid(), 1, 3), (std::vector<int>{10}));
}

TEST(Selective, EmptySuppressionReducesToPlainStory) {
  StubLLM llm(ConceptLexicon::toy(), 9);
  SelectiveEntry e{"A", "music", {"the piano"}, "", {}};
  const auto sel = generate_selective_story(llm, "A", {}, {e}, 5);
  const auto plain = generate_story(llm, {seg("A", "music", {"the piano"})}, StoryMode::single, 5);
  EXPECT_EQ(sel, plain);
}

TEST(Selective, ExcludesSuppressedConcept) {
  StubLLM llm(ConceptLexicon::toy(), 9);
  const std::vector<SelectiveEntry> entries = {{"RSC", "location names", {}, "", {}}, {"OPA", "directions", {}, "", {}}};
  const auto s = generate_selective_story(llm, "RSC", {"OPA"}, entries, 5);
  ASSERT_EQ(s.paragraphs.size(), 1u);
  EXPECT_TRUE(mentions_any(s.paragraphs[0].text, keywords("location names")));
  EXPECT_FALSE(mentions_any(s.paragraphs[0].text, keywords("directions")));
  EXPECT_NE(s.log[0].prompt.back().content.find("Avoid mentioning anything related to \"directions\""), std::string::npos);
  EXPECT_THROW(generate_selective_story(llm, "RSC", {"RSC"}, entries, 5), InvalidArgument);
  EXPECT_THROW(generate_selective_story(llm, "RSC", {"PPA"}, entries, 5), InvalidArgument);
}

TEST(Selective, SuffixTableAndBans) {
  EXPECT_NE(roi_suffix("OPA").find("New York"), std::string::npos);
  EXPECT_EQ(banned_terms_for_suffix(roi_suffix("OPA")), (std::vector<std::string>{"new york", "europe"}));
  EXPECT_EQ(roi_suffix("RSC"), "");
  EXPECT_EQ(roi_suffix("nowhere"), "");
  EXPECT_EQ(banned_hits("We flew to New York, then Europe.", {"new york", "europe", "york city"}),
            (std::vector<std::string>{"new york", "europe"}));
  EXPECT_TRUE(banned_hits("Newyorker", {"new york"}).empty());

  // a location ROI prompt with the OPA suffix keeps city names out
  StubLLM llm(ConceptLexicon::toy(), 1);
  const std::vector<SelectiveEntry> entries = {{"OPA", "location names", {"new york"}, "", {}}};
  const auto s = generate_selective_story(llm, "OPA", {}, entries, 2);
  EXPECT_TRUE(banned_hits(s.paragraphs[0].text, {"new york", "europe"}).empty());
}

TEST(Matching, SaturatingAndUnrelated) {
  StubLLM llm(ConceptLexicon::toy(), 0);
  Story s;
  s.paragraphs = {para("cinnamon bake oven flour dough simmer chop recipe", "a"), para("the way it was then and there", "b")};
  const auto m = matching_score(llm, s, {"food preparation"});
  EXPECT_DOUBLE_EQ(m.fraction(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(m.fraction(1, 0), 0.0);
  EXPECT_EQ(paragraph_trigrams("a b").size(), 1u);
  EXPECT_EQ(paragraph_trigrams("a b c d").size(), 2u);
}

TEST(Matching, DiagonalDominanceAndEquivariance) {
  StubLLM llm(ConceptLexicon::toy(), 2);
  const std::vector<std::string> ex = {"food preparation", "music", "weather", "family"};
  std::vector<StorySegment> segs;
  for (std::size_t i = 0; i < ex.size(); ++i) segs.push_back(seg("t" + std::to_string(i), ex[i]));
  const auto s = generate_story(llm, segs, StoryMode::single, 3);
  const auto m = matching_score(llm, s, ex);
  for (Eigen::Index i = 0; i < 4; ++i) {
    Eigen::Index arg;
    m.z.row(i).maxCoeff(&arg);
    EXPECT_EQ(arg, i);
  }
  Story r = s;
  std::reverse(r.paragraphs.begin(), r.paragraphs.end());
  const auto mr = matching_score(llm, r, ex);
  EXPECT_EQ(mr.fraction, m.fraction.colwise().reverse());
  const auto pp = matching_score(llm, s, ex, ZAxis::per_paragraph);
  EXPECT_NEAR(pp.z.row(0).mean(), 0.0, 1e-12);
}

TEST(Prevalidation, PlantedModelDiagonal) {
  const auto m = two_word_model();
  Story s;
  s.paragraphs = {para(repeat("cinnamon", 40), "voxel:0"), para(repeat("north", 40), "voxel:1"),
                  para(repeat("cinnamon", 40), "voxel:0")};
  const std::vector<Target> targets = {Target::voxel(0), Target::voxel(1)};
  const auto pv = encoding_prevalidation(m, s, targets);
  for (Eigen::Index t = 0; t < 2; ++t) {
    Eigen::Index arg;
    pv.relative.row(t).maxCoeff(&arg);
    EXPECT_TRUE(s.paragraphs[static_cast<std::size_t>(arg)].targets[0] == targets[static_cast<std::size_t>(t)].name);
  }
  EXPECT_GT(pv.mean_diagonal(s), 0.0);

  Story swapped = s;
  for (auto& p : swapped.paragraphs) p.targets = {p.targets[0] == "voxel:0" ? "voxel:1" : "voxel:0"};
  EXPECT_EQ(select_best_stories({swapped, s}, m, targets, 2), (std::vector<std::size_t>{1, 0}));
  EXPECT_EQ(select_best_stories({s, s, swapped}, m, targets, 3), (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_EQ(select_best_stories({s, swapped}, m, targets, 1).size(), 1u);
}

TEST(Story, FileRoundTrip) {
  const auto dir = bench::temp_dir("story");
  StubLLM llm(ConceptLexicon::toy(), 3);
  const auto s = generate_story(llm, {seg("a", "animals")}, StoryMode::single, 1);
  save_story(dir / "s.json", s);
  EXPECT_EQ(load_story(dir / "s.json"), s);
  std::filesystem::remove_all(dir);
}
