#include <gtest/gtest.h>

#include <set>

#include "support/bench.hpp"

using namespace gct;

namespace {

// A story of `n` paragraphs of 20 words each, targets "voxel:i" in order.
Story block_story(int n) {
  Story s;
  s.story_id = "blocks";
  for (int i = 0; i < n; ++i) {
    Paragraph p;
    for (int w = 0; w < 20; ++w) p.text += (w ? " w" : "w") + std::to_string(w);
    p.targets = {"voxel:" + std::to_string(i)};
    s.paragraphs.push_back(p);
  }
  return s;
}

std::vector<Target> voxel_targets(int n) {
  std::vector<Target> t;
  for (int i = 0; i < n; ++i) t.push_back(Target::voxel(i));
  return t;
}

// Voxel t responds with `amp[t][p]` during paragraph p, plus Gaussian noise.
ResponseMatrix planted(const Story& s, const std::vector<std::vector<double>>& amp, double noise, std::uint64_t seed) {
  ResponseMatrix r;
  r.grid = s.grid();
  r.voxel_ids = bench::iota_ids(static_cast<int>(amp.size()));
  r.values = Matrix::Zero(r.grid.n_volumes, static_cast<Eigen::Index>(amp.size()));
  std::uint64_t st = seed;
  for (Eigen::Index i = 0; i < r.values.size(); ++i) r.values.data()[i] = noise * standard_normal(st);
  const auto rows = paragraph_rows(r, s, 3);
  for (std::size_t t = 0; t < amp.size(); ++t)
    for (std::size_t p = 0; p < rows.size(); ++p)
      for (int row : rows[p]) r.values(row, static_cast<Eigen::Index>(t)) += amp[t][p];
  return r;
}

std::vector<std::vector<double>> diagonal(int n, double a) {
  std::vector<std::vector<double>> m(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(n), 0.0));
  for (int i = 0; i < n; ++i) m[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)] = a;
  return m;
}

}  // namespace

TEST(Driving, ZeroResponseScoresZero) {
  const auto s = block_story(5);
  const auto r = planted(s, diagonal(5, 0.0), 0.0, 1);
  const auto rep = driving_scores(r, s, voxel_targets(5));
  ASSERT_EQ(rep.scores.size(), 5);
  EXPECT_EQ(rep.scores.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(rep.fraction_positive(), 0.0);
}

TEST(Driving, CrossMatrixDefinition) {
  const auto s = block_story(3);
  const auto r = planted(s, {{3, 1, 2}, {0, 0, 0}, {0, 0, 0}}, 0.0, 1);
  const auto rep = driving_scores(r, s, voxel_targets(3));
  EXPECT_NEAR(rep.cross(0, 0), 3 - 1.5, 1e-12);
  EXPECT_NEAR(rep.cross(0, 1), 1 - 2.5, 1e-12);
  EXPECT_NEAR(rep.cross(0, 2), 2 - 2.0, 1e-12);
  EXPECT_EQ(rep.assignments[1], (Assignment{1, 1}));
}

TEST(Permutation, ExhaustiveSmallStory) {
  const auto s = block_story(4);
  auto rep = driving_scores(planted(s, diagonal(4, 2.0), 0.1, 2), s, voxel_targets(4));
  permutation_test(rep, PermutationOptions{.n_perm = 500, .seed = 1});
  EXPECT_TRUE(rep.exhaustive);
  for (Eigen::Index i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(rep.p_values(i), 0.25);
  ASSERT_TRUE(rep.pooled.has_value());
  // the pooled null is sampled: all four land on their own paragraph once in 256 draws
  EXPECT_LT(rep.pooled->p, 0.02);
}

TEST(Permutation, ObservedBelowEveryNull) {
  const auto s = block_story(12);
  std::vector<std::vector<double>> amp(1, std::vector<double>(12, 1.0));
  amp[0][0] = -5.0;
  auto rep = driving_scores(planted(s, amp, 0.0, 3), s, voxel_targets(1));
  permutation_test(rep, PermutationOptions{.n_perm = 999, .seed = 4});
  EXPECT_FALSE(rep.exhaustive);
  EXPECT_DOUBLE_EQ(rep.p_values(0), 1.0);
  PermutationOptions ex{.n_perm = 10, .seed = 4, .exhaustive_max_paragraphs = 20};
  permutation_test(rep, ex);
  EXPECT_DOUBLE_EQ(rep.p_values(0), 1.0);
}

TEST(Permutation, MonteCarloFloorAndDeterminism) {
  const auto s = block_story(12);
  auto a = driving_scores(planted(s, diagonal(12, 3.0), 0.1, 5), s, voxel_targets(12));
  auto b = a;
  permutation_test(a, PermutationOptions{.n_perm = 199, .seed = 9});
  permutation_test(b, PermutationOptions{.n_perm = 199, .seed = 9});
  EXPECT_EQ(a.p_values, b.p_values);
  // about one draw in twelve lands on the driving paragraph itself
  for (Eigen::Index i = 0; i < 12; ++i) EXPECT_NEAR(a.p_values(i), 1.0 / 12, 0.06);
  EXPECT_EQ(std::count(a.significant.begin(), a.significant.end(), true), 0);
  EXPECT_THROW(permutation_test(a, PermutationOptions{.n_perm = 0}), InvalidArgument);
}

TEST(Fdr, BoundaryCases) {
  const std::vector<double> zeros(7, 0.0), ones(7, 1.0);
  for (bool b : bh_fdr(zeros)) EXPECT_TRUE(b);
  for (bool b : bh_fdr(ones)) EXPECT_FALSE(b);
  EXPECT_TRUE(bh_fdr(std::vector<double>{}).empty());
}

TEST(Fdr, MatchesBruteForce) {
  std::uint64_t st = 77;
  for (int trial = 0; trial < 200; ++trial) {
    const int m = 1 + static_cast<int>(uniform01(st) * 20);
    std::vector<double> p(static_cast<std::size_t>(m));
    for (auto& v : p) v = std::pow(uniform01(st), 3);
    const double q = 0.1;
    // largest k with p_(k) <= k q / m
    auto sorted = p;
    std::sort(sorted.begin(), sorted.end());
    int k = 0;
    for (int i = 1; i <= m; ++i)
      if (sorted[static_cast<std::size_t>(i - 1)] <= i * q / m) k = i;
    const double cut = k ? sorted[static_cast<std::size_t>(k - 1)] : -1.0;
    const auto got = bh_fdr(p, q);
    for (int i = 0; i < m; ++i) EXPECT_EQ(got[static_cast<std::size_t>(i)], p[static_cast<std::size_t>(i)] <= cut);
  }
}

TEST(Fdr, FormatP) {
  EXPECT_EQ(format_p(0.02), "p=0.020");
  EXPECT_EQ(format_p(0.0094), "p=0.009");
  EXPECT_EQ(format_p(1.2e-6), "p<10^-5");
  EXPECT_EQ(format_p(0.0005), "p<10^-3");
}

TEST(Roi, SingleVoxelRoiMatchesVoxelScore) {
  const auto s = block_story(4);
  auto story = s;
  for (int i = 0; i < 4; ++i) story.paragraphs[static_cast<std::size_t>(i)].targets = {"R" + std::to_string(i)};
  const auto r = planted(s, diagonal(4, 1.5), 0.5, 6);
  std::vector<ROIMask> rois;
  for (int i = 0; i < 4; ++i) rois.emplace_back("R" + std::to_string(i), std::vector<VoxelId>{i});
  const auto roi = roi_driving(r, story, rois);
  const auto vox = driving_scores(r, s, voxel_targets(4));
  for (Eigen::Index i = 0; i < 4; ++i) {
    EXPECT_NEAR(roi.report.scores(i), vox.scores(i), 1e-12);
    EXPECT_NEAR(roi.voxel_scores.at("R" + std::to_string(i)).at(static_cast<VoxelId>(i)), vox.scores(i), 1e-12);
  }
  EXPECT_EQ(roi.report.cross.rows(), 4);
}

TEST(Roi, MicroRoiTTest) {
  const auto s = block_story(6);
  auto story = s;
  story.paragraphs[2].targets = {"M"};
  std::vector<std::vector<double>> amp(3, std::vector<double>(6, 0.0));
  for (auto& a : amp) a[2] = 2.0;
  const auto r = planted(s, amp, 0.5, 7);
  EXPECT_LT(micro_roi_ttest(r, story, ROIMask("M", {0, 1, 2})).p, 0.01);
  const auto null = planted(s, std::vector<std::vector<double>>(3, std::vector<double>(6, 0.0)), 0.5, 7);
  EXPECT_GT(micro_roi_ttest(null, story, ROIMask("M", {0, 1, 2})).p, 0.01);
}

namespace {
VoxelCoords flat_grid(int side) {
  VoxelCoords c;
  for (int i = 0; i < side * side; ++i) c[i] = {static_cast<double>(i % side), static_cast<double>(i / side), 0.0};
  return c;
}
}  // namespace

TEST(Candidates, RadiusBelowPitchGivesSingletons) {
  const auto set = candidate_roi_grid(flat_grid(12), 0.5, 2.0);
  ASSERT_FALSE(set.circles.empty());
  for (const auto& c : set.circles) EXPECT_EQ(c.members.size(), 1u);
}

TEST(Candidates, HalfSpacingRadiusDisjoint) {
  const auto coords = flat_grid(30);
  const auto set = candidate_roi_grid(coords, 3.0, 6.0);
  std::set<VoxelId> seen;
  for (const auto& c : set.circles)
    for (auto id : c.members) EXPECT_TRUE(seen.insert(id).second) << id;
  // the covering radius of a hexagonal lattice is spacing / sqrt(3)
  const auto cover = candidate_roi_grid(coords, 3.5, 6.0);
  std::set<VoxelId> all;
  for (const auto& c : cover.circles) all.insert(c.members.begin(), c.members.end());
  EXPECT_EQ(all.size(), coords.size());
  EXPECT_THROW(candidate_roi_grid({}, 4, 8), EmptyROI);
}

TEST(Candidates, StabilityFilter) {
  auto set = candidate_roi_grid(flat_grid(20), 4.0, 8.0);
  std::vector<double> stab(set.circles.size(), 0.2);
  stab[1] = 0.7;
  filter_stable(set, stab, 0.6);
  EXPECT_EQ(set.stable, std::vector<std::size_t>{1});
  EXPECT_EQ(set.masks().size(), set.circles.size());
}

TEST(Similarity, CosineExtremes) {
  Vector a(3), b(3);
  a << 1, 2, 3;
  b << 3, 0, -1;
  EXPECT_NEAR(cosine(a, a), 1.0, 1e-12);
  EXPECT_NEAR(cosine(a, b), 0.0, 1e-12);
  std::vector<DrivingVector> same = {{"A", a}, {"B", a}};
  std::vector<DrivingVector> pool;
  std::uint64_t st = 3;
  for (int i = 0; i < 20; ++i) {
    Vector v(3);
    for (auto& x : v) x = standard_normal(st);
    pool.push_back({"n" + std::to_string(i), v});
  }
  const auto res = selectivity_similarity(same, pool, 500, 1);
  EXPECT_NEAR(res.observed, 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(res.percentile, 100.0);
}

TEST(Locked, WhiteNoiseRarelySignificant) {
  int hits = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    ResponseMatrix r;
    r.grid = TRGrid{2.0, 200, 10, 10};
    r.voxel_ids = {0};
    r.values.resize(200, 1);
    std::uint64_t st = derive_seed(seed, "noise");
    for (auto& v : r.values.reshaped()) v = standard_normal(st);
    std::vector<double> onsets;
    for (int k = 0; k < 20; ++k) onsets.push_back(40.0 + 15.0 * k + 5.0 * uniform01(st));
    const auto lr = ngram_locked_response(r, Target::voxel(0), onsets);
    EXPECT_EQ(lr.lags_s.size(), 17u);
    hits += lr.peak_test.p < 0.05;
  }
  EXPECT_LE(hits, 8);
}

TEST(Locked, Onsets) {
  const Transcript t("s", {{"the", 0, 0.4}, {"old", 0.4, 0.8}, {"dog", 0.8, 1.2}, {"old", 1.2, 1.6}, {"dog", 1.6, 2.0}});
  EXPECT_EQ(key_ngram_onsets(t, {"old dog"}), (std::vector<double>{0.8, 1.6}));
  EXPECT_EQ(key_ngram_onsets(t, {"the"}), std::vector<double>{0.0});
  ResponseMatrix r;
  r.grid = TRGrid{2.0, 60, 0, 0};
  r.voxel_ids = {0};
  r.values = Matrix::Zero(60, 1);
  EXPECT_THROW(ngram_locked_response(r, Target::voxel(0), std::vector<double>{1, 2}), TooFewEvents);
}

TEST(Checkerboard, PlantedPatternRecovered) {
  const int n = 16;
  Vector target(n);
  for (int i = 0; i < n; ++i) target(i) = ((i % 4) + (i / 4)) % 2 ? 1.0 : -1.0;
  ResponseMatrix r;
  r.grid = TRGrid{2.0, 80, 0, 0};
  r.voxel_ids = bench::iota_ids(n);
  r.values.resize(80, n);
  std::uint64_t st = 4;
  for (int t = 0; t < 80; ++t) {
    const double a = standard_normal(st);
    for (int j = 0; j < n; ++j) r.values(t, j) = a * target(j) + 0.5 * standard_normal(st);
  }
  const auto rec = checkerboard_reconstruct(r, r.voxel_ids, target);
  EXPECT_GT(rec.r, 0.9);
  EXPECT_NEAR(rec.pattern.norm(), 1.0, 1e-12);
  EXPECT_NEAR(checkerboard_reconstruct(r, r.voxel_ids, Vector(-target)).r, rec.r, 1e-12);
  EXPECT_THROW(checkerboard_reconstruct(r, r.voxel_ids, Vector::Zero(n)), ZeroNormTarget);
  EXPECT_THROW(checkerboard_reconstruct(r, {0, 1}, target), DimensionMismatch);
  ResponseMatrix shortr = r;
  shortr.values = r.values.topRows(40);
  shortr.grid.n_volumes = 40;
  EXPECT_THROW(checkerboard_reconstruct(shortr, r.voxel_ids, target), InvalidArgument);
}

TEST(Alternatives, IdenticalAlternativesScoreAlike) {
  const auto s = block_story(5);
  const auto r = planted(s, diagonal(5, 2.0), 0.3, 8);
  const auto t = voxel_targets(5);
  const auto rep = alternative_voxel_check(r, s, t, t, PermutationOptions{.n_perm = 100});
  EXPECT_EQ(rep.targets.scores, rep.alternatives.scores);
}

namespace {

// Subject with one concept per voxel; a story with one paragraph per concept.
struct Simulated {
  SubjectAndLedger sl;
  Story story;
  ResponseMatrix responses;
  std::vector<Target> targets, alternatives;
};

const Simulated& simulated() {
  static const Simulated s = [] {
    Simulated out;
    const auto lex = ConceptLexicon::toy(8);
    out.sl = make_subject(bench::subject_spec(32, 21), lex);
    StubLLM llm(lex, 21);
    std::vector<StorySegment> segs;
    for (const auto& c : lex.concepts) {
      std::vector<VoxelId> vs;
      for (const auto& [id, cs] : out.sl.ledger.concepts)
        if (cs == std::vector<std::string>{c.label}) vs.push_back(id);
      if (vs.size() < 2) continue;
      out.targets.push_back(Target::voxel(vs[0]));
      out.alternatives.push_back(Target::voxel(vs[1]));
      StorySegment seg;
      seg.targets = {out.targets.back().name};
      seg.explanations = {c.label};
      segs.push_back(seg);
    }
    out.story = generate_story(llm, segs, StoryMode::single, 21);
    out.responses = bench::present(out.sl.subject, out.story.transcript(), out.story.grid(), 1);
    return out;
  }();
  return s;
}

}  // namespace

TEST(SimulatedDriving, DiagonalDominates) {
  const auto& s = simulated();
  ASSERT_GE(s.targets.size(), 5u);
  const auto rep = driving_scores(s.responses, s.story, s.targets);
  std::size_t wins = 0;
  for (std::size_t i = 0; i < rep.assignments.size(); ++i) {
    const auto t = static_cast<Eigen::Index>(rep.assignments[i].target);
    const auto p = static_cast<Eigen::Index>(rep.assignments[i].paragraph);
    Eigen::Index arg;
    rep.cross.row(t).maxCoeff(&arg);
    wins += arg == p;
  }
  EXPECT_GE(wins, (rep.assignments.size() * 4 + 4) / 5);
}

TEST(SimulatedDriving, AlternativesComparable) {
  const auto& s = simulated();
  const auto rep = alternative_voxel_check(s.responses, s.story, s.targets, s.alternatives, PermutationOptions{.n_perm = 200});
  const double a = rep.targets.scores.mean(), b = rep.alternatives.scores.mean();
  EXPECT_GT(a, 0.0);
  EXPECT_NEAR(b / a, 1.0, 0.5);
}
