#include <gtest/gtest.h>

#include "gct/signal.hpp"
#include "gct/stats.hpp"
#include "support/bench.hpp"

using namespace gct;

namespace {

Transcript three_words() { return Transcript("s", {{"the", 0.0, 0.3}, {"dog", 0.3, 0.6}, {"ran", 0.6, 0.9}}); }

WordFeatureSeq one_word(double onset, const Vector& v) {
  WordFeatureSeq s;
  s.onsets = {onset};
  s.rows = v.transpose();
  return s;
}

}  // namespace

TEST(Extractor, DeterministicAndNormalized) {
  const auto e = hashed_ngram_extractor(0, 64);
  const auto a = e->embed(three_words()), b = hashed_ngram_extractor(0, 64)->embed(three_words());
  ASSERT_EQ(a.rows(), 3);
  ASSERT_EQ(a.cols(), 64);
  EXPECT_EQ(a, b);
  for (Eigen::Index r = 0; r < a.rows(); ++r) EXPECT_NEAR(a.row(r).norm(), 1.0, 1e-6);
}

TEST(Extractor, SameContextSameVector) {
  const auto e = hashed_ngram_extractor(0, 64);
  const Transcript t1("a", {{"x", 0, 0.2}, {"the", 0.2, 0.4}, {"big", 0.4, 0.6}, {"dog", 0.6, 0.8}});
  const Transcript t2("b", {{"the", 5, 5.2}, {"big", 5.2, 5.4}, {"dog", 5.4, 5.6}, {"ran", 5.6, 5.8}});
  EXPECT_EQ(Vector(e->embed(t1).row(3)), Vector(e->embed(t2).row(2)));
}

TEST(Extractor, SeedsGiveDistinctSpaces) {
  const auto corpus = generate_corpus(ConceptLexicon::toy(), CorpusSpec{.n_stories = 2, .words_per_story = 200});
  for (double shared : {0.0, 0.5}) {
    const auto a = hashed_ngram_extractor(1, 64, 3, shared)->embed(corpus[0]);
    const auto b = hashed_ngram_extractor(2, 64, 3, shared)->embed(corpus[0]);
    const auto differ = ((a - b).array().abs() > 0).count();
    EXPECT_GE(static_cast<double>(differ), 0.99 * static_cast<double>(a.size())) << shared;
  }
}

TEST(Extractor, SharedComponentIsSeedIndependent) {
  const auto a = hashed_ngram_extractor(1, 64, 3, 1.0)->embed(three_words());
  const auto b = hashed_ngram_extractor(2, 64, 3, 1.0)->embed(three_words());
  EXPECT_EQ(a, b);
  EXPECT_THROW(hashed_ngram_extractor(1, 64, 3, 1.5), InvalidArgument);
}

TEST(Extractor, RandomPairsAreNearlyOrthogonal) {
  int small = 0;
  for (std::uint64_t s = 0; s < 1000; ++s) {
    HashedNgramExtractor e(s, 64, 1);
    small += std::abs(cosine(e.hash_embedding("dog"), e.hash_embedding("cat"))) < 0.5;
  }
  EXPECT_GT(small, 990);
}

TEST(Extractor, SpecRoundTrip) {
  ExtractorSpec s;
  s.seed = 77;
  s.shared = 0.25;
  EXPECT_EQ(ExtractorSpec::from_json(s.to_json()), s);
  EXPECT_NE(make_extractor(s)->id(), hashed_ngram_extractor(77, s.dim)->id());
}

TEST(Extractor, FileBackedPassesThrough) {
  const auto dir = bench::temp_dir("wordfeat");
  const auto t = three_words();
  const auto seq = embed_words(*hashed_ngram_extractor(4, 16), t);
  save_word_features(dir / "s.gctf", seq);
  FileFeatureExtractor fe(dir);
  EXPECT_EQ(fe.dim(), 16);
  EXPECT_EQ(fe.embed(t), seq.rows.cast<float>().cast<double>());
  EXPECT_THROW(fe.embed(Transcript("other", {{"a", 0, 1}})), ExtractorError);
  std::filesystem::remove_all(dir);
}

TEST(Lanczos, KernelZerosAndSymmetry) {
  EXPECT_DOUBLE_EQ(lanczos_kernel(0.0, 3), 1.0);
  for (int k : {-2, -1, 1, 2}) EXPECT_NEAR(lanczos_kernel(k, 3), 0.0, 1e-15);
  EXPECT_EQ(lanczos_kernel(3.5, 3), 0.0);
  EXPECT_DOUBLE_EQ(lanczos_kernel(0.37, 3), lanczos_kernel(-0.37, 3));
}

TEST(Lanczos, WordOnTickAndMidway) {
  TRGrid g;
  g.n_volumes = 12;
  Vector v(3);
  v << 1.0, -2.0, 0.5;
  const auto on = lanczos_resample(one_word(10.0, v), g);
  EXPECT_TRUE(Vector(on.values.row(5)).isApprox(v, 1e-14));
  for (int r : {3, 4, 6, 7}) EXPECT_LT(on.values.row(r).norm(), 1e-14);
  const auto mid = lanczos_resample(one_word(11.0, v), g);
  EXPECT_TRUE(Vector(mid.values.row(5)).isApprox(Vector(mid.values.row(6)), 1e-14));
  EXPECT_GT(mid.values(5, 0), 0.5);
}

TEST(Fir, SingleShiftAndDimensions) {
  FeatureMatrix fm;
  fm.grid.n_volumes = 5;
  fm.values.resize(5, 2);
  fm.values << 1, 2, 3, 4, 5, 6, 7, 8, 9, 10;
  const std::vector<double> d = {-2.0};
  const auto e = fir_expand(fm, d);
  ASSERT_EQ(e.values.cols(), 2);
  EXPECT_EQ(Vector(e.values.row(0)), Vector::Zero(2));
  EXPECT_EQ(e.values.bottomRows(4), fm.values.topRows(4));

  fm.values = Matrix::Ones(5, 64);
  const auto full = fir_expand(fm);
  EXPECT_EQ(full.values.cols(), 256);
  EXPECT_EQ(full.base_dim(), 64);
  EXPECT_EQ(full.lag_set.size(), 4u);
  const std::vector<double> odd = {-3.0};
  EXPECT_THROW(fir_expand(fm, odd), NonIntegerDelay);
}

TEST(SavGol, QuadraticsAndConstantsVanish) {
  ResponseMatrix rm;
  rm.grid.n_volumes = 90;
  rm.voxel_ids = {0, 1};
  rm.values.resize(90, 2);
  for (int i = 0; i < 90; ++i) {
    rm.values(i, 0) = 1.5 + 0.3 * i - 0.01 * i * i;
    rm.values(i, 1) = 4.0;
  }
  const auto d = savgol_detrend(rm);
  EXPECT_LT(d.values.cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_EQ(savgol_window_volumes(120.0, 2.0), 61);
}

TEST(SavGol, KeepsNoiseVariance) {
  double mean_var = 0.0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    std::uint64_t st = derive_seed(42, s);
    ResponseMatrix rm;
    rm.grid.n_volumes = 400;
    rm.voxel_ids = {0};
    rm.values.resize(400, 1);
    for (int i = 0; i < 400; ++i) rm.values(i, 0) = 1e-4 * (i - 200.0) * (i - 200.0) + standard_normal(st);
    const Vector r = savgol_detrend(rm).values.col(0);
    const double var = (r.array() - r.mean()).square().sum() / (r.size() - 1);
    mean_var += var / 100.0;
  }
  EXPECT_NEAR(mean_var, 1.0, 0.1);
}

TEST(Zscore, TrimAndUnitVariance) {
  std::uint64_t st = 2;
  ResponseMatrix rm;
  rm.grid.n_volumes = 110;
  rm.voxel_ids = {0, 1, 2};
  rm.values.resize(110, 3);
  for (int i = 0; i < 110; ++i) {
    rm.values(i, 0) = 10 + 3 * standard_normal(st);
    rm.values(i, 1) = 7.0;
    rm.values(i, 2) = -standard_normal(st);
  }
  ZscoreReport rep;
  const auto z = trim_and_zscore(rm, &rep);
  EXPECT_EQ(z.values.rows(), 90);
  EXPECT_TRUE(z.trimmed);
  EXPECT_EQ(rep.constant_voxels, std::vector<VoxelId>{1});
  EXPECT_EQ(z.values.col(1), Vector::Zero(90));
  for (int c : {0, 2}) {
    EXPECT_NEAR(z.values.col(c).mean(), 0.0, 1e-9);
    EXPECT_NEAR(z.values.col(c).squaredNorm() / 90.0, 1.0, 1e-9);
  }
}

TEST(Features, StoryPipelineShapes) {
  const auto t = generate_corpus(ConceptLexicon::toy(), CorpusSpec{.n_stories = 1, .words_per_story = 120})[0];
  FeatureSpec spec;
  const auto ex = make_extractor(spec.extractor);
  const auto g = TRGrid::covering(t.end_time());
  const auto fm = story_features(*ex, spec, t, g);
  EXPECT_EQ(fm.values.rows(), g.retained());
  EXPECT_EQ(fm.values.cols(), spec.extractor.dim * 4);
  EXPECT_TRUE(fm.values.allFinite());
  const auto full = story_features(*ex, spec, t, g, false);
  EXPECT_EQ(full.values.rows(), g.n_volumes);
  EXPECT_EQ(fm.values, full.values.middleRows(g.trim_head, g.retained()));
}
