#include <gtest/gtest.h>

#include <cstring>

#include "gct/gctf.hpp"
#include "gct/text.hpp"
#include "support/bench.hpp"

using namespace gct;

namespace {

// reference FNV-1a, written out from the published constants
std::uint64_t ref_fnv(const std::string& s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

TEST(Hashing, FnvMatchesReference) {
  for (const std::string s : {"", "a", "foobar", "GCTFv001"}) EXPECT_EQ(fnv1a64(s), ref_fnv(s)) << s;
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(hex64(0xabcULL), "0000000000000abc");
}

TEST(Hashing, DerivedSeedsAreStableAndDistinct) {
  EXPECT_EQ(derive_seed(1, "noise"), derive_seed(1, "noise"));
  EXPECT_NE(derive_seed(1, "noise"), derive_seed(2, "noise"));
  EXPECT_NE(derive_seed(1, "noise"), derive_seed(1, "subject"));
  EXPECT_NE(derive_seed(1, std::uint64_t{0}), derive_seed(1, std::uint64_t{1}));
}

TEST(Hashing, StandardNormalMoments) {
  std::uint64_t st = 3;
  double s = 0, s2 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = standard_normal(st);
    s += z;
    s2 += z * z;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.02);
}

TEST(Transcript, ParsesMinimalFile) {
  const auto t = parse_transcript("token,onset_s,offset_s\ni,0.0,0.3\nsaw,0.3,0.6\nhim,0.6,0.9\n", "s");
  ASSERT_EQ(t.size(), 3u);
  EXPECT_EQ(t.words()[1].token, "saw");
  EXPECT_DOUBLE_EQ(t.end_time(), 0.9);
}

TEST(Transcript, RejectsDecreasingOnsets) {
  EXPECT_THROW(parse_transcript("token,onset_s,offset_s\na,5.0,5.2\nb,4.0,4.2\n", "s"), OrderError);
}

TEST(Transcript, RejectsMalformedRows) {
  EXPECT_THROW(parse_transcript("token,onset_s,offset_s\na,zero,1\n", "s"), ParseError);
  EXPECT_THROW(parse_transcript("token,onset_s,offset_s\na,1\n", "s"), ParseError);
  EXPECT_THROW(Transcript("s", {{"a", 1.0, 0.5}}), Error);
  EXPECT_THROW(Transcript("s", {{"", 1.0, 1.5}}), Error);
}

TEST(Transcript, FileRoundTripIsExact) {
  const auto dir = bench::temp_dir("transcript");
  const Transcript t("story", {{"Hello,", 0.1, 0.35}, {"world", 1.0 / 3.0, 2.0 / 3.0}, {"\"q\"", 0.7, 0.9}});
  save_transcript(dir / "story.csv", t);
  EXPECT_EQ(load_transcript(dir / "story.csv"), t);
  std::filesystem::remove_all(dir);
}

TEST(NGrams, EnumeratesAllWindows) {
  const Transcript t("s", {{"a", 0, 0.2}, {"b", 0.2, 0.4}, {"c", 0.4, 0.6}});
  const auto ex = extract_ngrams(t, 3);
  std::set<std::string> got;
  for (const auto& o : ex.occurrences) got.insert(o.gram.text);
  EXPECT_EQ(got, (std::set<std::string>{"a", "b", "c", "a b", "b c", "a b c"}));
  for (const auto& o : ex.occurrences) EXPECT_DOUBLE_EQ(o.onset_s, t.words()[o.last_word].onset_s);
}

TEST(NGrams, CountsDuplicates) {
  const Transcript t("s", {{"a", 0, 0.2}, {"A.", 0.2, 0.4}});
  const auto ex = extract_ngrams(t, 3);
  ASSERT_EQ(ex.catalog.size(), 2u);
  EXPECT_EQ(ex.catalog.count_of("a"), 2u);
  EXPECT_EQ(ex.catalog.count_of("a a"), 1u);
}

TEST(NGrams, OccurrenceCountFormula) {
  std::uint64_t st = 1;
  for (int w : {0, 1, 2, 5, 17}) {
    std::vector<Word> words;
    for (int i = 0; i < w; ++i) words.push_back({"w" + std::to_string(splitmix64(st) % 4), i * 0.3, i * 0.3 + 0.2});
    const Transcript t("s", words);
    for (int n = 1; n <= 3; ++n) {
      std::size_t want = 0;
      for (int k = 1; k <= n; ++k) want += static_cast<std::size_t>(std::max(0, w - k + 1));
      EXPECT_EQ(extract_ngrams(t, n).occurrences.size(), want);
    }
  }
}

TEST(NGrams, NormalizesTokens) {
  EXPECT_EQ(normalize_token("Hello,"), "hello");
  EXPECT_EQ(normalize_token("--"), "");
  EXPECT_EQ(normalize_words("  The  DOG, ran! "), (std::vector<std::string>{"the", "dog", "ran"}));
}

TEST(Grid, TrimsAndCovers) {
  TRGrid g;
  g.n_volumes = 110;
  EXPECT_EQ(g.retained(), 90);
  EXPECT_NO_THROW(g.validate());
  g.n_volumes = 20;
  EXPECT_THROW(g.validate(), Error);
  const auto c = TRGrid::covering(100.0);
  EXPECT_GE(c.volume_time(c.n_volumes - 1), 120.0 - 2.0);
}

TEST(Roi, SortsAndChecksMembership) {
  const ROIMask m("x", {5, 1, 5, 3});
  EXPECT_EQ(m.voxel_ids, (std::vector<VoxelId>{1, 3, 5}));
  const std::vector<VoxelId> universe = {1, 2, 3};
  EXPECT_THROW(m.check_subset_of(universe), EmptyROI);
  EXPECT_THROW(ROIMask("empty", {}), EmptyROI);
  EXPECT_EQ(roi_kind_from_string(to_string(ROIKind::candidate_micro)), ROIKind::candidate_micro);
}

TEST(Gctf, BytesAreExact) {
  Matrix m(1, 2);
  m << 1.0, -2.0;
  const auto bytes = encode_gctf(m, Json::object());
  std::string payload = {'\x00', '\x00', '\x80', '\x3f', '\x00', '\x00', '\x00', '\xc0'};
  std::string want = "GCTFv001";
  want += std::string("\x01\x00\x00\x00", 4) + std::string("\x02\x00\x00\x00", 4) + payload;
  want += "{\"payload_fnv1a64\":\"" + hex64(ref_fnv(payload)) + "\"}";
  EXPECT_EQ(bytes, want);
}

TEST(Gctf, RoundTripAndChecksum) {
  std::uint64_t st = 5;
  Matrix m(7, 3);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<float>(standard_normal(st));
  auto bytes = encode_gctf(m, Json{{"note", "x"}});
  const auto f = decode_gctf(bytes);
  EXPECT_EQ(f.rows, 7u);
  EXPECT_EQ(f.trailer.at("note"), "x");
  EXPECT_EQ(f.to_matrix(), m);
  bytes[20] ^= 0x01;
  EXPECT_THROW(decode_gctf(bytes), FormatError);
  EXPECT_THROW(decode_gctf("GCTFv002xxxxxxxx"), FormatError);
  EXPECT_THROW(decode_gctf(std::string("GCTFv001\x05\x00\x00\x00\x05\x00\x00\x00", 16)), FormatError);
}

TEST(Gctf, ResponsesRoundTripBitExact) {
  const auto dir = bench::temp_dir("gctf");
  std::uint64_t st = 9;
  ResponseMatrix rm;
  rm.grid.n_volumes = 40;
  rm.voxel_ids = {3, 8, 11};
  rm.values.resize(40, 3);
  for (Eigen::Index i = 0; i < rm.values.size(); ++i) rm.values.data()[i] = static_cast<float>(standard_normal(st));
  save_responses(dir / "r.gctf", rm);
  const auto back = load_responses(dir / "r.gctf");
  EXPECT_EQ(back.voxel_ids, rm.voxel_ids);
  EXPECT_EQ(back.grid, rm.grid);
  EXPECT_EQ(back.values, rm.values);
  std::filesystem::remove_all(dir);
}

TEST(Text, FormatDoubleRoundTrips) {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, 12.0, -2.5e7}) EXPECT_EQ(std::stod(format_double(v)), v);
}
