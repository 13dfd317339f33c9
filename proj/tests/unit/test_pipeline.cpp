#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sys/wait.h>

#include "gct/config.hpp"
#include "gct/pipeline.hpp"
#include "gct/report.hpp"
#include "gct/text.hpp"
#include "support/bench.hpp"

using namespace gct;

namespace {

PipelineConfig small_config(const std::filesystem::path& dir) {
  PipelineConfig c;
  c.workdir = dir.string();
  c.simulate.n_voxels = 12;
  c.simulate.n_concepts = 4;
  c.simulate.n_train_stories = 2;
  c.simulate.n_test_stories = 1;
  c.simulate.test_repeats = 1;
  c.simulate.words_per_story = 200;
  return c;
}

int run_cli(const std::string& args) {
  const int rc = std::system((std::string(GCT_CLI_PATH) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST(Config, EmitParseRoundTrip) {
  PipelineConfig c;
  c.seed = 99;
  c.simulate.noise_sd = 0.37;
  c.extractor.shared = 0.25;
  c.cv.lambdas = {0.1, 10.0};
  c.llm.backend = "replay";
  c.llm.cassette_path = "x.jsonl";
  c.story.compare_versions = false;
  EXPECT_EQ(parse_config(emit_config(c)), c);
  EXPECT_EQ(parse_config(emit_config(PipelineConfig{})), PipelineConfig{});
  // shipped configs parse
  EXPECT_NO_THROW(load_config(std::string(GCT_SOURCE_DIR) + "/configs/default.toml"));
  EXPECT_NO_THROW(load_config(std::string(GCT_SOURCE_DIR) + "/configs/toy.toml"));
}

TEST(Config, ErrorsNameTheLine) {
  try {
    parse_config("seed = 3\n[simulate]\nbogus = 1\n");
    FAIL() << "accepted an unknown key";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_config("seed = \"x\"\n"), ConfigError);
  EXPECT_THROW(parse_config("[features]\nshared = 1.5\n"), ConfigError);
  EXPECT_THROW(parse_config("[nowhere]\n"), ConfigError);
  EXPECT_THROW(parse_config("seed = 1\nseed = 2\n"), ConfigError);
  EXPECT_EQ(parse_config("# comment only\n\nseed = 4 # trailing\n").seed, 4u);
}

TEST(Config, SchemaListsKeys) {
  const auto s = config_schema();
  ASSERT_TRUE(s.is_array() || s.is_object());
  const auto text = s.dump();
  for (const char* k : {"n_voxels", "shared", "hrf_lag_trs", "backend", "n_perm"})
    EXPECT_NE(text.find(k), std::string::npos) << k;
}

TEST(Pipeline, ExitCodes) {
  EXPECT_EQ(exit_code_for(ConfigError("x")), 2);
  EXPECT_EQ(exit_code_for(MissingDependency("x")), 3);
  EXPECT_EQ(exit_code_for(StageFailure("x")), 4);
  EXPECT_EQ(exit_code_for(std::runtime_error("x")), 4);
  EXPECT_EQ(stage_from_string("storygen"), Stage::storygen);
  EXPECT_THROW(stage_from_string("nope"), ConfigError);
  for (auto s : all_stages()) EXPECT_EQ(stage_from_string(to_string(s)), s);
}

TEST(Pipeline, LockIsExclusive) {
  const auto dir = bench::temp_dir("lock");
  {
    WorkdirLock a(dir);
    EXPECT_THROW(WorkdirLock b(dir), StageFailure);
  }
  EXPECT_NO_THROW(WorkdirLock c(dir));
  std::filesystem::remove_all(dir);
}

TEST(Pipeline, MissingDependency) {
  const auto dir = bench::temp_dir("missing");
  EXPECT_THROW(run_pipeline(small_config(dir), Stage::evaluate), MissingDependency);
  EXPECT_THROW(run_pipeline(small_config(dir), Stage::fit), MissingDependency);
  EXPECT_FALSE(std::filesystem::exists(dir / kLockName));
  std::filesystem::remove_all(dir);
}

TEST(Pipeline, RerunSkipsAndVerifies) {
  const auto dir = bench::temp_dir("rerun");
  const auto cfg = small_config(dir);
  auto m = run_pipeline(cfg, Stage::simulate);
  EXPECT_EQ(m.stages.at("simulate").status, "ran");
  for (const auto& f : stage_outputs(cfg, Stage::simulate)) EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  const auto first = m.stages.at("simulate").outputs;

  m = run_pipeline(cfg, Stage::simulate);
  EXPECT_EQ(m.stages.at("simulate").status, "skipped, up-to-date");
  EXPECT_TRUE(verify_manifest(dir, load_manifest(dir)).empty());

  // a damaged output is reported and regenerated identically
  write_text_file(dir / "data/ledger.json", "{}");
  EXPECT_EQ(verify_manifest(dir, load_manifest(dir)), std::vector<std::string>{"data/ledger.json"});
  m = run_pipeline(cfg, Stage::simulate);
  EXPECT_EQ(m.stages.at("simulate").status, "ran");
  EXPECT_EQ(m.stages.at("simulate").outputs, first);

  m = run_pipeline(cfg, Stage::simulate, RunOptions{.force = true});
  EXPECT_EQ(m.stages.at("simulate").status, "ran");

  // a changed slice of the config invalidates the stage
  auto cfg2 = cfg;
  cfg2.simulate.noise_sd = 2.0;
  m = run_pipeline(cfg2, Stage::simulate);
  EXPECT_EQ(m.stages.at("simulate").status, "ran");
  EXPECT_NE(m.stages.at("simulate").outputs, first);

  const auto back = RunManifest::from_json(load_manifest(dir).to_json());
  EXPECT_EQ(back.stages.at("simulate").key, m.stages.at("simulate").key);
  EXPECT_EQ(config_from_manifest(back, dir.string()), cfg2);
  std::filesystem::remove_all(dir);
}

TEST(Report, BuildsFromSummary) {
  Json entries = Json::array();
  for (int i = 0; i < 3; ++i)
    entries.push_back({{"target", "voxel:" + std::to_string(i)}, {"paragraph", i}, {"score", 0.5 * (i + 1)},
                       {"p", 0.01}, {"p_text", "p=0.010"}, {"significant", i > 0}});
  const Json driving = {{"story_id", "s1"}, {"entries", entries}, {"fraction_positive", 1.0}, {"mean_score", 1.0},
                        {"hrf_lag_trs", 3}, {"fdr_q", 0.05}, {"pooled", {{"p", 1e-4}, {"mean_score", 1.0}, {"p_text", "p<10^-3"}}}};
  const Json summary = {{"selected", "c0"},
                        {"seed", 1},
                        {"explained", 3},
                        {"recovery", {{"matched", 2}, {"total", 3}}},
                        {"stories", {{{"candidate", "c0"}, {"prompt_version", "v1"}, {"prevalidation", 0.8}, {"driving", driving},
                                      {"explanations", {{"voxel:0", "music"}}}},
                                     {{"candidate", "c1"}, {"prompt_version", "v0"}, {"prevalidation", 0.2}, {"driving", driving}}}}};
  const auto r = build_report(summary);
  EXPECT_NE(r.text.find("recovered: 2 of 3"), std::string::npos);
  EXPECT_NE(r.text.find("music"), std::string::npos);
  EXPECT_EQ(std::count(r.driving_csv.begin(), r.driving_csv.end(), '\n'), 4);
  EXPECT_EQ(std::count(r.stories_csv.begin(), r.stories_csv.end(), '\n'), 3);
  EXPECT_EQ(std::count(r.versions_csv.begin(), r.versions_csv.end(), '\n'), 3);
  EXPECT_FALSE(r.plot.empty());
  EXPECT_NO_THROW(build_report(Json::object()));
}

TEST(Report, TextBars) {
  const auto s = text_bars({"a", "bb"}, {2.0, -1.0}, 10);
  const auto lines = split_lines(s);
  ASSERT_GE(lines.size(), 2u);
  EXPECT_EQ(std::count(lines[0].begin(), lines[0].end(), '#'), 10);
  EXPECT_NE(lines[1].find("|----- "), std::string::npos) << lines[1];
}

TEST(Cli, ExitCodes) {
  const auto dir = bench::temp_dir("cli");
  EXPECT_EQ(run_cli("config"), 0);
  EXPECT_EQ(run_cli("--bogus"), 2);
  write_text_file(dir / "bad.toml", "[simulate]\nnope = 1\n");
  EXPECT_EQ(run_cli("simulate -c " + (dir / "bad.toml").string()), 2);
  write_text_file(dir / "ok.toml", "workdir = \"" + (dir / "w").string() + "\"\n");
  EXPECT_EQ(run_cli("evaluate -c " + (dir / "ok.toml").string()), 3);
  std::filesystem::remove_all(dir);
}
