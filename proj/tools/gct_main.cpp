#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "gct/config.hpp"
#include "gct/encoding.hpp"
#include "gct/evaluation.hpp"
#include "gct/pipeline.hpp"
#include "gct/report.hpp"
#include "gct/simulator.hpp"
#include "gct/storygen.hpp"
#include "gct/text.hpp"

using namespace gct;

namespace {

std::vector<Target> voxel_targets(const std::vector<VoxelId>& ids) {
  std::vector<Target> t;
  for (auto id : ids) t.push_back(Target::voxel(id));
  return t;
}

std::vector<ROIMask> load_rois(const std::string& path) {
  const auto j = Json::parse(read_text_file(path));
  std::vector<ROIMask> rois;
  for (const auto& r : j)
    rois.emplace_back(r.at("name").get<std::string>(), r.at("voxel_ids").get<std::vector<VoxelId>>(),
                      roi_kind_from_string(r.value("kind", std::string{"localizer"})));
  return rois;
}

void emit(const Json& j, const std::string& out) {
  if (out.empty()) {
    std::cout << j.dump(2) << "\n";
    return;
  }
  write_text_file(out, j.dump(2) + "\n");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gct: encoding models, explanations, driving stories and their evaluation"};
  app.footer(
      "Exit codes: 0 ok, 2 configuration error, 3 missing dependency, 4 stage failure.\n"
      "The http_chat LLM backend reads its API key from the variable named by llm.api_key_env\n"
      "(GCT_LLM_API_KEY by default).");
  app.require_subcommand(1);

  std::string config_path;
  bool force = false;

  // pipeline stages
  std::map<std::string, std::string> stage_help = {
      {"simulate", "simulate a subject, a training corpus and held-out runs"},
      {"fit", "fit the primary and secondary encoding models"},
      {"select", "select target voxels by test correlation and hull sampling"},
      {"stability", "stability of the selected voxels across the two feature spaces"},
      {"explain", "summarize and score explanations for the selected voxels"},
      {"storygen", "write candidate driving stories and pre-validate them"},
      {"present", "present every candidate story to the simulated subject"},
      {"report", "write the run report (text and CSV)"}};
  std::map<std::string, CLI::App*> stage_cmds;
  for (const auto& [name, help] : stage_help) {
    auto* sc = app.add_subcommand(name, help);
    sc->add_option("-c,--config", config_path, "pipeline config file")->required()->check(CLI::ExistingFile);
    sc->add_flag("-f,--force", force, "rerun even if up-to-date");
    stage_cmds[name] = sc;
  }

  std::vector<std::string> stage_list;
  auto* run = app.add_subcommand("run", "run stages in order (all by default)");
  run->add_option("-c,--config", config_path, "pipeline config file")->required()->check(CLI::ExistingFile);
  run->add_option("-s,--stage", stage_list, "stage names, in order");
  run->add_flag("-f,--force", force, "rerun even if up-to-date");

  auto* cfg = app.add_subcommand("config", "print the default config or its schema");
  bool schema = false;
  cfg->add_flag("--schema", schema, "print the key schema as JSON");

  // prevalidate
  std::string model_path, story_path, responses_path, out_path, transcript_path, rois_path, subject_path,
      target_file;
  std::vector<VoxelId> voxels;
  int lag = 3;
  auto* pre = app.add_subcommand("prevalidate", "predicted response of voxels to each story paragraph");
  pre->add_option("--model", model_path, "encoding model (.gctf)")->required()->check(CLI::ExistingFile);
  pre->add_option("--story", story_path, "story JSON")->required()->check(CLI::ExistingFile);
  pre->add_option("--voxel", voxels, "target voxel ids")->required();
  pre->add_option("--lag", lag, "HRF lag in TRs")->capture_default_str();
  pre->add_option("-o,--out", out_path, "output JSON (stdout if absent)");

  // evaluate: pipeline stage, or one analysis on files
  auto* ev = app.add_subcommand("evaluate", "score driving stories (pipeline stage or a single analysis)");
  ev->add_option("-c,--config", config_path, "pipeline config file; runs the evaluate stage")->check(CLI::ExistingFile);
  ev->add_flag("-f,--force", force, "rerun even if up-to-date");

  int n_perm = 10000;
  std::uint64_t seed = 0;
  double fdr_q = 0.05;
  auto* ev_drive = ev->add_subcommand("driving", "driving scores with permutation tests and FDR");
  ev_drive->add_option("--responses", responses_path, "responses (.gctf)")->required()->check(CLI::ExistingFile);
  ev_drive->add_option("--story", story_path, "story JSON")->required()->check(CLI::ExistingFile);
  ev_drive->add_option("--voxel", voxels, "target voxel ids (paragraph targets name them voxel:<id>)")->required();
  ev_drive->add_option("--lag", lag, "HRF lag in TRs")->capture_default_str();
  ev_drive->add_option("--n-perm", n_perm, "permutations")->capture_default_str();
  ev_drive->add_option("--seed", seed, "permutation seed")->capture_default_str();
  ev_drive->add_option("--fdr-q", fdr_q, "Benjamini-Hochberg level")->capture_default_str();
  ev_drive->add_option("-o,--out", out_path, "output prefix for .json and .csv (stdout if absent)");

  auto* ev_roi = ev->add_subcommand("roi", "ROI driving with per-voxel scores");
  ev_roi->add_option("--responses", responses_path, "responses (.gctf)")->required()->check(CLI::ExistingFile);
  ev_roi->add_option("--story", story_path, "story JSON")->required()->check(CLI::ExistingFile);
  ev_roi->add_option("--rois", rois_path, "JSON list of {name, voxel_ids, kind}")->required()->check(CLI::ExistingFile);
  ev_roi->add_option("--lag", lag, "HRF lag in TRs")->capture_default_str();
  ev_roi->add_option("-o,--out", out_path, "output JSON");

  double radius = 4.0, spacing = 8.0;
  auto* ev_grid = ev->add_subcommand("candidates", "candidate circular regions over voxel coordinates");
  ev_grid->add_option("--subject", subject_path, "subject JSON carrying coordinates")->required()->check(CLI::ExistingFile);
  ev_grid->add_option("--radius", radius, "circle radius, mm")->capture_default_str();
  ev_grid->add_option("--spacing", spacing, "lattice spacing, mm")->capture_default_str();
  ev_grid->add_option("-o,--out", out_path, "output JSON");

  std::vector<std::string> ngrams;
  int window = 8;
  double test_lag = 6.0;
  auto* ev_lock = ev->add_subcommand("locked", "response time-locked to key n-gram onsets");
  ev_lock->add_option("--responses", responses_path, "responses (.gctf)")->required()->check(CLI::ExistingFile);
  ev_lock->add_option("--transcript", transcript_path, "transcript CSV")->required()->check(CLI::ExistingFile);
  ev_lock->add_option("--voxel", voxels, "voxel ids averaged into the target")->required();
  ev_lock->add_option("--ngram", ngrams, "key n-grams")->required();
  ev_lock->add_option("--window", window, "TRs on each side")->capture_default_str();
  ev_lock->add_option("--test-lag", test_lag, "lag tested against zero, s")->capture_default_str();
  ev_lock->add_option("-o,--out", out_path, "output JSON");

  auto* ev_cb = ev->add_subcommand("checkerboard", "reconstruct a spatial pattern from response rows");
  ev_cb->add_option("--responses", responses_path, "responses (.gctf)")->required()->check(CLI::ExistingFile);
  ev_cb->add_option("--voxel", voxels, "patch voxel ids")->required();
  ev_cb->add_option("--target", target_file, "JSON array, one value per patch voxel")->required()->check(CLI::ExistingFile);
  ev_cb->add_option("-o,--out", out_path, "output JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    RunOptions opts;
    opts.force = force;
    opts.log = &std::cerr;

    for (const auto& [name, sc] : stage_cmds) {
      if (!sc->parsed()) continue;
      const auto config = load_config(config_path);
      run_pipeline(config, stage_from_string(name), opts);
      if (name == "report") {
        const auto manifest = load_manifest(config.workdir);
        for (const auto& f : verify_manifest(config.workdir, manifest))
          std::cerr << "warning: " << f << " differs from the manifest\n";
        std::cout << read_text_file(std::filesystem::path(config.workdir) / "report/report.txt");
      }
      return 0;
    }
    if (run->parsed()) {
      const auto config = load_config(config_path);
      std::vector<Stage> stages;
      for (const auto& s : stage_list) stages.push_back(stage_from_string(s));
      if (stages.empty()) stages = all_stages();
      run_pipeline(config, stages, opts);
      return 0;
    }
    if (cfg->parsed()) {
      std::cout << (schema ? config_schema().dump(2) + "\n" : emit_config(PipelineConfig{}));
      return 0;
    }
    if (pre->parsed()) {
      const auto model = load_model(model_path);
      const auto story = load_story(story_path);
      emit(encoding_prevalidation(model, story, voxel_targets(voxels), lag).to_json(), out_path);
      return 0;
    }
    if (ev->parsed()) {
      if (ev_drive->parsed()) {
        auto rep = driving_scores(load_responses(responses_path), load_story(story_path), voxel_targets(voxels), lag);
        PermutationOptions po;
        po.n_perm = n_perm;
        po.seed = seed;
        po.fdr_q = fdr_q;
        permutation_test(rep, po);
        if (out_path.empty()) {
          std::cout << rep.to_json().dump(2) << "\n";
        } else {
          write_text_file(out_path + ".json", rep.to_json().dump(2) + "\n");
          write_text_file(out_path + ".csv", rep.to_csv());
        }
      } else if (ev_roi->parsed()) {
        emit(roi_driving(load_responses(responses_path), load_story(story_path), load_rois(rois_path), lag).to_json(),
             out_path);
      } else if (ev_grid->parsed()) {
        emit(candidate_roi_grid(load_subject(subject_path).coords, radius, spacing).to_json(), out_path);
      } else if (ev_lock->parsed()) {
        const auto tr = load_transcript(transcript_path);
        const auto onsets = key_ngram_onsets(tr, ngrams);
        ROIMask mask("locked", voxels);
        emit(ngram_locked_response(load_responses(responses_path), Target::roi(mask), onsets, window, test_lag).to_json(),
             out_path);
      } else if (ev_cb->parsed()) {
        const auto vals = Json::parse(read_text_file(target_file)).get<std::vector<double>>();
        const Vector target = Eigen::Map<const Vector>(vals.data(), static_cast<Eigen::Index>(vals.size()));
        const auto rec = checkerboard_reconstruct(load_responses(responses_path), voxels, target);
        emit({{"r", rec.r}, {"pattern", std::vector<double>(rec.pattern.data(), rec.pattern.data() + rec.pattern.size())}},
             out_path);
      } else {
        if (config_path.empty()) throw ConfigError("evaluate needs --config or an analysis subcommand");
        run_pipeline(load_config(config_path), Stage::evaluate, opts);
      }
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
