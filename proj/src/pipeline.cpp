#include "gct/pipeline.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <ctime>
#include <functional>
#include <set>

#include "gct/encoding.hpp"
#include "gct/evaluation.hpp"
#include "gct/explain.hpp"
#include "gct/report.hpp"
#include "gct/simulator.hpp"
#include "gct/storygen.hpp"
#include "gct/text.hpp"

namespace fs = std::filesystem;

namespace gct {

namespace {

constexpr const char* kVersion = "0.1.0";

const std::vector<std::pair<Stage, const char*>> kStageNames = {
    {Stage::simulate, "simulate"}, {Stage::fit, "fit"},           {Stage::select, "select"},
    {Stage::stability, "stability"}, {Stage::explain, "explain"}, {Stage::storygen, "storygen"},
    {Stage::present, "present"},   {Stage::evaluate, "evaluate"}, {Stage::report, "report"}};

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_json(const fs::path& path, const Json& j) { write_text_file(path, j.dump(2) + "\n"); }
Json read_json(const fs::path& path) {
  try {
    return Json::parse(read_text_file(path));
  } catch (const Json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::string train_id(int i) { return "train-" + std::to_string(i); }
std::string test_id(int i) { return "test-" + std::to_string(i); }

struct Candidate {
  std::string name;
  PromptVersion version;
  int index;
  bool eligible;
};

std::vector<Candidate> candidates(const PipelineConfig& c) {
  std::vector<Candidate> out;
  const auto main = c.story.prompt_version;
  const auto other = main == PromptVersion::v1_coherent ? PromptVersion::v0_first_person : PromptVersion::v1_coherent;
  for (int i = 0; i < c.story.n_candidates; ++i)
    out.push_back({"cand-" + to_string(main) + "-" + std::to_string(i), main, i, true});
  if (c.story.compare_versions)
    for (int i = 0; i < c.story.n_candidates; ++i)
      out.push_back({"cand-" + to_string(other) + "-" + std::to_string(i), other, i, false});
  return out;
}

std::vector<Stage> deps_of(Stage s) {
  switch (s) {
    case Stage::simulate: return {};
    case Stage::fit: return {Stage::simulate};
    case Stage::select: return {Stage::fit};
    case Stage::stability: return {Stage::simulate, Stage::fit, Stage::select};
    case Stage::explain: return {Stage::simulate, Stage::fit, Stage::select, Stage::stability};
    case Stage::storygen: return {Stage::fit, Stage::explain};
    case Stage::present: return {Stage::simulate, Stage::storygen};
    case Stage::evaluate: return {Stage::simulate, Stage::explain, Stage::storygen, Stage::present};
    case Stage::report: return {Stage::evaluate};
  }
  return {};
}

/// Config keys (section.key or section) each stage depends on.
std::vector<std::string> config_slice(Stage s) {
  switch (s) {
    case Stage::simulate: return {"seed", "simulate", "features.tr_s", "story.words_per_minute"};
    case Stage::fit: return {"seed", "features", "cv", "evaluate.detrend", "story.words_per_minute"};
    case Stage::select: return {"seed", "thresholds.r", "select"};
    case Stage::stability: return {"seed"};
    case Stage::explain: return {"seed", "explain", "llm"};
    case Stage::storygen: return {"seed", "story", "llm", "evaluate.hrf_lag_trs"};
    case Stage::present: return {"seed", "evaluate.repeats", "evaluate.detrend", "features.tr_s"};
    case Stage::evaluate: return {"seed", "evaluate", "thresholds.fdr_q"};
    case Stage::report: return {"seed"};
  }
  return {};
}

Json slice_json(const PipelineConfig& c, Stage s) {
  const Json all = c.to_json();
  Json out = Json::object();
  for (const auto& path : config_slice(s)) {
    const auto dot = path.find('.');
    if (dot == std::string::npos) out[path] = all.at(path);
    else out[path] = all.at(path.substr(0, dot)).at(path.substr(dot + 1));
  }
  return out;
}

// ---------------------------------------------------------------------------

struct Ctx {
  const PipelineConfig& cfg;
  fs::path dir;

  fs::path at(const std::string& rel) const { return dir / rel; }
  std::uint64_t seed(std::string_view name) const { return derive_seed(cfg.seed, name); }

  ConceptLexicon lexicon() const { return ConceptLexicon::load(at("data/lexicon.json")); }
  std::vector<Transcript> train_transcripts() const {
    std::vector<Transcript> out;
    for (int i = 0; i < cfg.simulate.n_train_stories; ++i)
      out.push_back(load_transcript(at("data/train/" + train_id(i) + ".csv"), train_id(i)));
    return out;
  }
  ResponseMatrix prep(const ResponseMatrix& raw) const {
    return cfg.evaluate.detrend ? preprocess_responses(raw) : trim_and_zscore(raw);
  }
  std::unique_ptr<LLMClient> llm() const {
    LLMSpec spec = cfg.llm;
    spec.seed = derive_seed(cfg.seed, "llm") ^ cfg.llm.seed;
    return make_llm(spec);
  }
};

void run_simulate(const Ctx& c) {
  const auto& s = c.cfg.simulate;
  auto lex = s.lexicon.empty() ? ConceptLexicon::toy() : ConceptLexicon::load(s.lexicon);
  if (static_cast<int>(lex.concepts.size()) < s.n_concepts)
    throw InvalidArgument("lexicon has " + std::to_string(lex.concepts.size()) + " concepts, " +
                          std::to_string(s.n_concepts) + " requested");
  lex.concepts.resize(static_cast<std::size_t>(s.n_concepts));
  fs::create_directories(c.at("data/train"));
  fs::create_directories(c.at("data/test"));
  lex.save(c.at("data/lexicon.json"));

  SubjectSpec ss;
  ss.n_voxels = s.n_voxels;
  ss.polysemantic_fraction = s.polysemantic_fraction;
  ss.null_fraction = s.null_fraction;
  ss.noise_sd = s.noise_sd;
  ss.gain = s.gain;
  ss.drift_sd = s.drift_sd;
  ss.seed = c.seed("subject");
  // the subject's word space matches the stub feature dimension
  if (c.cfg.extractor.kind == "hashed") ss.embedding_dim = c.cfg.extractor.dim;
  auto [subject, ledger] = make_subject(ss, lex);

  CorpusSpec cs;
  cs.words_per_story = s.words_per_story;
  cs.word_duration_s = 60.0 / c.cfg.story.words_per_minute;
  cs.duration_jitter_s = cs.word_duration_s / 4;
  cs.seed = c.seed("corpus");
  cs.n_stories = s.n_train_stories;
  const auto train = generate_corpus(lex, cs, "train");
  cs.n_stories = s.n_test_stories;
  const auto test = generate_corpus(lex, cs, "test");

  const Json prov{{"subject_seed", ss.seed}};
  for (const auto& t : train) {
    const auto grid = TRGrid::covering(t.end_time(), c.cfg.tr_s);
    auto run = simulate_run(subject, t, grid, 0);
    ledger.record_run(t.story_id(), run.snr);
    save_transcript(c.at("data/train/" + t.story_id() + ".csv"), t);
    save_responses(c.at("data/train/" + t.story_id() + ".gctf"), run.responses, prov);
  }
  for (const auto& t : test) {
    const auto grid = TRGrid::covering(t.end_time(), c.cfg.tr_s);
    save_transcript(c.at("data/test/" + t.story_id() + ".csv"), t);
    for (int r = 0; r < s.test_repeats; ++r) {
      const auto rid = t.story_id() + "-r" + std::to_string(r);
      auto run = simulate_run(subject, t, grid, static_cast<std::uint64_t>(r) + 1);
      ledger.record_run(rid, run.snr);
      save_responses(c.at("data/test/" + rid + ".gctf"), run.responses, prov);
    }
  }
  save_subject(c.at("data/subject.json"), subject);
  write_json(c.at("data/ledger.json"), ledger.to_json());
}

void run_fit(const Ctx& c) {
  const auto& s = c.cfg.simulate;
  const auto fa = c.cfg.primary_features(), fb = c.cfg.secondary_features();
  const auto ea = make_extractor(fa.extractor), eb = make_extractor(fb.extractor);
  std::vector<FeatureMatrix> xa, xb;
  std::vector<ResponseMatrix> ys;
  for (const auto& t : c.train_transcripts()) {
    auto y = c.prep(load_responses(c.at("data/train/" + t.story_id() + ".gctf")));
    xa.push_back(story_features(*ea, fa, t, y.grid));
    xb.push_back(story_features(*eb, fb, t, y.grid));
    ys.push_back(std::move(y));
  }
  const auto y_train = stack_rows(ys);
  auto ma = fit_ridge_cv(stack_rows(xa), y_train, c.cfg.cv, fa);
  auto mb = fit_ridge_cv(stack_rows(xb), y_train, c.cfg.cv, fb);

  std::vector<FeatureMatrix> ta, tb;
  std::vector<ResponseMatrix> ty;
  for (int i = 0; i < s.n_test_stories; ++i) {
    const auto t = load_transcript(c.at("data/test/" + test_id(i) + ".csv"), test_id(i));
    std::vector<ResponseMatrix> reps;
    for (int r = 0; r < s.test_repeats; ++r)
      reps.push_back(c.prep(load_responses(c.at("data/test/" + test_id(i) + "-r" + std::to_string(r) + ".gctf"))));
    auto avg = average_repeats(reps);
    ta.push_back(story_features(*ea, fa, t, avg.grid));
    tb.push_back(story_features(*eb, fb, t, avg.grid));
    ty.push_back(std::move(avg));
  }
  const auto y_test = stack_rows(ty);
  const auto eva = evaluate_test(ma, stack_rows(ta), y_test);
  const auto evb = evaluate_test(mb, stack_rows(tb), y_test);
  ma.test_r = eva.r;
  mb.test_r = evb.r;
  fs::create_directories(c.at("models"));
  save_model(c.at("models/primary.gctf"), ma);
  save_model(c.at("models/secondary.gctf"), mb);
  write_json(c.at("models/test.json"), {{"primary_mean_r", eva.mean_r},
                                        {"secondary_mean_r", evb.mean_r},
                                        {"voxel_ids", eva.voxel_ids},
                                        {"primary_r", std::vector<double>(eva.r.data(), eva.r.data() + eva.r.size())},
                                        {"secondary_r", std::vector<double>(evb.r.data(), evb.r.data() + evb.r.size())}});
}

void run_select(const Ctx& c) {
  const auto model = load_model(c.at("models/primary.gctf"));
  int above = 0;
  for (Eigen::Index i = 0; i < model.test_r.size(); ++i) above += model.test_r(i) > c.cfg.r_threshold;
  if (above < 1) throw InsufficientVoxels("no voxel exceeds r > " + format_double(c.cfg.r_threshold));
  const auto sel = select_voxels(model, std::min(c.cfg.n_targets, above), c.cfg.r_threshold, c.seed("select"));
  write_json(c.at("selection.json"), to_json(sel));
}

std::vector<VoxelId> selected_voxels(const Ctx& c) {
  return read_json(c.at("selection.json")).at("selected").get<std::vector<VoxelId>>();
}

void run_stability(const Ctx& c) {
  const auto a = load_model(c.at("models/primary.gctf")), b = load_model(c.at("models/secondary.gctf"));
  const auto train = c.train_transcripts();
  const auto catalog = build_catalog(train, 3);
  const auto voxels = selected_voxels(c);
  write_json(c.at("stability.json"), stability_score(a, b, catalog, voxels).to_json());
}

void run_explain(const Ctx& c) {
  const auto a = load_model(c.at("models/primary.gctf")), b = load_model(c.at("models/secondary.gctf"));
  const auto train = c.train_transcripts();
  const auto catalog = build_catalog(train, 3);
  NGramScorer sa(a, catalog), sb(b, catalog);
  auto llm = c.llm();
  SascOptions opts = c.cfg.sasc;
  opts.seed = derive_seed(c.seed("explain"), c.cfg.sasc.seed);
  Json exps = Json::array(), failed = Json::array(), targets = Json::array();
  for (auto v : selected_voxels(c)) {
    const auto target = Target::voxel(v);
    try {
      exps.push_back(explain_target(*llm, sa, &sb, target, opts).to_json());
      targets.push_back(target.to_json());
    } catch (const NoViableCandidate& e) {
      failed.push_back({{"target", target.name}, {"error", e.what()}});
    }
  }
  write_json(c.at("explanations.json"), {{"explanations", exps}, {"targets", targets}, {"failed", failed}});
}

struct Explained {
  std::vector<Explanation> explanations;
  std::vector<Target> targets;
};

Explained load_explained(const Ctx& c) {
  const auto j = read_json(c.at("explanations.json"));
  Explained out;
  for (const auto& e : j.at("explanations")) out.explanations.push_back(Explanation::from_json(e));
  for (const auto& t : j.at("targets")) out.targets.push_back(Target::from_json(t));
  return out;
}

void run_storygen(const Ctx& c) {
  const auto ex = load_explained(c);
  if (ex.explanations.size() < 2)
    throw InvalidArgument("stories need at least two explained targets, have " + std::to_string(ex.explanations.size()));
  // one paragraph per distinct explanation, driven by its best-scoring voxel
  std::vector<std::size_t> distinct;
  for (std::size_t i = 0; i < ex.explanations.size(); ++i) {
    auto same = std::find_if(distinct.begin(), distinct.end(),
                             [&](std::size_t k) { return ex.explanations[k].text == ex.explanations[i].text; });
    if (same == distinct.end()) distinct.push_back(i);
    else if (ex.explanations[i].explanation_score > ex.explanations[*same].explanation_score) *same = i;
  }
  if (distinct.size() < 2)
    throw InvalidArgument("stories need at least two distinct explanations, have " + std::to_string(distinct.size()));
  std::vector<Explanation> pool;
  for (auto i : distinct) pool.push_back(ex.explanations[i]);
  const auto picked = pick_diverse(pool, static_cast<std::size_t>(c.cfg.story.max_targets), c.seed("diverse"));
  std::vector<StorySegment> segments;
  std::vector<Target> targets;
  for (auto pi : picked) {
    const auto i = distinct[pi];
    const auto& e = ex.explanations[i];
    StorySegment seg;
    seg.targets = {e.target};
    seg.explanations = {e.text};
    const auto n = std::min(e.top_ngrams.size(), static_cast<std::size_t>(c.cfg.story.n_examples));
    seg.examples.assign(e.top_ngrams.begin(), e.top_ngrams.begin() + static_cast<std::ptrdiff_t>(n));
    segments.push_back(std::move(seg));
    targets.push_back(ex.targets[i]);
  }
  const auto model = load_model(c.at("models/primary.gctf"));
  auto llm = c.llm();
  fs::create_directories(c.at("stories"));
  Json cands = Json::array();
  std::vector<Story> eligible;
  std::vector<std::string> eligible_names;
  for (const auto& cand : candidates(c.cfg)) {
    StoryOptions so;
    so.version = cand.version;
    so.words_per_minute = c.cfg.story.words_per_minute;
    so.max_paragraphs = std::max<std::size_t>(17, segments.size());
    auto story = generate_story(*llm, segments, StoryMode::single, derive_seed(c.seed("story"), static_cast<std::uint64_t>(cand.index)), so);
    save_story(c.at("stories/" + cand.name + ".json"), story);
    const auto pre = encoding_prevalidation(model, story, targets, c.cfg.evaluate.hrf_lag_trs);
    cands.push_back({{"candidate", cand.name},
                     {"story_id", story.story_id},
                     {"prompt_version", to_string(cand.version)},
                     {"eligible", cand.eligible},
                     {"prevalidation", pre.mean_diagonal(story)},
                     {"compliance_failures", story.compliance_failures()}});
    if (cand.eligible) {
      eligible.push_back(std::move(story));
      eligible_names.push_back(cand.name);
    }
  }
  const auto order = select_best_stories(eligible, model, targets, 1, c.cfg.evaluate.hrf_lag_trs);
  Json tj = Json::array();
  for (const auto& t : targets) tj.push_back(t.to_json());
  write_json(c.at("storygen.json"), {{"selected", eligible_names.at(order.at(0))}, {"candidates", cands}, {"targets", tj}});
}

void run_present(const Ctx& c) {
  const auto subject = load_subject(c.at("data/subject.json"));
  fs::create_directories(c.at("presentation"));
  for (const auto& cand : candidates(c.cfg)) {
    const auto story = load_story(c.at("stories/" + cand.name + ".json"));
    const auto tr = story.transcript();
    const auto grid = story.grid(c.cfg.tr_s);
    std::vector<ResponseMatrix> reps;
    for (int r = 0; r < c.cfg.evaluate.repeats; ++r) {
      const auto run_seed = derive_seed(derive_seed(c.seed("present"), cand.name), static_cast<std::uint64_t>(r));
      reps.push_back(c.prep(simulate_run(subject, tr, grid, run_seed).responses));
    }
    save_transcript(c.at("presentation/" + cand.name + ".csv"), tr);
    save_responses(c.at("presentation/" + cand.name + ".gctf"), average_repeats(reps));
  }
}

void run_evaluate(const Ctx& c) {
  const auto sg = read_json(c.at("storygen.json"));
  std::vector<Target> targets;
  for (const auto& t : sg.at("targets")) targets.push_back(Target::from_json(t));
  const auto ex = load_explained(c);
  Json expl = Json::object();
  for (const auto& e : ex.explanations) expl[e.target] = e.text;

  // planted concept recovery against the simulator's ledger
  const auto ledger = GroundTruthLedger::from_json(read_json(c.at("data/ledger.json")));
  int matched = 0;
  for (std::size_t i = 0; i < ex.explanations.size(); ++i) {
    const auto& w = ex.targets[i].weights;
    if (w.size() != 1) continue;
    auto it = ledger.concepts.find(w[0].first);
    if (it != ledger.concepts.end() &&
        std::find(it->second.begin(), it->second.end(), ex.explanations[i].text) != it->second.end())
      ++matched;
  }

  fs::create_directories(c.at("evaluation"));
  Json stories = Json::array();
  for (const auto& cand : sg.at("candidates")) {
    const auto name = cand.at("candidate").get<std::string>();
    const auto story = load_story(c.at("stories/" + name + ".json"));
    const auto resp = load_responses(c.at("presentation/" + name + ".gctf"));
    auto rep = driving_scores(resp, story, targets, c.cfg.evaluate.hrf_lag_trs);
    PermutationOptions po;
    po.n_perm = c.cfg.evaluate.n_perm;
    po.seed = derive_seed(c.seed("evaluate"), name);
    po.fdr_q = c.cfg.fdr_q;
    permutation_test(rep, po);
    write_json(c.at("evaluation/" + name + ".json"), rep.to_json());
    write_text_file(c.at("evaluation/" + name + ".csv"), rep.to_csv());
    stories.push_back({{"candidate", name},
                       {"story_id", story.story_id},
                       {"prompt_version", cand.at("prompt_version")},
                       {"prevalidation", cand.at("prevalidation")},
                       {"driving", rep.to_json()},
                       {"explanations", expl}});
  }
  // voxels sharing a story target's explanation, scored on that target's paragraph
  {
    const auto name = sg.at("selected").get<std::string>();
    const auto story = load_story(c.at("stories/" + name + ".json"));
    const auto resp = load_responses(c.at("presentation/" + name + ".gctf"));
    std::vector<Target> with_alt, alts;
    for (const auto& t : targets) {
      const auto text = expl.value(t.name, std::string{});
      for (std::size_t i = 0; i < ex.explanations.size(); ++i)
        if (ex.explanations[i].text == text && ex.targets[i].name != t.name) {
          with_alt.push_back(t);
          alts.push_back(ex.targets[i]);
          break;
        }
    }
    Json alt = {{"story", name}, {"pairs", 0}};
    if (!with_alt.empty()) {
      PermutationOptions po;
      po.n_perm = c.cfg.evaluate.n_perm;
      po.seed = derive_seed(c.seed("alternatives"), name);
      po.fdr_q = c.cfg.fdr_q;
      alt = alternative_voxel_check(resp, story, with_alt, alts, po, c.cfg.evaluate.hrf_lag_trs).to_json();
      alt["story"] = name;
      alt["pairs"] = with_alt.size();
    }
    write_json(c.at("evaluation/alternatives.json"), alt);
  }

  write_json(c.at("evaluation/summary.json"),
             {{"seed", c.cfg.seed},
              {"selected", sg.at("selected")},
              {"stories", stories},
              {"explained", static_cast<int>(ex.explanations.size())},
              {"failed", read_json(c.at("explanations.json")).at("failed")},
              {"recovery", {{"matched", matched}, {"total", static_cast<int>(ex.explanations.size())}}}});
}

void run_report(const Ctx& c) {
  const auto r = build_report(read_json(c.at("evaluation/summary.json")));
  fs::create_directories(c.at("report"));
  write_text_file(c.at("report/report.txt"), r.text);
  write_text_file(c.at("report/driving.csv"), r.driving_csv);
  write_text_file(c.at("report/stories.csv"), r.stories_csv);
  write_text_file(c.at("report/versions.csv"), r.versions_csv);
}

void run_stage(const Ctx& c, Stage s) {
  switch (s) {
    case Stage::simulate: return run_simulate(c);
    case Stage::fit: return run_fit(c);
    case Stage::select: return run_select(c);
    case Stage::stability: return run_stability(c);
    case Stage::explain: return run_explain(c);
    case Stage::storygen: return run_storygen(c);
    case Stage::present: return run_present(c);
    case Stage::evaluate: return run_evaluate(c);
    case Stage::report: return run_report(c);
  }
}

void save_manifest(const fs::path& dir, const RunManifest& m) { write_json(dir / kManifestName, m.to_json()); }

RunManifest run_one(const PipelineConfig& config, Stage stage, const RunOptions& options, RunManifest manifest) {
  const Ctx ctx{config, fs::path(config.workdir)};
  const auto name = to_string(stage);

  StageRecord rec;
  rec.seed = ctx.seed(name);
  std::set<std::string> inputs;
  for (auto d : deps_of(stage))
    for (const auto& f : stage_outputs(config, d)) inputs.insert(f);
  for (const auto& f : inputs) {
    if (!fs::exists(ctx.at(f)))
      throw MissingDependency("stage " + name + " needs " + f + " (run " + [&] {
        for (auto d : deps_of(stage))
          for (const auto& g : stage_outputs(config, d))
            if (g == f) return to_string(d);
        return std::string("an earlier stage");
      }() + " first)");
    rec.inputs[f] = file_hash(ctx.at(f));
  }
  Json key{{"stage", name}, {"config", slice_json(config, stage)}, {"inputs", rec.inputs}, {"version", kVersion}};
  for (const auto& extra : {config.llm.fixtures_path, config.simulate.lexicon, config.llm.lexicon_path})
    if (!extra.empty() && fs::exists(extra)) key["files"][extra] = file_hash(extra);
  if (stage == Stage::explain || stage == Stage::storygen)
    if (config.llm.backend == "replay" && fs::exists(config.llm.cassette_path))
      key["files"][config.llm.cassette_path] = file_hash(config.llm.cassette_path);
  rec.key = hex64(fnv1a64(key.dump()));

  auto prev = manifest.stages.find(name);
  if (!options.force && prev != manifest.stages.end() && prev->second.key == rec.key) {
    bool intact = !prev->second.outputs.empty();
    for (const auto& [f, h] : prev->second.outputs) intact = intact && fs::exists(ctx.at(f)) && file_hash(ctx.at(f)) == h;
    if (intact) {
      prev->second.status = "skipped, up-to-date";
      if (options.log) *options.log << name << ": skipped, up-to-date\n";
      save_manifest(ctx.dir, manifest);
      return manifest;
    }
  }

  rec.started_at = utc_now();
  try {
    run_stage(ctx, stage);
  } catch (const MissingDependency&) {
    throw;
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw StageFailure(name + ": " + e.what());  // keeps the module error kind
  } catch (const std::exception& e) {
    throw StageFailure(name + ": " + e.what());
  }
  rec.finished_at = utc_now();
  for (const auto& f : stage_outputs(config, stage)) {
    if (!fs::exists(ctx.at(f))) throw StageFailure(name + " did not write " + f);
    rec.outputs[f] = file_hash(ctx.at(f));
  }
  rec.status = "ran";
  manifest.stages[name] = rec;
  if (options.log) *options.log << name << ": ran\n";
  save_manifest(ctx.dir, manifest);
  return manifest;
}

}  // namespace

// ---------------------------------------------------------------------------

const std::vector<Stage>& all_stages() {
  static const std::vector<Stage> s = [] {
    std::vector<Stage> v;
    for (const auto& [st, n] : kStageNames) v.push_back(st);
    return v;
  }();
  return s;
}

std::string to_string(Stage s) {
  for (const auto& [st, n] : kStageNames)
    if (st == s) return n;
  return "?";
}

Stage stage_from_string(std::string_view s) {
  for (const auto& [st, n] : kStageNames)
    if (s == n) return st;
  throw ConfigError("unknown stage '" + std::string(s) + "'");
}

std::string file_hash(const fs::path& path) { return hex64(fnv1a64(read_text_file(path))); }

Json StageRecord::to_json() const {
  return {{"status", status}, {"key", key},   {"inputs", inputs}, {"outputs", outputs},
          {"seed", seed},     {"started_at", started_at}, {"finished_at", finished_at}};
}

StageRecord StageRecord::from_json(const Json& j) {
  StageRecord r;
  r.status = j.value("status", std::string{});
  r.key = j.value("key", std::string{});
  r.inputs = j.value("inputs", std::map<std::string, std::string>{});
  r.outputs = j.value("outputs", std::map<std::string, std::string>{});
  r.seed = j.value("seed", std::uint64_t{0});
  r.started_at = j.value("started_at", std::string{});
  r.finished_at = j.value("finished_at", std::string{});
  return r;
}

Json RunManifest::to_json() const {
  Json st = Json::object();
  for (const auto& [k, v] : stages) st[k] = v.to_json();
  return {{"config", config},
          {"config_text", config_text},
          {"seed", seed},
          {"module_versions", module_versions},
          {"stages", st}};
}

RunManifest RunManifest::from_json(const Json& j) {
  RunManifest m;
  m.config = j.value("config", Json::object());
  m.config_text = j.value("config_text", std::string{});
  m.seed = j.value("seed", std::uint64_t{0});
  m.module_versions = j.value("module_versions", std::map<std::string, std::string>{});
  const Json stages = j.value("stages", Json::object());
  for (const auto& [k, v] : stages.items()) m.stages[k] = StageRecord::from_json(v);
  return m;
}

PipelineConfig config_from_manifest(const RunManifest& manifest, const std::string& workdir) {
  if (manifest.config_text.empty()) throw ConfigError("manifest carries no config");
  auto cfg = parse_config(manifest.config_text);
  cfg.workdir = workdir;
  return cfg;
}

RunManifest load_manifest(const fs::path& workdir) {
  const auto p = workdir / kManifestName;
  if (!fs::exists(p)) return {};
  return RunManifest::from_json(read_json(p));
}

std::vector<std::string> verify_manifest(const fs::path& workdir, const RunManifest& manifest) {
  std::vector<std::string> bad;
  for (const auto& [name, rec] : manifest.stages)
    for (const auto& [f, h] : rec.outputs)
      if (!fs::exists(workdir / f) || file_hash(workdir / f) != h) bad.push_back(f);
  return bad;
}

WorkdirLock::WorkdirLock(const fs::path& workdir) : path_(workdir / kLockName) {
  fs::create_directories(workdir);
  const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0)
    throw StageFailure("working directory " + workdir.string() + " is locked by another pipeline (" +
                       path_.string() + "; remove it if stale)");
  const auto pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
  ::close(fd);
}

WorkdirLock::~WorkdirLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

std::vector<std::string> stage_outputs(const PipelineConfig& config, Stage stage) {
  std::vector<std::string> out;
  const auto& s = config.simulate;
  switch (stage) {
    case Stage::simulate:
      out = {"data/lexicon.json", "data/subject.json", "data/ledger.json"};
      for (int i = 0; i < s.n_train_stories; ++i) {
        out.push_back("data/train/" + train_id(i) + ".csv");
        out.push_back("data/train/" + train_id(i) + ".gctf");
      }
      for (int i = 0; i < s.n_test_stories; ++i) {
        out.push_back("data/test/" + test_id(i) + ".csv");
        for (int r = 0; r < s.test_repeats; ++r) out.push_back("data/test/" + test_id(i) + "-r" + std::to_string(r) + ".gctf");
      }
      break;
    case Stage::fit: out = {"models/primary.gctf", "models/secondary.gctf", "models/test.json"}; break;
    case Stage::select: out = {"selection.json"}; break;
    case Stage::stability: out = {"stability.json"}; break;
    case Stage::explain: out = {"explanations.json"}; break;
    case Stage::storygen:
      out = {"storygen.json"};
      for (const auto& c : candidates(config)) out.push_back("stories/" + c.name + ".json");
      break;
    case Stage::present:
      for (const auto& c : candidates(config)) {
        out.push_back("presentation/" + c.name + ".csv");
        out.push_back("presentation/" + c.name + ".gctf");
      }
      break;
    case Stage::evaluate:
      out = {"evaluation/summary.json", "evaluation/alternatives.json"};
      for (const auto& c : candidates(config)) {
        out.push_back("evaluation/" + c.name + ".json");
        out.push_back("evaluation/" + c.name + ".csv");
      }
      break;
    case Stage::report:
      out = {"report/report.txt", "report/driving.csv", "report/stories.csv", "report/versions.csv"};
      break;
  }
  return out;
}

RunManifest run_pipeline(const PipelineConfig& config, Stage stage, const RunOptions& options) {
  return run_pipeline(config, std::vector<Stage>{stage}, options);
}

RunManifest run_pipeline(const PipelineConfig& config, const std::vector<Stage>& stages, const RunOptions& options) {
  config.validate();
  const fs::path dir(config.workdir);
  WorkdirLock lock(dir);
  auto manifest = load_manifest(dir);
  manifest.config = config.to_json();
  manifest.config_text = emit_config(config);
  manifest.seed = config.seed;
  for (const auto& m : {"core-data", "signal", "encoding", "explain", "storygen", "evaluation", "simulator", "cli"})
    manifest.module_versions[m] = kVersion;
  for (auto s : stages) manifest = run_one(config, s, options, std::move(manifest));
  return manifest;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return 2;
  if (dynamic_cast<const MissingDependency*>(&e)) return 3;
  return 4;
}

}  // namespace gct
