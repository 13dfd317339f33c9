// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <random>
#include <set>

#include "gct/config.hpp"
#include "gct/pipeline.hpp"
#include "gct/stats.hpp"
#include "gct/text.hpp"
#include "support/bench.hpp"

using namespace gct;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

Matrix gaussian(std::uint64_t& state, Eigen::Index r, Eigen::Index c) {
  Matrix m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = standard_normal(state);
  return m;
}

// --- ridge ------------------------------------------------------------------

Outcome ridge_oracle() {
  std::uint64_t st = 20240601;
  double worst = 0.0;
  for (int inst = 0; inst < 50; ++inst) {
    const int dims = 2 + static_cast<int>(splitmix64(st) % 49);
    const int rows = std::max(dims + 20, 60 + static_cast<int>(splitmix64(st) % 141));
    const int vox = 1 + static_cast<int>(splitmix64(st) % 5);
    FeatureMatrix x;
    x.values = gaussian(st, std::min(rows, 200), dims);
    ResponseMatrix y;
    y.values = x.values * gaussian(st, dims, vox) + 2.0 * gaussian(st, x.values.rows(), vox);
    y.voxel_ids = bench::iota_ids(vox);
    y.grid.n_volumes = static_cast<int>(x.values.rows());
    CvSpec cv;
    cv.chunk_len = 10;
    cv.n_folds = 5;
    cv.seed = static_cast<std::uint64_t>(inst);
    const auto m = fit_ridge_cv(x, y, cv);
    const Matrix& a = x.values;
    for (int v = 0; v < vox; ++v) {
      const double lam = m.lambda_per_voxel[static_cast<std::size_t>(v)];
      const Matrix lhs = a.transpose() * a + lam * Matrix::Identity(dims, dims);
      const Vector w = lhs.llt().solve(a.transpose() * y.values.col(v));
      worst = std::max(worst, (m.weights.col(v) - w).cwiseAbs().maxCoeff());
    }
  }
  return {worst <= 1e-8, "max |w - w_normal_eq| = " + fmt("%.2e", worst) + " over 50 instances"};
}

// --- signal -----------------------------------------------------------------

Outcome signal_oracles() {
  std::string detail;
  bool ok = true;

  // band-limited signal sampled at irregular word onsets, resampled to TRs
  {
    std::uint64_t st = 7;
    WordFeatureSeq seq;
    double t = 0.0;
    std::vector<double> vals;
    auto f = [](double s) { return std::sin(2 * M_PI * 0.03 * s) + 0.5 * std::cos(2 * M_PI * 0.071 * s + 0.3); };
    while (t < 600.0) {
      seq.onsets.push_back(t);
      vals.push_back(f(t));
      t += 0.3 + 0.2 * uniform01(st);
    }
    seq.rows = Eigen::Map<const Vector>(vals.data(), static_cast<Eigen::Index>(vals.size()));
    TRGrid g;
    g.n_volumes = 300;
    auto recon_r = [&](bool renorm) {
      const auto fm = lanczos_resample(seq, g, 3, renorm);
      std::vector<double> a, b;
      for (int v = 10; v < 290; ++v) {
        a.push_back(fm.values(v, 0));
        b.push_back(f(v * 2.0));
      }
      return stats::pearson(a, b);
    };
    const double raw = recon_r(false), norm = recon_r(true);
    ok = ok && raw >= 0.99;
    detail += "lanczos r=" + fmt("%.4f", raw) + " (renormalized " + fmt("%.4f", norm) + ")";
  }
  // FIR impulse placement
  {
    FeatureMatrix fm;
    fm.grid.n_volumes = 30;
    fm.values = Matrix::Zero(30, 2);
    fm.values(10, 1) = 1.0;
    const auto e = fir_expand(fm);
    // block k holds the input delayed by |delay k| / tr volumes
    bool exact = e.values.cols() == 8;
    for (int k = 0; k < 4 && exact; ++k) {
      const int shift = static_cast<int>(std::lround(std::abs(kDefaultDelays[static_cast<std::size_t>(k)]) / 2.0));
      for (int r = 0; r < 30; ++r) {
        const double want = (r == 10 + shift) ? 1.0 : 0.0;
        exact = exact && e.values(r, 2 * k + 1) == want && e.values(r, 2 * k) == 0.0;
      }
    }
    ok = ok && exact;
    detail += std::string(", FIR ") + (exact ? "exact" : "misplaced");
  }
  // Savitzky-Golay annihilates quadratics
  {
    ResponseMatrix rm;
    rm.grid.n_volumes = 200;
    rm.voxel_ids = {0, 1};
    rm.values.resize(200, 2);
    for (int i = 0; i < 200; ++i) {
      rm.values(i, 0) = 3.0 - 0.02 * i + 0.0004 * i * i;
      rm.values(i, 1) = -1.0 + 0.5 * i;
    }
    const double res = savgol_detrend(rm).values.cwiseAbs().maxCoeff();
    ok = ok && res <= 1e-8;
    detail += ", SG residual " + fmt("%.1e", res);
  }
  // z-score invariants
  {
    std::uint64_t st = 11;
    ResponseMatrix rm;
    rm.grid.n_volumes = 150;
    rm.voxel_ids = bench::iota_ids(6);
    rm.values = gaussian(st, 150, 6) * 3.0 + Matrix::Constant(150, 6, 5.0);
    const auto z = trim_and_zscore(rm);
    double err = 0.0;
    for (Eigen::Index c = 0; c < z.values.cols(); ++c) {
      const auto col = z.values.col(c);
      err = std::max(err, std::abs(col.mean()));
      err = std::max(err, std::abs(col.squaredNorm() / static_cast<double>(col.size()) - 1.0));
    }
    ok = ok && err <= 1e-9 && z.values.rows() == 130;
    detail += ", z-score err " + fmt("%.1e", err);
  }
  return {ok, detail};
}

// --- statistics -------------------------------------------------------------

Story null_story(std::size_t paragraphs, std::size_t words_each = 40) {
  Story s;
  s.story_id = "null";
  for (std::size_t p = 0; p < paragraphs; ++p) {
    Paragraph par;
    std::string text;
    for (std::size_t w = 0; w < words_each; ++w) text += (w ? " w" : "w") + std::to_string(p);
    par.text = text;
    par.targets = {"voxel:" + std::to_string(p)};
    s.paragraphs.push_back(par);
  }
  return s;
}

ResponseMatrix noise_responses(const Story& s, std::size_t n_vox, std::uint64_t seed) {
  ResponseMatrix rm;
  rm.grid = s.grid();
  rm.voxel_ids = bench::iota_ids(static_cast<int>(n_vox));
  std::uint64_t st = seed;
  rm.values = gaussian(st, rm.grid.n_volumes, static_cast<Eigen::Index>(n_vox));
  return rm;
}

std::vector<Target> voxel_targets(std::size_t n) {
  std::vector<Target> t;
  for (std::size_t i = 0; i < n; ++i) t.push_back(Target::voxel(static_cast<VoxelId>(i)));
  return t;
}

Outcome statistics_oracles() {
  bool ok = true;
  std::string detail;
  // exhaustive permutation p against direct enumeration of the cross matrix
  {
    int mismatches = 0, checked = 0;
    for (std::size_t P = 2; P <= 8; ++P) {
      const auto story = null_story(P);
      const auto rm = noise_responses(story, P, 100 + P);
      auto rep = driving_scores(rm, story, voxel_targets(P));
      permutation_test(rep, {});
      for (std::size_t a = 0; a < rep.assignments.size(); ++a) {
        const auto t = static_cast<Eigen::Index>(rep.assignments[a].target);
        const double obs = rep.cross(t, static_cast<Eigen::Index>(rep.assignments[a].paragraph));
        int ge = 0;
        for (Eigen::Index p = 0; p < rep.cross.cols(); ++p) ge += rep.cross(t, p) >= obs;
        mismatches += rep.p_values(static_cast<Eigen::Index>(a)) != static_cast<double>(ge) / static_cast<double>(P);
        ++checked;
      }
      ok = ok && rep.exhaustive;
    }
    ok = ok && mismatches == 0;
    detail += "exhaustive p " + std::to_string(checked - mismatches) + "/" + std::to_string(checked) + " exact";
  }
  // Benjamini-Hochberg against the definition
  {
    std::uint64_t st = 99;
    int bad = 0;
    for (int l = 0; l < 100; ++l) {
      const std::size_t m = 1 + splitmix64(st) % 40;
      std::vector<double> p(m);
      for (auto& x : p) x = uniform01(st) < 0.3 ? uniform01(st) * 0.01 : uniform01(st);
      const double q = 0.05;
      const auto flags = bh_fdr(p, q);
      for (std::size_t i = 0; i < m; ++i) {
        // flagged iff some k with rank(i) <= k has p_(k) <= k q / m
        std::vector<double> sorted = p;
        std::sort(sorted.begin(), sorted.end());
        bool want = false;
        for (std::size_t k = 1; k <= m; ++k)
          if (sorted[k - 1] <= static_cast<double>(k) * q / static_cast<double>(m) && p[i] <= sorted[k - 1]) want = true;
        bad += flags[i] != want;
      }
    }
    ok = ok && bad == 0;
    detail += ", BH mismatches " + std::to_string(bad);
  }
  // Monte-Carlo pooled p under the null is uniform
  {
    std::vector<double> ps;
    const auto story = null_story(12, 30);
    for (std::uint64_t s = 0; s < 200; ++s) {
      const auto rm = noise_responses(story, 12, derive_seed(555, s));
      auto rep = driving_scores(rm, story, voxel_targets(12));
      PermutationOptions po;
      po.n_perm = 999;
      po.seed = derive_seed(777, s);
      permutation_test(rep, po);
      ps.push_back(rep.pooled->p);
    }
    const auto ks = stats::ks_uniform(ps);
    ok = ok && ks.p > 0.01;
    detail += ", null KS p=" + fmt("%.3f", ks.p);
  }
  return {ok, detail};
}

// --- closed loop and determinism -------------------------------------------

PipelineConfig toy_config(const fs::path& dir, std::uint64_t seed) {
  auto c = load_config(GCT_SOURCE_DIR "/configs/toy.toml");
  c.workdir = dir.string();
  c.seed = seed;
  return c;
}

Outcome closed_loop() {
  bool ok = true;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto dir = bench::temp_dir("loop" + std::to_string(seed));
    const auto cfg = toy_config(dir, seed);
    run_pipeline(cfg, all_stages());
    const auto summary = Json::parse(read_text_file(dir / "evaluation/summary.json"));
    const auto sel = summary.at("selected").get<std::string>();
    const auto d = Json::parse(read_text_file(dir / ("evaluation/" + sel + ".json")));
    const double frac = d.at("fraction_positive").get<double>();
    const double p = d.at("pooled").at("p").get<double>();
    const bool pass = frac >= 0.8 && p < 0.01 && cfg.simulate.n_concepts == 12 && cfg.simulate.noise_sd == 1.0;
    ok = ok && pass;
    detail += (seed > 1 ? "; " : "") + std::string("seed ") + std::to_string(seed) + ": " +
              std::to_string(d.at("entries").size()) + " targets, " + fmt("%.0f%% positive", 100 * frac) + ", pooled " +
              format_p(p);
    fs::remove_all(dir);
  }
  return {ok, detail};
}

Outcome determinism() {
  const auto a = bench::temp_dir("det-a"), b = bench::temp_dir("det-b");
  const auto ma = run_pipeline(toy_config(a, 3), all_stages());
  const auto mb = run_pipeline(config_from_manifest(load_manifest(a), b.string()), all_stages());
  std::size_t files = 0, differ = 0;
  for (const auto& [stage, rec] : ma.stages)
    for (const auto& [f, h] : rec.outputs) {
      ++files;
      const auto it = mb.stages.at(stage).outputs.find(f);
      differ += it == mb.stages.at(stage).outputs.end() || it->second != h;
    }
  fs::remove_all(a);
  fs::remove_all(b);
  return {differ == 0 && files > 0, std::to_string(files - differ) + "/" + std::to_string(files) + " outputs byte-identical"};
}

// --- stability vs driving ----------------------------------------------------

Outcome stability_driving() {
  const std::uint64_t seed = 41;
  const int n = 40;
  bench::Bench b;
  b.lex = ConceptLexicon::toy(12);
  auto sl = make_subject(bench::subject_spec(n, seed), b.lex);
  b.subject = std::move(sl.subject);
  // noise multipliers spanning 0.5x..8x, shuffled across voxels
  std::vector<double> scale(n);
  for (int i = 0; i < n; ++i) scale[static_cast<std::size_t>(i)] = 0.5 * std::pow(16.0, i / double(n - 1));
  std::uint64_t st = derive_seed(seed, "scale");
  for (std::size_t i = scale.size(); i > 1; --i) std::swap(scale[i - 1], scale[splitmix64(st) % i]);
  b.subject.noise_scale = scale;
  bench::fit(b, seed);

  NGramScorer sa(b.ma, b.catalog), sb(b.mb, b.catalog);
  StubLLM llm(ConceptLexicon::toy(), seed);
  std::vector<double> stability(n, 0.0);
  std::vector<std::optional<Explanation>> ex(n);
  for (int v = 0; v < n; ++v) {
    const auto target = Target::voxel(v);
    stability[static_cast<std::size_t>(v)] = target_stability(sa, sb, target);
    try {
      ex[static_cast<std::size_t>(v)] = explain_target(llm, sa, nullptr, target);
    } catch (const NoViableCandidate&) {
    }
  }
  // one paragraph per distinct explanation, from its best-scoring voxel
  std::map<std::string, const Explanation*> best;
  for (const auto& e : ex)
    if (e && (!best.count(e->text) || e->explanation_score > best[e->text]->explanation_score)) best[e->text] = &*e;
  std::vector<StorySegment> segs;
  std::map<std::string, std::size_t> para_of;
  for (const auto& [text, e] : best) {
    para_of[text] = segs.size();
    segs.push_back(bench::segment_for(*e));
  }
  const auto story = generate_story(llm, segs, StoryMode::single, seed);
  const auto resp = bench::present(b.subject, story.transcript(), story.grid(), 9);

  std::vector<Target> targets;
  std::vector<Assignment> asg;
  std::vector<int> explained;
  for (int v = 0; v < n; ++v) {
    if (!ex[static_cast<std::size_t>(v)]) continue;
    asg.push_back({targets.size(), para_of.at(ex[static_cast<std::size_t>(v)]->text)});
    targets.push_back(Target::voxel(v));
    explained.push_back(v);
  }
  const auto rep = driving_scores(resp, story, targets, asg);
  // a voxel without a viable explanation has no driving paragraph: score 0
  std::vector<double> driving(n, 0.0);
  for (std::size_t i = 0; i < explained.size(); ++i)
    driving[static_cast<std::size_t>(explained[i])] = rep.scores(static_cast<Eigen::Index>(i));
  const double rho = stats::spearman(stability, driving);
  const double p = stats::correlation_p_value(rho, stability.size());
  return {rho > 0.3 && p < 0.05, "Spearman rho=" + fmt("%.3f", rho) + " p=" + fmt("%.2e", p) + " over " +
                                     std::to_string(n) + " voxels (" + std::to_string(explained.size()) +
                                     " explained, " + std::to_string(segs.size()) + " paragraphs)"};
}

// --- selective driving --------------------------------------------------------

Outcome selective_driving() {
  const std::uint64_t seed = 5;
  bench::Bench b;
  b.lex = ConceptLexicon::toy(12);
  auto sl = make_subject(bench::subject_spec(30, seed), b.lex);
  b.subject = std::move(sl.subject);
  // three regions, each dominated by its own concept and sharing a minority
  // of voxels with its neighbor's concept
  b.subject.selectivity.setZero();
  std::uint64_t st = derive_seed(seed, "weights");
  const std::vector<std::string> names = {"A", "B", "C"};
  std::vector<ROIMask> rois;
  for (int r = 0; r < 3; ++r) {
    std::vector<VoxelId> ids;
    for (int k = 0; k < 10; ++k) {
      const int v = 10 * r + k;
      ids.push_back(v);
      const int c = k < 7 ? r : (r + 1) % 3;
      b.subject.selectivity(v, c) = 0.7 + 0.6 * uniform01(st);
    }
    rois.emplace_back(names[static_cast<std::size_t>(r)], ids);
  }
  bench::fit(b, seed);

  NGramScorer sa(b.ma, b.catalog);
  StubLLM llm(ConceptLexicon::toy(), seed);
  std::vector<SelectiveEntry> entries;
  std::string texts;
  for (const auto& roi : rois) {
    const auto e = explain_target(llm, sa, nullptr, Target::roi(roi));
    SelectiveEntry se;
    se.roi = roi.name;
    se.explanation = e.text;
    se.examples.assign(e.top_ngrams.begin(), e.top_ngrams.begin() + std::min<std::ptrdiff_t>(3, e.top_ngrams.size()));
    entries.push_back(se);
    texts += (texts.empty() ? "" : ", ") + roi.name + "=" + e.text;
  }
  Story story;
  for (int rep = 0; rep < 2; ++rep)
    for (const auto& roi : rois) {
      std::vector<std::string> others;
      for (const auto& o : rois)
        if (o.name != roi.name) others.push_back(o.name);
      auto s = generate_selective_story(llm, roi.name, others, entries, derive_seed(seed, static_cast<std::uint64_t>(rep * 3 + roi.name[0])));
      if (story.paragraphs.empty()) story = s;
      else story.paragraphs.insert(story.paragraphs.end(), s.paragraphs.begin(), s.paragraphs.end());
    }
  story.story_id = "selective";
  const auto resp = bench::present(b.subject, story.transcript(), story.grid(), 3);
  const auto rr = roi_driving(resp, story, rois);
  int wins = 0;
  std::string margins;
  for (std::size_t r = 0; r < rois.size(); ++r) {
    double m = 0.0;
    int n = 0;
    for (std::size_t p = 0; p < story.paragraphs.size(); ++p) {
      if (story.paragraphs[p].targets.front() != rois[r].name) continue;
      double others = 0.0;
      for (std::size_t o = 0; o < rois.size(); ++o)
        if (o != r) others += rr.report.cross(static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(p));
      m += rr.report.cross(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(p)) - others / 2.0;
      ++n;
    }
    m /= n;
    wins += m > 0;
    margins += (r ? ", " : "") + rois[r].name + fmt(" %+.2f", m);
  }
  return {wins >= 2, std::to_string(wins) + "/3 regions with positive margin (" + margins + "; " + texts + ")"};
}

// --- checkerboard ----------------------------------------------------------------

Outcome checkerboard() {
  const std::uint64_t seed = 8;
  const int side = 8, n = side * side;
  bench::Bench b;
  b.lex = ConceptLexicon::toy(12);
  auto sl = make_subject(bench::subject_spec(n, seed), b.lex);
  b.subject = std::move(sl.subject);
  b.subject.selectivity.setZero();
  std::uint64_t st = derive_seed(seed, "weights");
  Vector pattern(n);
  std::vector<std::pair<VoxelId, double>> plus, minus;
  for (int v = 0; v < n; ++v) {
    const bool black = ((v % side) + (v / side)) % 2 == 0;
    pattern(v) = black ? 1.0 : -1.0;
    b.subject.selectivity(v, black ? 0 : 1) = 0.7 + 0.6 * uniform01(st);
    plus.emplace_back(v, pattern(v) / n);
    minus.emplace_back(v, -pattern(v) / n);
  }
  bench::fit(b, seed);

  NGramScorer sa(b.ma, b.catalog);
  StubLLM llm(ConceptLexicon::toy(), seed);
  const Target tp{"pattern", plus}, tm{"inverse", minus};
  const auto ep = explain_target(llm, sa, nullptr, tp), em = explain_target(llm, sa, nullptr, tm);
  std::vector<StorySegment> segs;
  for (int k = 0; k < 6; ++k) segs.push_back(bench::segment_for(k % 2 ? em : ep));
  const auto story = generate_story(llm, segs, StoryMode::single, seed);
  const auto resp = bench::present(b.subject, story.transcript(), story.grid(), 4);
  const auto rec = checkerboard_reconstruct(resp, bench::iota_ids(n), pattern);
  return {rec.r >= 0.6, "Pearson r=" + fmt("%.3f", rec.r) + " (" + ep.text + " / " + em.text + ", " +
                            std::to_string(resp.values.rows()) + " TRs)"};
}

// --- HRF lock -------------------------------------------------------------------

Outcome hrf_lock() {
  const std::uint64_t seed = 12;
  auto lex = ConceptLexicon::toy(12);
  auto sl = make_subject(bench::subject_spec(24, seed), lex);
  auto& subject = sl.subject;
  subject.selectivity.setZero();
  std::vector<VoxelId> ids;
  for (int v = 0; v < 24; ++v) {
    subject.selectivity(v, v < 12 ? 0 : 1) = 1.0;
    if (v < 12) ids.push_back(v);
  }
  // filler with an isolated key word every 30-45 words
  std::uint64_t st = derive_seed(seed, "events");
  std::vector<Word> words;
  double t = 10.0;
  int next = 30;
  const auto& keys = lex.concepts[0].keywords;
  for (int w = 0; w < 1800; ++w) {
    std::string tok;
    if (w == next) {
      tok = keys[splitmix64(st) % keys.size()];
      next += 30 + static_cast<int>(splitmix64(st) % 16);
    } else {
      tok = lex.filler[splitmix64(st) % lex.filler.size()];
    }
    words.push_back({tok, t, t + 0.4});
    t += 0.4;
  }
  const Transcript tr("locked", words);
  const auto resp = bench::present(subject, tr, TRGrid::covering(tr.end_time()), 2);
  const auto onsets = key_ngram_onsets(tr, keys);
  const auto lr = ngram_locked_response(resp, Target::roi(ROIMask("key", ids)), onsets, 8, 6.0);
  const double tr_s = resp.grid.tr_s;
  const bool ok = std::abs(lr.peak_lag_s - 6.0) <= tr_s && lr.peak_test.p < 0.05;
  return {ok, "peak at " + fmt("%.0f s", lr.peak_lag_s) + ", " + std::to_string(lr.n_events) + " events, t-test at 6 s p=" +
                  fmt("%.2e", lr.peak_test.p)};
}

}  // namespace

int main(int argc, char** argv) {
  // optional argument: run only criteria whose name contains it
  const std::string only = argc > 1 ? argv[1] : "";
  struct Criterion {
    const char* name;
    double budget_s;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> all = {
      {"ridge-oracle", 10, ridge_oracle},
      {"signal-oracles", 5, signal_oracles},
      {"statistics-oracles", 60, statistics_oracles},
      {"closed-loop-recovery", 600, closed_loop},
      {"stability-driving-association", 600, stability_driving},
      {"selective-driving", 600, selective_driving},
      {"checkerboard-reconstruction", 600, checkerboard},
      {"hrf-lock", 600, hrf_lock},
      {"determinism", 600, determinism},
  };
  int failed = 0;
  for (const auto& c : all) {
    if (!only.empty() && std::string(c.name).find(only) == std::string::npos) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw ") + e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool pass = o.pass && s <= c.budget_s;
    failed += !pass;
    std::printf("%s %s: %s [%.1f s of %.0f s]\n", pass ? "PASS" : "FAIL", c.name, o.detail.c_str(), s, c.budget_s);
    std::fflush(stdout);
  }
  return failed ? 1 : 0;
}
