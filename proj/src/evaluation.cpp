#include "gct/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>
#include <sstream>

#include "gct/text.hpp"

namespace gct {

namespace {

Json matrix_rows(const Matrix& m) {
  Json a = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    std::vector<double> row;
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    a.push_back(row);
  }
  return a;
}

std::vector<double> vec(const Vector& v) { return {v.data(), v.data() + v.size()}; }

/// Uniform index in [0, n) from a splitmix stream.
std::size_t draw_index(std::uint64_t& state, std::size_t n) { return static_cast<std::size_t>(splitmix64(state) % n); }

}  // namespace

std::vector<Assignment> assignments_from_story(const Story& story, const std::vector<std::string>& target_names) {
  std::vector<Assignment> out;
  for (std::size_t p = 0; p < story.paragraphs.size(); ++p)
    for (const auto& name : story.paragraphs[p].targets)
      for (std::size_t t = 0; t < target_names.size(); ++t)
        if (target_names[t] == name) out.push_back({t, p});
  std::stable_sort(out.begin(), out.end(), [](const Assignment& a, const Assignment& b) { return a.target < b.target; });
  return out;
}

double DrivingReport::fraction_positive() const {
  if (scores.size() == 0) return 0.0;
  return static_cast<double>((scores.array() > 0.0).count()) / static_cast<double>(scores.size());
}

Json DrivingReport::to_json() const {
  Json entries = Json::array();
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    Json e{{"target", targets[assignments[i].target]}, {"paragraph", assignments[i].paragraph}, {"score", scores(ii)}};
    if (p_values.size() == scores.size()) {
      e["p"] = p_values(ii);
      e["p_text"] = format_p(p_values(ii));
      e["significant"] = static_cast<bool>(significant[i]);
    }
    entries.push_back(e);
  }
  Json j{{"story_id", story_id},
         {"targets", targets},
         {"entries", entries},
         {"cross", matrix_rows(cross)},
         {"fraction_positive", fraction_positive()},
         {"mean_score", scores.size() ? scores.mean() : 0.0},
         {"fdr_q", fdr_q},
         {"hrf_lag_trs", hrf_lag_trs},
         {"n_perm", n_perm},
         {"exhaustive", exhaustive},
         {"seed", seed}};
  if (pooled) j["pooled"] = {{"mean_score", pooled->mean_score}, {"p", pooled->p}, {"p_text", format_p(pooled->p)}};
  return j;
}

std::string DrivingReport::to_csv() const {
  std::string out = "target,paragraph,score,p,significant\n";
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    const bool tested = p_values.size() == scores.size();
    out += targets[assignments[i].target] + "," + std::to_string(assignments[i].paragraph) + "," +
           format_double(scores(ii)) + "," + (tested ? format_double(p_values(ii)) : std::string{}) + "," +
           (tested ? (significant[i] ? "1" : "0") : std::string{}) + "\n";
  }
  return out;
}

Vector target_timecourse(const ResponseMatrix& responses, const Target& target) {
  Vector tc = Vector::Zero(responses.values.rows());
  for (const auto& [id, w] : target.weights) {
    auto col = responses.column_of(id);
    if (!col) throw DimensionMismatch("target " + target.name + " uses voxel " + std::to_string(id) + " absent from the responses");
    tc += w * responses.values.col(*col);
  }
  return tc;
}

std::vector<std::vector<int>> paragraph_rows(const ResponseMatrix& responses, const Story& story, int hrf_lag_trs) {
  const TRGrid& g = responses.grid;
  const auto spans = story.paragraph_spans();
  if (!spans.empty() && spans.back().second > g.volume_time(g.n_volumes - 1) + g.tr_s)
    throw TimingMismatch("story runs to " + format_double(spans.back().second) + " s but responses end at " +
                         format_double(g.volume_time(g.n_volumes - 1)) + " s");
  const int first = responses.first_volume();
  const auto n_rows = static_cast<int>(responses.values.rows());
  std::vector<std::vector<int>> out;
  for (std::size_t p = 0; p < story.paragraphs.size(); ++p) {
    std::vector<int> rows;
    for (int v : paragraph_volumes(story, g, p, hrf_lag_trs))
      if (v - first >= 0 && v - first < n_rows) rows.push_back(v - first);
    if (rows.empty()) throw TimingMismatch("paragraph " + std::to_string(p) + " has no response rows after trimming");
    out.push_back(std::move(rows));
  }
  return out;
}

Matrix cross_matrix(const Matrix& timecourses, const std::vector<std::vector<int>>& rows) {
  const auto nt = timecourses.cols();
  const auto np = static_cast<Eigen::Index>(rows.size());
  if (np < 2) throw InvalidArgument("driving scores need at least 2 paragraphs");
  Matrix means(nt, np);
  for (Eigen::Index p = 0; p < np; ++p) {
    const auto& r = rows[static_cast<std::size_t>(p)];
    for (Eigen::Index t = 0; t < nt; ++t) {
      double s = 0.0;
      for (int i : r) s += timecourses(i, t);
      means(t, p) = s / static_cast<double>(r.size());
    }
  }
  Matrix cross(nt, np);
  for (Eigen::Index t = 0; t < nt; ++t) {
    const double total = means.row(t).sum();
    for (Eigen::Index p = 0; p < np; ++p) cross(t, p) = means(t, p) - (total - means(t, p)) / static_cast<double>(np - 1);
  }
  return cross;
}

DrivingReport driving_scores(const ResponseMatrix& responses, const Story& story, const std::vector<Target>& targets,
                             int hrf_lag_trs) {
  std::vector<std::string> names;
  for (const auto& t : targets) names.push_back(t.name);
  return driving_scores(responses, story, targets, assignments_from_story(story, names), hrf_lag_trs);
}

DrivingReport driving_scores(const ResponseMatrix& responses, const Story& story, const std::vector<Target>& targets,
                             const std::vector<Assignment>& assignments, int hrf_lag_trs) {
  const auto rows = paragraph_rows(responses, story, hrf_lag_trs);
  Matrix tcs(responses.values.rows(), static_cast<Eigen::Index>(targets.size()));
  for (std::size_t t = 0; t < targets.size(); ++t) tcs.col(static_cast<Eigen::Index>(t)) = target_timecourse(responses, targets[t]);
  DrivingReport r;
  r.story_id = story.story_id;
  for (const auto& t : targets) r.targets.push_back(t.name);
  r.assignments = assignments;
  r.hrf_lag_trs = hrf_lag_trs;
  r.cross = cross_matrix(tcs, rows);
  r.scores.resize(static_cast<Eigen::Index>(assignments.size()));
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    const auto& a = assignments[i];
    if (a.target >= targets.size() || a.paragraph >= rows.size()) throw InvalidArgument("assignment out of range");
    r.scores(static_cast<Eigen::Index>(i)) = r.cross(static_cast<Eigen::Index>(a.target), static_cast<Eigen::Index>(a.paragraph));
  }
  return r;
}

void permutation_test(DrivingReport& report, const PermutationOptions& options) {
  const auto np = static_cast<std::size_t>(report.cross.cols());
  if (np < 2) throw InvalidArgument("permutation test needs at least 2 paragraphs");
  if (options.n_perm < 1) throw InvalidArgument("n_perm must be positive");
  const std::size_t na = report.assignments.size();
  report.exhaustive = np <= options.exhaustive_max_paragraphs;
  report.n_perm = options.n_perm;
  report.seed = options.seed;
  report.fdr_q = options.fdr_q;
  report.p_values.resize(static_cast<Eigen::Index>(na));

  for (std::size_t i = 0; i < na; ++i) {
    const auto t = static_cast<Eigen::Index>(report.assignments[i].target);
    const double obs = report.scores(static_cast<Eigen::Index>(i));
    double p;
    if (report.exhaustive) {
      std::size_t ge = 0;
      for (std::size_t q = 0; q < np; ++q) ge += report.cross(t, static_cast<Eigen::Index>(q)) >= obs;
      p = static_cast<double>(ge) / static_cast<double>(np);
    } else {
      std::uint64_t state = derive_seed(options.seed, static_cast<std::uint64_t>(i));
      long ge = 0;
      for (int k = 0; k < options.n_perm; ++k)
        ge += report.cross(t, static_cast<Eigen::Index>(draw_index(state, np))) >= obs;
      p = (1.0 + static_cast<double>(ge)) / (1.0 + options.n_perm);
    }
    report.p_values(static_cast<Eigen::Index>(i)) = p;
  }
  report.significant = bh_fdr(stats::span_of(report.p_values), options.fdr_q);

  if (na > 0) {
    PooledTest pooled;
    pooled.mean_score = report.scores.mean();
    std::uint64_t state = derive_seed(options.seed, "pooled");
    long ge = 0;
    for (int k = 0; k < options.n_perm; ++k) {
      double s = 0.0;
      for (std::size_t i = 0; i < na; ++i)
        s += report.cross(static_cast<Eigen::Index>(report.assignments[i].target),
                          static_cast<Eigen::Index>(draw_index(state, np)));
      ge += s / static_cast<double>(na) >= pooled.mean_score;
    }
    pooled.p = (1.0 + static_cast<double>(ge)) / (1.0 + options.n_perm);
    report.pooled = pooled;
  }
}

std::vector<bool> bh_fdr(std::span<const double> pvals, double q) {
  const std::size_t m = pvals.size();
  for (double p : pvals)
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("p-values must lie in [0, 1]");
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return pvals[a] < pvals[b]; });
  std::size_t k = 0;  // number flagged
  for (std::size_t i = m; i > 0; --i) {
    if (pvals[order[i - 1]] <= static_cast<double>(i) * q / static_cast<double>(m)) {
      k = i;
      break;
    }
  }
  std::vector<bool> flags(m, false);
  for (std::size_t i = 0; i < k; ++i) flags[order[i]] = true;
  return flags;
}

std::string format_p(double p) {
  if (p >= 0.001) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "p=%.3f", p);
    return buf;
  }
  if (p <= 0.0) return "p=0";
  const int k = static_cast<int>(std::floor(-std::log10(p)));
  return "p<10^-" + std::to_string(k);
}

// ---------------------------------------------------------------------------

Json RoiDrivingReport::to_json() const {
  Json vs = Json::object();
  for (const auto& [roi, m] : voxel_scores) {
    Json a = Json::array();
    for (const auto& [id, s] : m) a.push_back({id, s});
    vs[roi] = a;
  }
  return {{"report", report.to_json()}, {"voxel_scores", vs}};
}

RoiDrivingReport roi_driving(const ResponseMatrix& responses, const Story& story, const std::vector<ROIMask>& rois,
                             int hrf_lag_trs) {
  std::vector<Target> targets;
  std::vector<std::string> names;
  for (const auto& roi : rois) {
    if (roi.voxel_ids.empty()) throw EmptyROI("ROI " + roi.name + " has no voxels");
    roi.check_subset_of(responses.voxel_ids);
    Target t = Target::roi(roi);
    t.name = roi.name;
    targets.push_back(std::move(t));
    names.push_back(roi.name);
  }
  RoiDrivingReport out;
  out.report = driving_scores(responses, story, targets, assignments_from_story(story, names), hrf_lag_trs);

  const auto rows = paragraph_rows(responses, story, hrf_lag_trs);
  for (std::size_t r = 0; r < rois.size(); ++r) {
    std::vector<std::size_t> own;
    for (const auto& a : out.report.assignments)
      if (a.target == r) own.push_back(a.paragraph);
    if (own.empty()) continue;
    Matrix tcs(responses.values.rows(), static_cast<Eigen::Index>(rois[r].voxel_ids.size()));
    for (std::size_t v = 0; v < rois[r].voxel_ids.size(); ++v)
      tcs.col(static_cast<Eigen::Index>(v)) = responses.values.col(*responses.column_of(rois[r].voxel_ids[v]));
    const Matrix cross = cross_matrix(tcs, rows);
    auto& m = out.voxel_scores[rois[r].name];
    for (std::size_t v = 0; v < rois[r].voxel_ids.size(); ++v) {
      double s = 0.0;
      for (auto p : own) s += cross(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(p));
      m[rois[r].voxel_ids[v]] = s / static_cast<double>(own.size());
    }
  }
  return out;
}

stats::TTest micro_roi_ttest(const ResponseMatrix& responses, const Story& story, const ROIMask& roi, int hrf_lag_trs) {
  roi.check_subset_of(responses.voxel_ids);
  const Vector tc = target_timecourse(responses, Target::roi(roi));
  const auto rows = paragraph_rows(responses, story, hrf_lag_trs);
  std::vector<double> in, out;
  for (std::size_t p = 0; p < story.paragraphs.size(); ++p) {
    const auto& ts = story.paragraphs[p].targets;
    const bool own = std::find(ts.begin(), ts.end(), roi.name) != ts.end();
    for (int r : rows[p]) (own ? in : out).push_back(tc(r));
  }
  if (in.size() < 2 || out.size() < 2) throw InvalidArgument("ROI " + roi.name + " has no driving paragraph in the story");
  return stats::welch_t_greater(in, out);
}

// ---------------------------------------------------------------------------

std::vector<ROIMask> CandidateROISet::masks() const {
  std::vector<ROIMask> out;
  for (std::size_t i = 0; i < circles.size(); ++i)
    out.emplace_back("micro-" + std::to_string(i), circles[i].members, ROIKind::candidate_micro);
  return out;
}

Json CandidateROISet::to_json() const {
  Json cs = Json::array();
  for (const auto& c : circles)
    cs.push_back({{"center", c.center},
                  {"x", c.lattice_point.x},
                  {"y", c.lattice_point.y},
                  {"radius_mm", c.radius_mm},
                  {"members", c.members}});
  return {{"circles", cs}, {"stable", stable}};
}

CandidateROISet candidate_roi_grid(const VoxelCoords& mask, double radius_mm, double spacing_mm) {
  if (mask.empty()) throw EmptyROI("cortex mask is empty");
  if (!(radius_mm > 0) || !(spacing_mm > 0)) throw InvalidArgument("radius and spacing must be positive");
  double x0 = mask.begin()->second.x, x1 = x0, y0 = mask.begin()->second.y, y1 = y0;
  for (const auto& [id, c] : mask) {
    x0 = std::min(x0, c.x);
    x1 = std::max(x1, c.x);
    y0 = std::min(y0, c.y);
    y1 = std::max(y1, c.y);
  }
  const double row_step = spacing_mm * std::sqrt(3.0) / 2.0;
  CandidateROISet set;
  for (int j = 0; y0 + j * row_step <= y1 + row_step; ++j) {
    const double y = y0 + j * row_step;
    const double shift = (j % 2) ? spacing_mm / 2.0 : 0.0;
    for (int i = -1; x0 + i * spacing_mm + shift <= x1 + spacing_mm; ++i) {
      const double x = x0 + i * spacing_mm + shift;
      CandidateCircle c;
      c.lattice_point = {x, y, 0.0};
      c.radius_mm = radius_mm;
      double best = std::numeric_limits<double>::infinity();
      for (const auto& [id, v] : mask) {
        const double d = std::hypot(v.x - x, v.y - y);
        if (d < radius_mm) c.members.push_back(id);
        if (d < best) {
          best = d;
          c.center = id;
        }
      }
      if (!c.members.empty()) set.circles.push_back(std::move(c));
    }
  }
  set.stable.resize(set.circles.size());
  std::iota(set.stable.begin(), set.stable.end(), 0);
  return set;
}

void filter_stable(CandidateROISet& set, std::span<const double> stability, double threshold) {
  if (stability.size() != set.circles.size()) throw DimensionMismatch("one stability value per circle expected");
  set.stable.clear();
  for (std::size_t i = 0; i < stability.size(); ++i)
    if (stability[i] >= threshold) set.stable.push_back(i);
}

// ---------------------------------------------------------------------------

double cosine(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw DimensionMismatch("cosine of vectors with different lengths");
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.dot(b) / (na * nb);
}

SimilarityResult selectivity_similarity(const std::vector<DrivingVector>& vectors,
                                        const std::vector<DrivingVector>& null_pool, int n_null, std::uint64_t seed) {
  if (vectors.size() < 2) throw InvalidArgument("similarity needs at least two driving vectors");
  if (null_pool.size() < 2) throw InvalidArgument("null pool needs at least two driving vectors");
  if (n_null < 100) throw InvalidArgument("n_null must be at least 100");
  const auto dim = vectors.front().scores.size();
  for (const auto& v : vectors)
    if (v.scores.size() != dim) throw DimensionMismatch("driving vector " + v.roi + " has a different explanation index");
  for (const auto& v : null_pool)
    if (v.scores.size() != dim) throw DimensionMismatch("null vector " + v.roi + " has a different explanation index");

  SimilarityResult r;
  for (std::size_t i = 0; i < vectors.size(); ++i)
    for (std::size_t j = i + 1; j < vectors.size(); ++j) r.pair_cosines.push_back(cosine(vectors[i].scores, vectors[j].scores));
  r.observed = stats::mean(r.pair_cosines);
  std::uint64_t state = seed;
  for (int k = 0; k < n_null; ++k) {
    const std::size_t a = draw_index(state, null_pool.size());
    std::size_t b = draw_index(state, null_pool.size() - 1);
    if (b >= a) ++b;
    r.null_cosines.push_back(cosine(null_pool[a].scores, null_pool[b].scores));
  }
  const auto le = std::count_if(r.null_cosines.begin(), r.null_cosines.end(), [&](double c) { return c <= r.observed; });
  r.percentile = 100.0 * static_cast<double>(le) / static_cast<double>(n_null);
  if (r.pair_cosines.size() >= 2) {
    r.p = stats::welch_t_greater(r.pair_cosines, r.null_cosines).p;
  } else {
    std::vector<double> diff;
    for (double c : r.null_cosines) diff.push_back(r.observed - c);
    r.p = stats::one_sample_t_greater(diff).p;
  }
  return r;
}

// ---------------------------------------------------------------------------

Json LockedResponse::to_json() const {
  return {{"lags_s", lags_s},
          {"curve", vec(curve)},
          {"counts", counts},
          {"peak_lag_s", peak_lag_s},
          {"test_lag_s", test_lag_s},
          {"t", peak_test.t},
          {"df", peak_test.df},
          {"p", peak_test.p},
          {"p_text", format_p(peak_test.p)},
          {"n_events", n_events}};
}

std::vector<double> key_ngram_onsets(const Transcript& transcript, const std::vector<std::string>& key_ngrams) {
  std::set<std::string> keys;
  int n_max = 1;
  for (const auto& k : key_ngrams) {
    auto ws = normalize_words(k);
    if (ws.empty()) continue;
    n_max = std::max(n_max, static_cast<int>(ws.size()));
    keys.insert(join(ws, " "));
  }
  std::vector<double> out;
  for (const auto& occ : extract_ngrams(transcript, std::min(n_max, 3)).occurrences)
    if (keys.contains(occ.gram.text)) out.push_back(occ.onset_s);
  std::sort(out.begin(), out.end());
  return out;
}

LockedResponse ngram_locked_response(const ResponseMatrix& responses, const Target& target,
                                     std::span<const double> onsets_s, int window_trs, double test_lag_s) {
  if (onsets_s.size() < 5) throw TooFewEvents(std::to_string(onsets_s.size()) + " events; at least 5 are needed");
  if (window_trs < 1) throw InvalidArgument("window must span at least one TR");
  const Vector tc = target_timecourse(responses, target);
  const double tr = responses.grid.tr_s;
  const int first = responses.first_volume();
  const auto n_rows = static_cast<int>(tc.size());
  const int n_lags = 2 * window_trs + 1;
  const int test_idx = window_trs + static_cast<int>(std::lround(test_lag_s / tr));
  if (test_idx < 0 || test_idx >= n_lags) throw InvalidArgument("test lag lies outside the window");

  LockedResponse out;
  out.test_lag_s = test_lag_s;
  out.curve = Vector::Zero(n_lags);
  out.counts.assign(static_cast<std::size_t>(n_lags), 0);
  std::vector<double> at_test;
  for (double onset : onsets_s) {
    const int v0 = static_cast<int>(std::lround(onset / tr));
    bool used = false;
    for (int k = 0; k < n_lags; ++k) {
      const int row = v0 + k - window_trs - first;
      if (row < 0 || row >= n_rows) continue;
      out.curve(k) += tc(row);
      ++out.counts[static_cast<std::size_t>(k)];
      used = true;
      if (k == test_idx) at_test.push_back(tc(row));
    }
    out.n_events += used;
  }
  for (int k = 0; k < n_lags; ++k) {
    out.lags_s.push_back((k - window_trs) * tr);
    if (out.counts[static_cast<std::size_t>(k)] > 0) out.curve(k) /= out.counts[static_cast<std::size_t>(k)];
  }
  if (at_test.size() < 5) throw TooFewEvents(std::to_string(at_test.size()) + " events cover the test lag; at least 5 are needed");
  Eigen::Index peak;
  out.curve.maxCoeff(&peak);
  out.peak_lag_s = out.lags_s[static_cast<std::size_t>(peak)];
  out.peak_test = stats::one_sample_t_greater(at_test);
  return out;
}

// ---------------------------------------------------------------------------

Reconstruction checkerboard_reconstruct(const ResponseMatrix& responses, const std::vector<VoxelId>& patch,
                                        const Vector& target) {
  if (static_cast<std::size_t>(target.size()) != patch.size())
    throw DimensionMismatch("target pattern has " + std::to_string(target.size()) + " entries for " +
                            std::to_string(patch.size()) + " patch voxels");
  if (target.norm() == 0.0) throw ZeroNormTarget("target pattern has zero norm");
  if (responses.values.rows() < 50) throw InvalidArgument("reconstruction needs at least 50 TRs");
  Matrix r(responses.values.rows(), static_cast<Eigen::Index>(patch.size()));
  for (std::size_t j = 0; j < patch.size(); ++j) {
    auto col = responses.column_of(patch[j]);
    if (!col) throw DimensionMismatch("patch voxel " + std::to_string(patch[j]) + " absent from the responses");
    r.col(static_cast<Eigen::Index>(j)) = responses.values.col(*col);
  }
  Vector acc = Vector::Zero(target.size());
  for (Eigen::Index t = 0; t < r.rows(); ++t) {
    const Vector row = r.row(t).transpose();
    acc += cosine(row, target) * row;
  }
  Reconstruction out;
  const double n = acc.norm();
  out.pattern = n > 0 ? Vector(acc / n) : acc;
  out.r = n > 0 ? stats::pearson(stats::span_of(out.pattern), stats::span_of(target)) : 0.0;
  return out;
}

Json AlternativeReport::to_json() const { return {{"targets", targets.to_json()}, {"alternatives", alternatives.to_json()}}; }

AlternativeReport alternative_voxel_check(const ResponseMatrix& responses, const Story& story,
                                          const std::vector<Target>& targets, const std::vector<Target>& alternatives,
                                          const PermutationOptions& options, int hrf_lag_trs) {
  if (targets.size() != alternatives.size()) throw DimensionMismatch("one alternative per target expected");
  std::vector<std::string> names;
  for (const auto& t : targets) names.push_back(t.name);
  const auto assignments = assignments_from_story(story, names);
  AlternativeReport out;
  out.targets = driving_scores(responses, story, targets, assignments, hrf_lag_trs);
  out.alternatives = driving_scores(responses, story, alternatives, assignments, hrf_lag_trs);
  permutation_test(out.targets, options);
  permutation_test(out.alternatives, options);
  return out;
}

}  // namespace gct
