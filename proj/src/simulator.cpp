#include "gct/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gct/signal.hpp"
#include "gct/text.hpp"

namespace gct {

namespace {

double gamma_pdf(double t, double shape) {
  if (t <= 0.0) return 0.0;
  return std::exp((shape - 1.0) * std::log(t) - t - std::lgamma(shape));
}

double hrf_value(const HrfParams& h, double t) {
  return gamma_pdf(t, h.peak_s + 1.0) - h.undershoot_ratio * gamma_pdf(t, h.undershoot_s + 1.0);
}

}  // namespace

Vector HrfParams::kernel(double tr_s) const {
  validate();
  if (!(tr_s > 0)) throw InvalidArgument("TR must be positive");
  const int n = static_cast<int>(std::floor(length_s / tr_s)) + 1;
  Vector k(n);
  for (int i = 0; i < n; ++i) k(i) = hrf_value(*this, i * tr_s);
  return k / k.sum();
}

double HrfParams::peak_time() const {
  double best_t = 0.0, best = -1.0;
  for (double t = 0.0; t <= length_s; t += 0.01) {
    const double v = hrf_value(*this, t);
    if (v > best) {
      best = v;
      best_t = t;
    }
  }
  return best_t;
}

void HrfParams::validate() const {
  if (!(peak_s > 0) || !(undershoot_s > peak_s) || undershoot_ratio < 0 || !(length_s > undershoot_s))
    throw InvalidArgument("HRF needs 0 < peak < undershoot < length and a nonnegative undershoot ratio");
}

Json HrfParams::to_json() const {
  return {{"peak_s", peak_s}, {"undershoot_s", undershoot_s}, {"undershoot_ratio", undershoot_ratio}, {"length_s", length_s}};
}

HrfParams HrfParams::from_json(const Json& j) {
  HrfParams h;
  h.peak_s = j.value("peak_s", h.peak_s);
  h.undershoot_s = j.value("undershoot_s", h.undershoot_s);
  h.undershoot_ratio = j.value("undershoot_ratio", h.undershoot_ratio);
  h.length_s = j.value("length_s", h.length_s);
  return h;
}

Json SubjectSpec::to_json() const {
  return {{"n_voxels", n_voxels},   {"polysemantic_fraction", polysemantic_fraction},
          {"null_fraction", null_fraction}, {"noise_sd", noise_sd},
          {"gain", gain},           {"drift_sd", drift_sd},
          {"embedding_dim", embedding_dim}, {"seed", seed}};
}

SubjectSpec SubjectSpec::from_json(const Json& j) {
  SubjectSpec s;
  s.n_voxels = j.value("n_voxels", s.n_voxels);
  s.polysemantic_fraction = j.value("polysemantic_fraction", s.polysemantic_fraction);
  s.null_fraction = j.value("null_fraction", s.null_fraction);
  s.noise_sd = j.value("noise_sd", s.noise_sd);
  s.gain = j.value("gain", s.gain);
  s.drift_sd = j.value("drift_sd", s.drift_sd);
  s.embedding_dim = j.value("embedding_dim", s.embedding_dim);
  s.seed = j.value("seed", s.seed);
  return s;
}

// ---------------------------------------------------------------------------

void SyntheticSubject::validate() const {
  if (concepts.concepts.empty()) throw InvalidArgument("subject has no concepts");
  if (selectivity.rows() != static_cast<Eigen::Index>(voxel_ids.size()) ||
      selectivity.cols() != static_cast<Eigen::Index>(concepts.concepts.size()))
    throw ShapeMismatch("selectivity must be n_voxels x n_concepts");
  if (!selectivity.allFinite()) throw InvalidArgument("selectivity has non-finite entries");
  if (noise_sd < 0) throw InvalidArgument("noise_sd must be nonnegative");
  if (noise_scale.size() != voxel_ids.size()) throw ShapeMismatch("one noise multiplier per voxel expected");
  const double peak = hrf.peak_time();
  if (!(peak > 4.0 && peak < 8.0)) throw InvalidArgument("HRF must peak between 4 and 8 s");
}

Matrix SyntheticSubject::concept_activation(const Transcript& transcript) const {
  HashedNgramExtractor emb(kSemanticSeed, embedding_dim, 1);
  const auto nc = static_cast<Eigen::Index>(concepts.concepts.size());
  Matrix centroids(embedding_dim, nc);
  for (Eigen::Index c = 0; c < nc; ++c) {
    Vector acc = Vector::Zero(embedding_dim);
    for (const auto& k : concepts.concepts[static_cast<std::size_t>(c)].keywords) acc += emb.hash_embedding(k).normalized();
    centroids.col(c) = acc.normalized();
  }
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(transcript.size()), nc);
  for (std::size_t w = 0; w < transcript.size(); ++w) {
    const auto tok = normalize_token(transcript.words()[w].token);
    if (tok.empty()) continue;
    const Vector e = emb.hash_embedding(tok).normalized();
    out.row(static_cast<Eigen::Index>(w)) = (centroids.transpose() * e).cwiseMax(0.0).transpose();
  }
  return out;
}

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

}  // namespace

Json SyntheticSubject::to_json() const {
  Json coords_j = Json::array();
  for (const auto& [id, c] : coords) coords_j.push_back({id, c.x, c.y, c.z});
  return {{"voxel_ids", voxel_ids},       {"selectivity", matrix_rows(selectivity)},
          {"concepts", concepts.to_json()}, {"hrf", hrf.to_json()},
          {"noise_sd", noise_sd},         {"noise_scale", noise_scale},
          {"gain", gain},                 {"drift_sd", drift_sd},
          {"embedding_dim", embedding_dim}, {"seed", seed},
          {"coords", coords_j}};
}

SyntheticSubject SyntheticSubject::from_json(const Json& j) {
  SyntheticSubject s;
  s.voxel_ids = j.at("voxel_ids").get<std::vector<VoxelId>>();
  s.concepts = ConceptLexicon::from_json(j.at("concepts"));
  const auto& sel = j.at("selectivity");
  s.selectivity.resize(static_cast<Eigen::Index>(sel.size()), static_cast<Eigen::Index>(s.concepts.concepts.size()));
  for (std::size_t r = 0; r < sel.size(); ++r)
    for (std::size_t c = 0; c < sel[r].size(); ++c)
      s.selectivity(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = sel[r][c].get<double>();
  s.hrf = HrfParams::from_json(j.value("hrf", Json::object()));
  s.noise_sd = j.value("noise_sd", 1.0);
  s.noise_scale = j.value("noise_scale", std::vector<double>(s.voxel_ids.size(), 1.0));
  s.gain = j.value("gain", 1.0);
  s.drift_sd = j.value("drift_sd", 0.0);
  s.embedding_dim = j.value("embedding_dim", 64);
  s.seed = j.value("seed", std::uint64_t{0});
  for (const auto& c : j.value("coords", Json::array()))
    s.coords[c.at(0).get<VoxelId>()] = {c.at(1).get<double>(), c.at(2).get<double>(), c.at(3).get<double>()};
  s.validate();
  return s;
}

void GroundTruthLedger::record_run(const std::string& run_id, double snr) {
  if (!run_snr.emplace(run_id, snr).second) throw InvalidArgument("run " + run_id + " is already recorded");
}

Json GroundTruthLedger::to_json() const {
  Json c = Json::object();
  for (const auto& [id, labels] : concepts) c[std::to_string(id)] = labels;
  return {{"concepts", c}, {"run_snr", run_snr}};
}

GroundTruthLedger GroundTruthLedger::from_json(const Json& j) {
  GroundTruthLedger l;
  for (const auto& [k, v] : j.at("concepts").items()) l.concepts[std::stoll(k)] = v.get<std::vector<std::string>>();
  l.run_snr = j.value("run_snr", std::map<std::string, double>{});
  return l;
}

SubjectAndLedger make_subject(const SubjectSpec& spec, const ConceptLexicon& concept_bank, const HrfParams& hrf) {
  if (concept_bank.concepts.empty()) throw InvalidArgument("concept bank is empty");
  if (spec.n_voxels < 1) throw InvalidArgument("subject needs at least one voxel");
  const auto nc = static_cast<int>(concept_bank.concepts.size());
  SubjectAndLedger out;
  auto& s = out.subject;
  s.concepts = concept_bank;
  s.hrf = hrf;
  s.noise_sd = spec.noise_sd;
  s.gain = spec.gain;
  s.drift_sd = spec.drift_sd;
  s.embedding_dim = spec.embedding_dim;
  s.seed = spec.seed;
  s.noise_scale.assign(static_cast<std::size_t>(spec.n_voxels), 1.0);
  s.selectivity = Matrix::Zero(spec.n_voxels, nc);

  std::uint64_t state = derive_seed(spec.seed, "selectivity");
  std::vector<int> order(static_cast<std::size_t>(spec.n_voxels));
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[splitmix64(state) % i]);

  const int side = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(spec.n_voxels))));
  for (int v = 0; v < spec.n_voxels; ++v) {
    s.voxel_ids.push_back(v);
    s.coords[v] = {static_cast<double>(v % side), static_cast<double>(v / side), 0.0};
    auto& labels = out.ledger.concepts[v];
    if (uniform01(state) <= spec.null_fraction) continue;
    const int c1 = order[static_cast<std::size_t>(v)] % nc;
    s.selectivity(v, c1) = 0.7 + 0.6 * uniform01(state);
    labels.push_back(concept_bank.concepts[static_cast<std::size_t>(c1)].label);
    if (nc > 1 && uniform01(state) <= spec.polysemantic_fraction) {
      const int c2 = (c1 + 1 + static_cast<int>(splitmix64(state) % static_cast<std::uint64_t>(nc - 1))) % nc;
      s.selectivity(v, c2) = 0.7 + 0.6 * uniform01(state);
      labels.push_back(concept_bank.concepts[static_cast<std::size_t>(c2)].label);
    }
  }
  s.validate();
  return out;
}

Matrix simulate_signal(const SyntheticSubject& subject, const Transcript& transcript, const TRGrid& grid) {
  grid.validate();
  WordFeatureSeq seq;
  seq.story_id = transcript.story_id();
  seq.onsets = transcript.onsets();
  seq.rows = subject.concept_activation(transcript);
  seq.extractor_id = "concept-activation";
  const Matrix x = lanczos_resample(seq, grid, 3).values;
  const Vector h = subject.hrf.kernel(grid.tr_s);
  Matrix conv = Matrix::Zero(x.rows(), x.cols());
  for (Eigen::Index t = 0; t < x.rows(); ++t)
    for (Eigen::Index k = 0; k < h.size() && k <= t; ++k) conv.row(t) += h(k) * x.row(t - k);
  return subject.gain * conv * subject.selectivity.transpose();
}

SimulatedRun simulate_run(const SyntheticSubject& subject, const Transcript& transcript, const TRGrid& grid,
                          std::uint64_t run_seed) {
  subject.validate();
  const Matrix signal = simulate_signal(subject, transcript, grid);
  Matrix noise = Matrix::Zero(signal.rows(), signal.cols());
  std::uint64_t state = derive_seed(derive_seed(subject.seed, "noise"), fnv1a64(transcript.story_id()) ^ run_seed);
  for (Eigen::Index v = 0; v < noise.cols(); ++v) {
    const double sd = subject.noise_sd * subject.noise_scale[static_cast<std::size_t>(v)];
    for (Eigen::Index t = 0; t < noise.rows(); ++t) noise(t, v) = sd * standard_normal(state);
  }
  if (subject.drift_sd > 0) {
    const double n = static_cast<double>(noise.rows());
    for (Eigen::Index v = 0; v < noise.cols(); ++v) {
      const double a = subject.drift_sd * standard_normal(state), b = subject.drift_sd * standard_normal(state);
      for (Eigen::Index t = 0; t < noise.rows(); ++t) {
        const double u = 2.0 * static_cast<double>(t) / n - 1.0;
        noise(t, v) += a * u + b * u * u;
      }
    }
  }
  SimulatedRun out;
  auto variance = [](const Matrix& m) {
    double s = 0.0;
    for (Eigen::Index c = 0; c < m.cols(); ++c) s += (m.col(c).array() - m.col(c).mean()).square().mean();
    return m.cols() ? s / static_cast<double>(m.cols()) : 0.0;
  };
  const double nv = variance(noise);
  out.snr = nv > 0 ? variance(signal) / nv : std::numeric_limits<double>::infinity();
  out.responses.grid = grid;
  out.responses.voxel_ids = subject.voxel_ids;
  out.responses.values = signal + noise;
  for (auto c : zscore_columns(out.responses.values)) out.constant_voxels.push_back(subject.voxel_ids[static_cast<std::size_t>(c)]);
  return out;
}

// ---------------------------------------------------------------------------

Json CorpusSpec::to_json() const {
  return {{"n_stories", n_stories},
          {"words_per_story", words_per_story},
          {"segment_words", segment_words},
          {"keyword_density", keyword_density},
          {"word_duration_s", word_duration_s},
          {"duration_jitter_s", duration_jitter_s},
          {"lead_in_s", lead_in_s},
          {"seed", seed}};
}

CorpusSpec CorpusSpec::from_json(const Json& j) {
  CorpusSpec c;
  c.n_stories = j.value("n_stories", c.n_stories);
  c.words_per_story = j.value("words_per_story", c.words_per_story);
  c.segment_words = j.value("segment_words", c.segment_words);
  c.keyword_density = j.value("keyword_density", c.keyword_density);
  c.word_duration_s = j.value("word_duration_s", c.word_duration_s);
  c.duration_jitter_s = j.value("duration_jitter_s", c.duration_jitter_s);
  c.lead_in_s = j.value("lead_in_s", c.lead_in_s);
  c.seed = j.value("seed", c.seed);
  return c;
}

std::vector<Transcript> generate_corpus(const ConceptLexicon& lexicon, const CorpusSpec& spec, const std::string& prefix) {
  if (lexicon.concepts.empty() || lexicon.filler.empty()) throw InvalidArgument("corpus needs concepts and filler words");
  if (spec.n_stories < 1 || spec.words_per_story < 1 || spec.segment_words < 1)
    throw InvalidArgument("corpus sizes must be positive");
  std::vector<Transcript> out;
  for (int s = 0; s < spec.n_stories; ++s) {
    std::uint64_t state = derive_seed(spec.seed, prefix + "-" + std::to_string(s));
    std::vector<Word> words;
    double t = spec.lead_in_s;
    std::size_t topic = 0;
    for (int w = 0; w < spec.words_per_story; ++w) {
      if (w % spec.segment_words == 0) topic = splitmix64(state) % lexicon.concepts.size();
      const auto& kws = lexicon.concepts[topic].keywords;
      const bool kw = uniform01(state) <= spec.keyword_density && !kws.empty();
      const std::string& tok = kw ? kws[splitmix64(state) % kws.size()] : lexicon.filler[splitmix64(state) % lexicon.filler.size()];
      const double dur = spec.word_duration_s + spec.duration_jitter_s * (2.0 * uniform01(state) - 1.0);
      words.push_back({tok, t, t + dur});
      t += dur;
    }
    out.emplace_back(prefix + "-" + std::to_string(s), std::move(words));
  }
  return out;
}

void save_subject(const std::filesystem::path& path, const SyntheticSubject& subject) {
  write_text_file(path, subject.to_json().dump(2) + "\n");
}

SyntheticSubject load_subject(const std::filesystem::path& path) {
  try {
    return SyntheticSubject::from_json(Json::parse(read_text_file(path)));
  } catch (const Json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

}  // namespace gct
