#include "gct/ngram_scoring.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gct/stats.hpp"

namespace gct {

Target Target::voxel(VoxelId id) { return {"voxel:" + std::to_string(id), {{id, 1.0}}}; }

Target Target::roi(const ROIMask& roi) {
  Target t{"roi:" + roi.name, {}};
  const double w = 1.0 / static_cast<double>(roi.voxel_ids.size());
  for (auto id : roi.voxel_ids) t.weights.emplace_back(id, w);
  return t;
}

Target Target::contrast(const ROIMask& roi, std::span<const ROIMask> suppress) {
  Target t = Target::roi(roi);
  t.name = "contrast:" + roi.name;
  if (suppress.empty()) return t;
  std::map<VoxelId, double> acc(t.weights.begin(), t.weights.end());
  for (const auto& s : suppress) {
    t.name += "-" + s.name;
    const double w = 1.0 / (static_cast<double>(s.voxel_ids.size()) * static_cast<double>(suppress.size()));
    for (auto id : s.voxel_ids) acc[id] -= w;
  }
  t.weights.assign(acc.begin(), acc.end());
  return t;
}

Json Target::to_json() const {
  Json w = Json::array();
  for (const auto& [id, c] : weights) w.push_back({id, c});
  return Json{{"name", name}, {"weights", w}};
}

Target Target::from_json(const Json& j) {
  Target t;
  t.name = j.at("name").get<std::string>();
  for (const auto& p : j.at("weights")) t.weights.emplace_back(p.at(0).get<VoxelId>(), p.at(1).get<double>());
  return t;
}

Vector target_coefficients(const EncodingModel& model, const Target& target) {
  Vector coef = Vector::Zero(static_cast<Eigen::Index>(model.voxel_ids.size()));
  for (const auto& [id, w] : target.weights) {
    auto col = model.column_of(id);
    if (!col) throw ShapeMismatch("target " + target.name + " uses voxel " + std::to_string(id) + " absent from the model");
    coef(*col) += w;
  }
  return coef;
}

namespace {

struct IsolatedLayout {
  Transcript transcript;
  TRGrid grid;
};

IsolatedLayout isolate(const std::vector<std::string>& words, const FeatureSpec& spec) {
  int max_pos = 0, max_neg = 0;
  for (double d : spec.delays_s) {
    const int s = static_cast<int>(std::lround(-d / spec.tr_s));
    max_pos = std::max(max_pos, s);
    max_neg = std::max(max_neg, -s);
  }
  const double lead = (spec.lanczos_window + max_neg + 1) * spec.tr_s;
  std::vector<Word> ws;
  for (std::size_t i = 0; i < words.size(); ++i) {
    const double on = lead + static_cast<double>(i) * spec.word_duration_s;
    ws.push_back({words[i], on, on + spec.word_duration_s});
  }
  const double end = lead + static_cast<double>(words.size()) * spec.word_duration_s;
  TRGrid g;
  g.tr_s = spec.tr_s;
  g.trim_head = g.trim_tail = 0;
  g.n_volumes = static_cast<int>(std::ceil(end / spec.tr_s)) + spec.lanczos_window + max_pos + 2;
  return {Transcript("isolated", std::move(ws)), g};
}

template <class RowFn>
Matrix phrase_rows(const FeatureExtractor& extractor, const FeatureSpec& spec, std::span<const std::string> phrases,
                   Eigen::Index cols, RowFn&& row_of) {
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(phrases.size()), cols);
  for (std::size_t i = 0; i < phrases.size(); ++i) {
    auto words = normalize_words(phrases[i]);
    if (words.empty()) continue;
    auto layout = isolate(words, spec);
    auto seq = embed_words(extractor, layout.transcript);
    auto fm = lanczos_resample(seq, layout.grid, spec.lanczos_window, spec.lanczos_renormalize);
    out.row(static_cast<Eigen::Index>(i)) = row_of(fm);
  }
  return out;
}

}  // namespace

Matrix phrase_design(const FeatureExtractor& extractor, const FeatureSpec& spec, std::span<const std::string> phrases) {
  const auto cols = static_cast<Eigen::Index>(extractor.dim()) * static_cast<Eigen::Index>(spec.delays_s.size());
  return phrase_rows(extractor, spec, phrases, cols, [&](const FeatureMatrix& fm) -> Vector {
    return fir_expand(fm, spec.delays_s).values.colwise().sum().transpose();
  });
}

Matrix phrase_design_folded(const FeatureExtractor& extractor, const FeatureSpec& spec,
                            std::span<const std::string> phrases) {
  return phrase_rows(extractor, spec, phrases, extractor.dim(),
                     [](const FeatureMatrix& fm) -> Vector { return fm.values.colwise().sum().transpose(); });
}

std::vector<std::string> NGramScoreTable::top_texts(std::size_t k) const {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < std::min(k, scored.size()); ++i) out.push_back(scored[i].first.text);
  return out;
}

NGramScorer::NGramScorer(const EncodingModel& model, NGramCatalog catalog)
    : model_(std::make_shared<const EncodingModel>(model)),
      catalog_(std::move(catalog)),
      extractor_(make_extractor(model.features.extractor)) {
  if (catalog_.empty()) throw EmptyCatalog("n-gram catalog is empty");
  std::vector<std::string> texts;
  texts.reserve(catalog_.size());
  for (const auto& g : catalog_.unique) texts.push_back(g.text);
  folded_ = phrase_design_folded(*extractor_, model_->features, texts);
  summed_weights_ = model_->lag_summed_weights();
  if (summed_weights_.rows() != folded_.cols()) throw ShapeMismatch("model weights do not match extractor dimension");
}

Vector NGramScorer::target_weights(const Target& target) const {
  return summed_weights_ * target_coefficients(*model_, target);
}

Vector NGramScorer::catalog_scores(const Target& target) const { return folded_ * target_weights(target); }

Matrix NGramScorer::catalog_scores(std::span<const VoxelId> voxels) const {
  Matrix w(summed_weights_.rows(), static_cast<Eigen::Index>(voxels.size()));
  for (std::size_t j = 0; j < voxels.size(); ++j) {
    auto col = model_->column_of(voxels[j]);
    if (!col) throw ShapeMismatch("voxel " + std::to_string(voxels[j]) + " absent from the model");
    w.col(static_cast<Eigen::Index>(j)) = summed_weights_.col(*col);
  }
  return folded_ * w;
}

Vector NGramScorer::phrase_scores(const Target& target, std::span<const std::string> phrases) const {
  return phrase_design_folded(*extractor_, model_->features, phrases) * target_weights(target);
}

double NGramScorer::catalog_sd(const Target& target) const {
  Vector s = catalog_scores(target);
  return stats::sd(stats::span_of(s));
}

NGramScoreTable NGramScorer::table(const Target& target) const {
  Vector s = catalog_scores(target);
  std::vector<std::size_t> order(catalog_.size());
  std::iota(order.begin(), order.end(), 0);
  // catalog is sorted by text, so a stable sort keeps ties in text order
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) {
    return s(static_cast<Eigen::Index>(a)) > s(static_cast<Eigen::Index>(b));
  });
  NGramScoreTable t;
  t.target = target.name;
  t.scored.reserve(order.size());
  for (auto i : order) t.scored.emplace_back(catalog_.unique[i], s(static_cast<Eigen::Index>(i)));
  return t;
}

NGramScoreTable score_ngrams(const EncodingModel& model, const Target& target, const NGramCatalog& catalog) {
  return NGramScorer(model, catalog).table(target);
}

}  // namespace gct
