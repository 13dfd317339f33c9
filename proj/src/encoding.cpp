#include "gct/encoding.hpp"

#include <algorithm>
#include <limits>

#include "gct/ngram_scoring.hpp"
#include "gct/stats.hpp"

namespace gct {

VoxelSelection select_voxels(const EncodingModel& model, int n, double r_threshold, std::uint64_t seed,
                             int n_components) {
  if (model.test_r.size() != static_cast<Eigen::Index>(model.voxel_ids.size()))
    throw InvalidArgument("model has no test correlations; run evaluate_test first");
  if (n < 1) throw InvalidArgument("n must be positive");
  VoxelSelection sel;
  sel.r_threshold = r_threshold;
  std::vector<Eigen::Index> cols;
  for (Eigen::Index c = 0; c < model.test_r.size(); ++c) {
    if (model.test_r(c) > r_threshold) {
      cols.push_back(c);
      sel.candidates.push_back(model.voxel_ids[static_cast<std::size_t>(c)]);
    }
  }
  if (static_cast<int>(cols.size()) < n)
    throw InsufficientVoxels(std::to_string(cols.size()) + " voxels exceed r > " + std::to_string(r_threshold) +
                             ", " + std::to_string(n) + " requested");

  const auto m = static_cast<Eigen::Index>(cols.size());
  Matrix w(m, model.weights.rows());
  for (Eigen::Index i = 0; i < m; ++i) w.row(i) = model.weights.col(cols[static_cast<std::size_t>(i)]).transpose();
  const Vector center = w.colwise().mean().transpose();
  w.rowwise() -= center.transpose();

  Eigen::BDCSVD<Matrix> svd(w, Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  if (s.size() < n_components || s(0) <= 0.0 || s(n_components - 1) <= 1e-9 * s(0))
    throw DegenerateHull("ridge weights of the " + std::to_string(m) + " candidate voxels span fewer than " +
                         std::to_string(n_components) +
                         " dimensions, so their PC hull has zero volume; check that the model was fit on "
                         "varied responses or lower the component count");
  sel.pc_axes = svd.matrixV().leftCols(n_components);
  sel.candidate_projection = w * sel.pc_axes;

  ConvexHullSampler hull(sel.candidate_projection);
  std::mt19937_64 rng(seed);
  std::vector<bool> taken(static_cast<std::size_t>(m), false);
  std::vector<Eigen::Index> picked;
  while (static_cast<int>(picked.size()) < n) {
    const Vector p = hull.sample(rng);
    Eigen::Index best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < m; ++i) {
      if (taken[static_cast<std::size_t>(i)]) continue;
      const double d = (sel.candidate_projection.row(i).transpose() - p).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    taken[static_cast<std::size_t>(best)] = true;
    picked.push_back(best);
  }
  sel.pc_projection.resize(n, n_components);
  for (std::size_t i = 0; i < picked.size(); ++i) {
    sel.selected.push_back(sel.candidates[static_cast<std::size_t>(picked[i])]);
    sel.pc_projection.row(static_cast<Eigen::Index>(i)) = sel.candidate_projection.row(picked[i]);
  }
  return sel;
}

namespace {

Json matrix_json(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = m(r, c);
    rows.push_back(row);
  }
  return rows;
}

Matrix matrix_from_json(const Json& j) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  const Eigen::Index cols = rows ? static_cast<Eigen::Index>(j.at(0).size()) : 0;
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = j.at(r).at(c).get<double>();
  return m;
}

}  // namespace

Json to_json(const VoxelSelection& sel) {
  return Json{{"selected", sel.selected},
              {"r_threshold", sel.r_threshold},
              {"candidates", sel.candidates},
              {"pc_projection", matrix_json(sel.pc_projection)},
              {"candidate_projection", matrix_json(sel.candidate_projection)}};
}

VoxelSelection selection_from_json(const Json& j) {
  VoxelSelection s;
  s.selected = j.at("selected").get<std::vector<VoxelId>>();
  s.r_threshold = j.value("r_threshold", 0.15);
  s.candidates = j.value("candidates", std::vector<VoxelId>{});
  s.pc_projection = matrix_from_json(j.at("pc_projection"));
  if (j.contains("candidate_projection")) s.candidate_projection = matrix_from_json(j["candidate_projection"]);
  return s;
}

// ---------------------------------------------------------------------------

std::string to_string(CorrelationFlavor f) { return f == CorrelationFlavor::spearman ? "spearman" : "pearson"; }

CorrelationFlavor correlation_flavor_from_string(std::string_view s) {
  if (s == "spearman") return CorrelationFlavor::spearman;
  if (s == "pearson") return CorrelationFlavor::pearson;
  throw ParseError("unknown correlation flavor '" + std::string(s) + "'");
}

std::optional<double> StabilityTable::of(VoxelId id) const {
  for (std::size_t i = 0; i < voxel_ids.size(); ++i)
    if (voxel_ids[i] == id) return stability(static_cast<Eigen::Index>(i));
  return std::nullopt;
}

Json StabilityTable::to_json() const {
  return Json{{"voxel_ids", voxel_ids},
              {"stability", std::vector<double>(stability.data(), stability.data() + stability.size())},
              {"catalog_size", catalog_size},
              {"extractor_a", extractor_a},
              {"extractor_b", extractor_b},
              {"flavor", gct::to_string(flavor)}};
}

StabilityTable StabilityTable::from_json(const Json& j) {
  StabilityTable t;
  t.voxel_ids = j.at("voxel_ids").get<std::vector<VoxelId>>();
  auto s = j.at("stability").get<std::vector<double>>();
  t.stability = Eigen::Map<Vector>(s.data(), static_cast<Eigen::Index>(s.size()));
  t.catalog_size = j.value("catalog_size", std::size_t{0});
  t.extractor_a = j.value("extractor_a", "");
  t.extractor_b = j.value("extractor_b", "");
  t.flavor = correlation_flavor_from_string(j.value("flavor", "spearman"));
  return t;
}

StabilityTable stability_score(const EncodingModel& a, const EncodingModel& b, const NGramCatalog& catalog,
                               std::span<const VoxelId> voxels, CorrelationFlavor flavor) {
  if (catalog.empty()) throw EmptyCatalog("stability needs a nonempty n-gram catalog");
  std::vector<VoxelId> ids;
  if (voxels.empty()) {
    for (auto id : a.voxel_ids)
      if (b.column_of(id)) ids.push_back(id);
  } else {
    for (auto id : voxels) {
      if (!a.column_of(id) || !b.column_of(id))
        throw ShapeMismatch("voxel " + std::to_string(id) + " is not covered by both models");
      ids.push_back(id);
    }
  }
  NGramScorer sa(a, catalog), sb(b, catalog);
  const Matrix pa = sa.catalog_scores(ids);
  const Matrix pb = sb.catalog_scores(ids);
  StabilityTable t;
  t.voxel_ids = ids;
  t.stability.resize(static_cast<Eigen::Index>(ids.size()));
  for (Eigen::Index j = 0; j < pa.cols(); ++j) {
    const Vector ca = pa.col(j), cb = pb.col(j);
    t.stability(j) = flavor == CorrelationFlavor::spearman ? stats::spearman(stats::span_of(ca), stats::span_of(cb))
                                                           : stats::pearson(stats::span_of(ca), stats::span_of(cb));
  }
  t.catalog_size = catalog.size();
  t.extractor_a = a.extractor_id;
  t.extractor_b = b.extractor_id;
  t.flavor = flavor;
  return t;
}

}  // namespace gct
