#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "gct/encoding.hpp"

namespace gct {

std::vector<double> CvSpec::default_lambdas() {
  std::vector<double> out;
  for (int i = 0; i < 10; ++i) out.push_back(std::pow(10.0, 4.0 * i / 9.0));
  return out;
}

Json CvSpec::to_json() const {
  return Json{{"chunk_len", chunk_len}, {"n_folds", n_folds}, {"lambdas", lambdas}, {"seed", seed}};
}

CvSpec CvSpec::from_json(const Json& j) {
  CvSpec s;
  s.chunk_len = j.value("chunk_len", 40);
  s.n_folds = j.value("n_folds", 15);
  s.lambdas = j.value("lambdas", default_lambdas());
  s.seed = j.value("seed", std::uint64_t{0});
  return s;
}

void EncodingModel::validate() const {
  if (static_cast<std::size_t>(weights.cols()) != voxel_ids.size()) throw ShapeMismatch("weights/voxel id mismatch");
  if (lambda_per_voxel.size() != voxel_ids.size()) throw ShapeMismatch("lambda/voxel id mismatch");
  if (!weights.allFinite()) throw SingularDesign("non-finite weights");
  for (double l : lambda_per_voxel)
    if (!(l > 0)) throw InvalidArgument("ridge penalty must be positive");
  if (test_r.size() != 0 && static_cast<std::size_t>(test_r.size()) != voxel_ids.size())
    throw ShapeMismatch("test_r/voxel id mismatch");
}

std::optional<Eigen::Index> EncodingModel::column_of(VoxelId id) const {
  auto it = std::find(voxel_ids.begin(), voxel_ids.end(), id);
  if (it == voxel_ids.end()) return std::nullopt;
  return static_cast<Eigen::Index>(it - voxel_ids.begin());
}

Matrix EncodingModel::lag_summed_weights() const {
  const auto lags = std::max<Eigen::Index>(1, static_cast<Eigen::Index>(features.delays_s.size()));
  if (weights.rows() % lags != 0) throw ShapeMismatch("weight rows not divisible by lag count");
  const Eigen::Index base = weights.rows() / lags;
  Matrix out = Matrix::Zero(base, weights.cols());
  for (Eigen::Index b = 0; b < lags; ++b) out += weights.middleRows(b * base, base);
  return out;
}

namespace {

struct GramEigen {
  Vector values;
  Matrix vectors;
};

GramEigen eigen_of(const Matrix& gram) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(gram);
  if (es.info() != Eigen::Success) throw SingularDesign("eigendecomposition of X'X failed");
  return {es.eigenvalues().cwiseMax(0.0), es.eigenvectors()};
}

/// Solve with a shared eigenbasis; columns grouped by lambda.
Matrix solve_in_basis(const GramEigen& ge, const Matrix& xty, std::span<const double> lambda_per_col) {
  Matrix q = ge.vectors.transpose() * xty;  // p x V
  for (Eigen::Index c = 0; c < q.cols(); ++c)
    q.col(c).array() /= (ge.values.array() + lambda_per_col[static_cast<std::size_t>(c)]);
  return ge.vectors * q;
}

double column_corr(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b) {
  const double n = static_cast<double>(a.size());
  const double ma = a.sum() / n, mb = b.sum() / n;
  const double saa = (a.array() - ma).square().sum();
  const double sbb = (b.array() - mb).square().sum();
  if (saa <= 0 || sbb <= 0) return 0.0;
  return ((a.array() - ma) * (b.array() - mb)).sum() / std::sqrt(saa * sbb);
}

}  // namespace

Matrix ridge_solve(const Matrix& x, const Matrix& y, std::span<const double> lambda_per_col) {
  if (x.rows() != y.rows()) throw ShapeMismatch("X and Y row counts differ");
  if (static_cast<Eigen::Index>(lambda_per_col.size()) != y.cols()) throw ShapeMismatch("one lambda per column required");
  if (!x.allFinite()) throw SingularDesign("design matrix has non-finite entries");
  return solve_in_basis(eigen_of(x.transpose() * x), x.transpose() * y, lambda_per_col);
}

EncodingModel fit_ridge_cv(const FeatureMatrix& x_train, const ResponseMatrix& y_train, const CvSpec& cv,
                           const FeatureSpec& features) {
  const Matrix& x = x_train.values;
  if (x.rows() != y_train.values.rows())
    throw ShapeMismatch("X has " + std::to_string(x.rows()) + " rows, Y has " + std::to_string(y_train.values.rows()));
  if (y_train.values.cols() != static_cast<Eigen::Index>(y_train.voxel_ids.size()))
    throw ShapeMismatch("Y columns do not match voxel ids");
  if (cv.lambdas.empty()) throw InvalidArgument("empty lambda grid");
  for (double l : cv.lambdas)
    if (!(l > 0)) throw InvalidArgument("lambdas must be positive");
  if (cv.chunk_len < 1 || cv.n_folds < 2) throw InvalidArgument("bad CV spec");
  if (!x.allFinite() || x.squaredNorm() == 0.0) throw SingularDesign("design matrix is zero or non-finite");

  const Eigen::Index n = x.rows();
  const Eigen::Index nvox = y_train.values.cols();
  const std::size_t nl = cv.lambdas.size();

  // Voxels that cannot be fit are zeroed and reported.
  std::vector<Eigen::Index> good;
  EncodingModel model;
  model.voxel_ids = y_train.voxel_ids;
  for (Eigen::Index c = 0; c < nvox; ++c) {
    auto col = y_train.values.col(c);
    const bool finite = col.allFinite();
    const double var = finite ? (col.array() - col.mean()).square().sum() : 0.0;
    if (finite && var > 0) {
      good.push_back(c);
    } else {
      model.skipped.push_back(y_train.voxel_ids[static_cast<std::size_t>(c)]);
    }
  }
  Matrix y(n, static_cast<Eigen::Index>(good.size()));
  for (std::size_t j = 0; j < good.size(); ++j) y.col(static_cast<Eigen::Index>(j)) = y_train.values.col(good[j]);

  const Matrix gram = x.transpose() * x;
  const Matrix xty = x.transpose() * y;

  // folds
  const Eigen::Index n_chunks = (n + cv.chunk_len - 1) / cv.chunk_len;
  if (n_chunks < 2) throw TooShort("need at least two CV chunks");
  std::vector<Eigen::Index> chunk_order(static_cast<std::size_t>(n_chunks));
  std::iota(chunk_order.begin(), chunk_order.end(), 0);
  std::uint64_t state = cv.seed;
  for (std::size_t i = chunk_order.size(); i > 1; --i)
    std::swap(chunk_order[i - 1], chunk_order[splitmix64(state) % i]);
  const int folds = static_cast<int>(std::min<Eigen::Index>(cv.n_folds, n_chunks));
  std::vector<std::vector<Eigen::Index>> fold_rows(static_cast<std::size_t>(folds));
  for (std::size_t p = 0; p < chunk_order.size(); ++p) {
    auto& rows = fold_rows[p % static_cast<std::size_t>(folds)];
    const Eigen::Index start = chunk_order[p] * cv.chunk_len;
    for (Eigen::Index r = start; r < std::min(n, start + cv.chunk_len); ++r) rows.push_back(r);
  }

  Matrix corr_sum = Matrix::Zero(static_cast<Eigen::Index>(nl), y.cols());
  for (const auto& rows_raw : fold_rows) {
    std::vector<Eigen::Index> rows = rows_raw;
    std::sort(rows.begin(), rows.end());
    const auto nh = static_cast<Eigen::Index>(rows.size());
    Matrix xh(nh, x.cols()), yh(nh, y.cols());
    for (Eigen::Index i = 0; i < nh; ++i) {
      xh.row(i) = x.row(rows[static_cast<std::size_t>(i)]);
      yh.row(i) = y.row(rows[static_cast<std::size_t>(i)]);
    }
    const GramEigen ge = eigen_of(gram - xh.transpose() * xh);
    const Matrix q = ge.vectors.transpose() * (xty - xh.transpose() * yh);
    const Matrix xv = xh * ge.vectors;
    for (std::size_t li = 0; li < nl; ++li) {
      Matrix scaled = q;
      for (Eigen::Index c = 0; c < scaled.cols(); ++c) scaled.col(c).array() /= (ge.values.array() + cv.lambdas[li]);
      const Matrix pred = xv * scaled;
      for (Eigen::Index c = 0; c < y.cols(); ++c) corr_sum(static_cast<Eigen::Index>(li), c) += column_corr(pred.col(c), yh.col(c));
    }
  }
  corr_sum /= folds;

  std::vector<double> chosen(good.size());
  Vector chosen_r(static_cast<Eigen::Index>(good.size()));
  for (Eigen::Index c = 0; c < y.cols(); ++c) {
    Eigen::Index best = 0;
    for (Eigen::Index li = 1; li < static_cast<Eigen::Index>(nl); ++li)
      if (corr_sum(li, c) > corr_sum(best, c)) best = li;
    chosen[static_cast<std::size_t>(c)] = cv.lambdas[static_cast<std::size_t>(best)];
    chosen_r(c) = corr_sum(best, c);
  }
  const Matrix w = solve_in_basis(eigen_of(gram), xty, chosen);

  model.weights = Matrix::Zero(x.cols(), nvox);
  model.lambda_per_voxel.assign(static_cast<std::size_t>(nvox), cv.lambdas.front());
  model.cv_r = Vector::Zero(nvox);
  for (std::size_t j = 0; j < good.size(); ++j) {
    model.weights.col(good[j]) = w.col(static_cast<Eigen::Index>(j));
    model.lambda_per_voxel[static_cast<std::size_t>(good[j])] = chosen[j];
    model.cv_r(good[j]) = chosen_r(static_cast<Eigen::Index>(j));
  }
  model.extractor_id = x_train.extractor_id;
  model.features = features;
  model.cv = cv;
  model.validate();
  return model;
}

Matrix predict(const EncodingModel& model, const FeatureMatrix& x) {
  if (x.values.cols() != model.weights.rows())
    throw ShapeMismatch("features have " + std::to_string(x.values.cols()) + " columns, model expects " +
                        std::to_string(model.weights.rows()));
  return x.values * model.weights;
}

Vector pearson_columns(const Matrix& a, const Matrix& b, std::vector<Eigen::Index>* zero_variance) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeMismatch("pearson_columns: shape mismatch");
  Vector r(a.cols());
  for (Eigen::Index c = 0; c < a.cols(); ++c) {
    const double n = static_cast<double>(a.rows());
    const double sa = (a.col(c).array() - a.col(c).sum() / n).square().sum();
    const double sb = (b.col(c).array() - b.col(c).sum() / n).square().sum();
    if (sa <= 1e-24 || sb <= 1e-24) {
      r(c) = 0.0;
      if (zero_variance) zero_variance->push_back(c);
    } else {
      r(c) = std::clamp(column_corr(a.col(c), b.col(c)), -1.0, 1.0);
    }
  }
  return r;
}

TestEvaluation evaluate_test(const EncodingModel& model, const FeatureMatrix& x_test, const ResponseMatrix& y_test_avg) {
  if (x_test.values.rows() != y_test_avg.values.rows()) throw ShapeMismatch("test X/Y row counts differ");
  Matrix y(y_test_avg.values.rows(), static_cast<Eigen::Index>(model.voxel_ids.size()));
  for (std::size_t j = 0; j < model.voxel_ids.size(); ++j) {
    auto col = y_test_avg.column_of(model.voxel_ids[j]);
    if (!col) throw ShapeMismatch("test responses lack voxel " + std::to_string(model.voxel_ids[j]));
    y.col(static_cast<Eigen::Index>(j)) = y_test_avg.values.col(*col);
  }
  TestEvaluation ev;
  ev.voxel_ids = model.voxel_ids;
  std::vector<Eigen::Index> zero;
  ev.r = pearson_columns(predict(model, x_test), y, &zero);
  for (auto c : zero) ev.zero_variance.push_back(model.voxel_ids[static_cast<std::size_t>(c)]);
  ev.mean_r = ev.r.size() ? ev.r.mean() : 0.0;
  return ev;
}

ResponseMatrix average_repeats(std::span<const ResponseMatrix> repeats) {
  if (repeats.empty()) throw InvalidArgument("no repeats to average");
  ResponseMatrix out = repeats[0];
  for (std::size_t i = 1; i < repeats.size(); ++i) {
    if (repeats[i].values.rows() != out.values.rows() || repeats[i].voxel_ids != out.voxel_ids)
      throw ShapeMismatch("repeats differ in shape");
    out.values += repeats[i].values;
  }
  out.values /= static_cast<double>(repeats.size());
  return out;
}

void save_model(const std::filesystem::path& path, const EncodingModel& model, const Json& provenance) {
  model.validate();
  Json t{{"kind", "encoding_model"},
         {"voxel_ids", model.voxel_ids},
         {"lambda_per_voxel", model.lambda_per_voxel},
         {"extractor_id", model.extractor_id},
         {"features", model.features.to_json()},
         {"cv", model.cv.to_json()},
         {"skipped", model.skipped},
         {"provenance", provenance}};
  t["test_r"] = std::vector<double>(model.test_r.data(), model.test_r.data() + model.test_r.size());
  t["cv_r"] = std::vector<double>(model.cv_r.data(), model.cv_r.data() + model.cv_r.size());
  write_gctf(path, model.weights, std::move(t));
}

EncodingModel load_model(const std::filesystem::path& path) {
  auto f = read_gctf(path);
  const auto& t = f.trailer;
  if (t.value("kind", "") != "encoding_model") throw FormatError(path.string() + " is not an encoding model");
  EncodingModel m;
  m.voxel_ids = t.at("voxel_ids").get<std::vector<VoxelId>>();
  m.lambda_per_voxel = t.at("lambda_per_voxel").get<std::vector<double>>();
  m.extractor_id = t.value("extractor_id", "");
  m.features = FeatureSpec::from_json(t.at("features"));
  m.cv = CvSpec::from_json(t.at("cv"));
  m.skipped = t.value("skipped", std::vector<VoxelId>{});
  auto tr = t.value("test_r", std::vector<double>{});
  m.test_r = Eigen::Map<Vector>(tr.data(), static_cast<Eigen::Index>(tr.size()));
  auto cr = t.value("cv_r", std::vector<double>{});
  m.cv_r = Eigen::Map<Vector>(cr.data(), static_cast<Eigen::Index>(cr.size()));
  m.weights = f.to_matrix();
  m.validate();
  return m;
}

}  // namespace gct
