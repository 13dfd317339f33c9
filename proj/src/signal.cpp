#include "gct/signal.hpp"

#include <cmath>
#include <map>
#include <numbers>

namespace gct {

double lanczos_kernel(double x, int a) {
  if (x == 0.0) return 1.0;
  if (std::abs(x) >= a) return 0.0;
  if (x == std::round(x)) return 0.0;
  const double px = std::numbers::pi * x;
  return a * std::sin(px) * std::sin(px / a) / (px * px);
}

FeatureMatrix lanczos_resample(const WordFeatureSeq& seq, const TRGrid& grid, int window, bool renormalize) {
  if (seq.onsets.empty() || seq.rows.rows() == 0) throw EmptyTranscript("no words to resample");
  if (static_cast<Eigen::Index>(seq.onsets.size()) != seq.rows.rows())
    throw DimMismatch("word feature rows do not match onset count");
  if (window < 1) throw InvalidArgument("Lanczos window must be >= 1");
  const double span_end = grid.n_volumes * grid.tr_s;
  for (double o : seq.onsets)
    if (o < 0.0 || o > span_end)
      throw TimingMismatch("word onset " + std::to_string(o) + " s outside grid span [0, " +
                           std::to_string(span_end) + "]");

  FeatureMatrix out;
  out.grid = grid;
  out.extractor_id = seq.extractor_id;
  out.values = Matrix::Zero(grid.n_volumes, seq.rows.cols());
  Vector weight_sum = Vector::Zero(grid.n_volumes);
  for (std::size_t w = 0; w < seq.onsets.size(); ++w) {
    const double center = seq.onsets[w] / grid.tr_s;
    const int lo = std::max(0, static_cast<int>(std::floor(center - window)));
    const int hi = std::min(grid.n_volumes - 1, static_cast<int>(std::ceil(center + window)));
    for (int v = lo; v <= hi; ++v) {
      const double k = lanczos_kernel((grid.volume_time(v) - seq.onsets[w]) / grid.tr_s, window);
      if (k == 0.0) continue;
      out.values.row(v) += k * seq.rows.row(static_cast<Eigen::Index>(w));
      weight_sum(v) += k;
    }
  }
  if (renormalize) {
    for (int v = 0; v < grid.n_volumes; ++v)
      if (weight_sum(v) != 0.0) out.values.row(v) /= weight_sum(v);
  }
  return out;
}

FeatureMatrix fir_expand(const FeatureMatrix& fm, std::span<const double> delays_s) {
  if (delays_s.empty()) throw InvalidArgument("no FIR delays given");
  if (!fm.lag_set.empty()) throw InvalidArgument("feature matrix is already FIR-expanded");
  std::vector<int> shifts;
  for (double d : delays_s) {
    const double k = -d / fm.grid.tr_s;
    if (std::abs(k - std::round(k)) > 1e-9)
      throw NonIntegerDelay("delay " + std::to_string(d) + " s is not a multiple of TR " + std::to_string(fm.grid.tr_s));
    shifts.push_back(static_cast<int>(std::round(k)));
  }
  const Eigen::Index rows = fm.values.rows();
  const Eigen::Index base = fm.values.cols();
  FeatureMatrix out = fm;
  out.values = Matrix::Zero(rows, base * static_cast<Eigen::Index>(shifts.size()));
  out.lag_set.assign(delays_s.begin(), delays_s.end());
  for (std::size_t b = 0; b < shifts.size(); ++b) {
    const int s = shifts[b];
    const Eigen::Index col = base * static_cast<Eigen::Index>(b);
    for (Eigen::Index r = 0; r < rows; ++r) {
      const Eigen::Index src = r - s;
      if (src < 0 || src >= rows) continue;
      out.values.block(r, col, 1, base) = fm.values.row(src);
    }
  }
  return out;
}

FeatureMatrix trim_features(const FeatureMatrix& fm) {
  if (fm.trimmed) return fm;
  fm.grid.validate();
  FeatureMatrix out = fm;
  out.values = fm.values.middleRows(fm.grid.trim_head, fm.grid.retained());
  out.trimmed = true;
  return out;
}

// ---------------------------------------------------------------------------

int savgol_window_volumes(double window_s, double tr_s) {
  int w = static_cast<int>(std::lround(window_s / tr_s));
  if (w % 2 == 0) ++w;
  return std::max(w, 1);
}

namespace {

/// Least-squares weights w with trend(i) = w . y[lo..hi] for a polynomial of
/// `order` fit in x = j - i.
Vector savgol_weights(int rel_lo, int rel_hi, int order) {
  const int count = rel_hi - rel_lo + 1;
  const int deg = std::min(order, count - 1);
  Matrix a(count, deg + 1);
  for (int j = 0; j < count; ++j) {
    const double x = rel_lo + j;
    double p = 1.0;
    for (int k = 0; k <= deg; ++k) {
      a(j, k) = p;
      p *= x;
    }
  }
  // intercept row of the pseudo-inverse
  Matrix pinv = a.colPivHouseholderQr().solve(Matrix::Identity(count, count));
  return pinv.row(0).transpose();
}

Matrix savgol_trend_matrix(const Matrix& y, int order, int window) {
  const int n = static_cast<int>(y.rows());
  const int h = window / 2;
  Matrix trend(y.rows(), y.cols());
  std::map<std::pair<int, int>, Vector> cache;
  for (int i = 0; i < n; ++i) {
    const int lo = std::max(0, i - h);
    const int hi = std::min(n - 1, i + h);
    auto key = std::make_pair(lo - i, hi - i);
    auto it = cache.find(key);
    if (it == cache.end()) it = cache.emplace(key, savgol_weights(key.first, key.second, order)).first;
    trend.row(i) = it->second.transpose() * y.middleRows(lo, hi - lo + 1);
  }
  return trend;
}

}  // namespace

Vector savgol_trend(const Vector& y, int order, int window) {
  if (window % 2 == 0 || window < 1) throw InvalidArgument("Savitzky-Golay window must be odd");
  if (window > y.size()) throw WindowTooLarge("window of " + std::to_string(window) + " exceeds " + std::to_string(y.size()) + " samples");
  return savgol_trend_matrix(y, order, window).col(0);
}

ResponseMatrix savgol_detrend(const ResponseMatrix& rm, int order, double window_s) {
  rm.validate();
  if (order < 0) throw InvalidArgument("negative Savitzky-Golay order");
  const int window = savgol_window_volumes(window_s, rm.grid.tr_s);
  if (window > rm.values.rows())
    throw WindowTooLarge("window of " + std::to_string(window) + " volumes exceeds " +
                         std::to_string(rm.values.rows()) + " volumes");
  ResponseMatrix out = rm;
  out.values = rm.values - savgol_trend_matrix(rm.values, order, window);
  return out;
}

std::vector<Eigen::Index> zscore_columns(Matrix& m) {
  std::vector<Eigen::Index> constant;
  const double n = static_cast<double>(m.rows());
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    auto col = m.col(c);
    const double mean = col.sum() / n;
    col.array() -= mean;
    const double sd = std::sqrt(col.squaredNorm() / n);
    if (!(sd > 1e-10 * std::max(1.0, std::abs(mean)))) {
      col.setZero();
      constant.push_back(c);
    } else {
      col /= sd;
    }
  }
  return constant;
}

ResponseMatrix trim_and_zscore(const ResponseMatrix& rm, ZscoreReport* report) {
  if (rm.trimmed) throw InvalidArgument("responses are already trimmed");
  rm.validate();
  if (rm.grid.n_volumes <= rm.grid.trim_head + rm.grid.trim_tail)
    throw TooShort(std::to_string(rm.grid.n_volumes) + " volumes cannot lose " +
                   std::to_string(rm.grid.trim_head + rm.grid.trim_tail) + " to trimming");
  ResponseMatrix out = rm;
  out.values = rm.values.middleRows(rm.grid.trim_head, rm.grid.retained());
  out.trimmed = true;
  auto constant = zscore_columns(out.values);
  if (report) {
    report->constant_voxels.clear();
    for (auto c : constant) report->constant_voxels.push_back(rm.voxel_ids[static_cast<std::size_t>(c)]);
  }
  return out;
}

ResponseMatrix preprocess_responses(const ResponseMatrix& raw, ZscoreReport* report) {
  return trim_and_zscore(savgol_detrend(raw), report);
}

// ---------------------------------------------------------------------------

Json FeatureSpec::to_json() const {
  return Json{{"extractor", extractor.to_json()},
              {"tr_s", tr_s},
              {"lanczos_window", lanczos_window},
              {"lanczos_renormalize", lanczos_renormalize},
              {"delays_s", delays_s},
              {"word_duration_s", word_duration_s}};
}

FeatureSpec FeatureSpec::from_json(const Json& j) {
  FeatureSpec s;
  s.extractor = ExtractorSpec::from_json(j.at("extractor"));
  s.tr_s = j.value("tr_s", 2.0);
  s.lanczos_window = j.value("lanczos_window", 3);
  s.lanczos_renormalize = j.value("lanczos_renormalize", false);
  s.delays_s = j.value("delays_s", kDefaultDelays);
  s.word_duration_s = j.value("word_duration_s", 0.4);
  return s;
}

FeatureMatrix story_features(const FeatureExtractor& extractor, const FeatureSpec& spec,
                             const Transcript& transcript, const TRGrid& grid, bool trim) {
  auto seq = embed_words(extractor, transcript);
  auto fm = fir_expand(lanczos_resample(seq, grid, spec.lanczos_window, spec.lanczos_renormalize), spec.delays_s);
  return trim ? trim_features(fm) : fm;
}

FeatureMatrix stack_rows(std::span<const FeatureMatrix> parts) {
  if (parts.empty()) throw InvalidArgument("nothing to stack");
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    if (p.values.cols() != parts[0].values.cols()) throw ShapeMismatch("feature dims differ across stories");
    rows += p.values.rows();
  }
  FeatureMatrix out = parts[0];
  out.values.resize(rows, parts[0].values.cols());
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    out.values.middleRows(r, p.values.rows()) = p.values;
    r += p.values.rows();
  }
  out.grid.n_volumes = static_cast<int>(rows);
  out.grid.trim_head = out.grid.trim_tail = 0;
  out.trimmed = false;
  return out;
}

ResponseMatrix stack_rows(std::span<const ResponseMatrix> parts) {
  if (parts.empty()) throw InvalidArgument("nothing to stack");
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    if (p.voxel_ids != parts[0].voxel_ids) throw ShapeMismatch("voxel ids differ across runs");
    rows += p.values.rows();
  }
  ResponseMatrix out = parts[0];
  out.values.resize(rows, parts[0].values.cols());
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    out.values.middleRows(r, p.values.rows()) = p.values;
    r += p.values.rows();
  }
  out.grid.n_volumes = static_cast<int>(rows);
  out.grid.trim_head = out.grid.trim_tail = 0;
  out.trimmed = false;
  return out;
}

void save_features(const std::filesystem::path& path, const FeatureMatrix& fm, const Json& provenance) {
  Json t{{"kind", "features"},     {"grid", to_json(fm.grid)},         {"lag_set", fm.lag_set},
         {"trimmed", fm.trimmed}, {"extractor_id", fm.extractor_id}, {"provenance", provenance}};
  write_gctf(path, fm.values, std::move(t));
}

FeatureMatrix load_features(const std::filesystem::path& path) {
  auto f = read_gctf(path);
  const auto& t = f.trailer;
  if (t.value("kind", "") != "features") throw FormatError(path.string() + " is not a features file");
  FeatureMatrix fm;
  fm.grid = grid_from_json(t.at("grid"));
  fm.lag_set = t.value("lag_set", std::vector<double>{});
  fm.trimmed = t.value("trimmed", false);
  fm.extractor_id = t.value("extractor_id", "");
  fm.values = f.to_matrix();
  return fm;
}

void save_word_features(const std::filesystem::path& path, const WordFeatureSeq& seq, const Json& provenance) {
  Json t{{"kind", "word_features"},
         {"story_id", seq.story_id},
         {"extractor_id", seq.extractor_id},
         {"n_words", seq.rows.rows()},
         {"provenance", provenance}};
  if (!seq.onsets.empty()) t["onsets"] = seq.onsets;
  write_gctf(path, seq.rows, std::move(t));
}

WordFeatureSeq load_word_features(const std::filesystem::path& path) {
  auto f = read_gctf(path);
  const auto& t = f.trailer;
  if (t.value("kind", "") != "word_features") throw FormatError(path.string() + " is not a word_features file");
  WordFeatureSeq seq;
  seq.story_id = t.value("story_id", path.stem().string());
  seq.extractor_id = t.value("extractor_id", "file:" + path.parent_path().string());
  seq.rows = f.to_matrix();
  if (t.contains("n_words") && t["n_words"].get<std::uint64_t>() != f.rows)
    throw FormatError(path.string() + ": n_words disagrees with payload rows");
  seq.onsets = t.value("onsets", std::vector<double>{});
  return seq;
}

}  // namespace gct
