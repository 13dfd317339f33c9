#include "gct/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

namespace gct::stats {

double mean(std::span<const double> x) {
  if (x.empty()) return 0.0;
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double sd(std::span<const double> x) {
  if (x.size() < 2) return 0.0;
  const double m = mean(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionMismatch("pearson: length mismatch");
  const double ma = mean(a), mb = mean(b);
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa <= 0 || sbb <= 0) return 0.0;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

std::vector<double> ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto i, auto j) { return x[i] < x[j]; });
  std::vector<double> r(x.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
    i = j + 1;
  }
  return r;
}

double spearman(std::span<const double> a, std::span<const double> b) {
  auto ra = ranks(a), rb = ranks(b);
  return pearson(ra, rb);
}

double correlation_p_value(double r, std::size_t n) {
  if (n < 3) return 1.0;
  if (std::abs(r) >= 1.0) return 0.0;
  const double df = static_cast<double>(n) - 2.0;
  const double t = r * std::sqrt(df / (1.0 - r * r));
  return 2.0 * student_t_sf(std::abs(t), df);
}

double student_t_sf(double t, double df) {
  if (!std::isfinite(t)) return t > 0 ? 0.0 : 1.0;
  boost::math::students_t dist(df);
  return boost::math::cdf(boost::math::complement(dist, t));
}

double chi_squared_sf(double x, double df) {
  boost::math::chi_squared dist(df);
  return boost::math::cdf(boost::math::complement(dist, std::max(0.0, x)));
}

double normal_cdf(double z) { return boost::math::cdf(boost::math::normal(), z); }

TTest one_sample_t_greater(std::span<const double> x, double mu) {
  TTest r;
  if (x.size() < 2) return r;
  const double s = sd(x);
  r.df = static_cast<double>(x.size() - 1);
  const double diff = mean(x) - mu;
  if (s == 0.0) {
    r.t = diff > 0 ? INFINITY : (diff < 0 ? -INFINITY : 0.0);
    r.p = diff > 0 ? 0.0 : (diff < 0 ? 1.0 : 0.5);
    return r;
  }
  r.t = diff / (s / std::sqrt(static_cast<double>(x.size())));
  r.p = student_t_sf(r.t, r.df);
  return r;
}

TTest welch_t_greater(std::span<const double> a, std::span<const double> b) {
  TTest r;
  if (a.size() < 2 || b.size() < 2) return r;
  const double va = std::pow(sd(a), 2) / static_cast<double>(a.size());
  const double vb = std::pow(sd(b), 2) / static_cast<double>(b.size());
  const double diff = mean(a) - mean(b);
  if (va + vb == 0.0) {
    r.t = diff > 0 ? INFINITY : (diff < 0 ? -INFINITY : 0.0);
    r.p = diff > 0 ? 0.0 : (diff < 0 ? 1.0 : 0.5);
    return r;
  }
  r.t = diff / std::sqrt(va + vb);
  r.df = (va + vb) * (va + vb) /
         (va * va / static_cast<double>(a.size() - 1) + vb * vb / static_cast<double>(b.size() - 1));
  r.p = student_t_sf(r.t, r.df);
  return r;
}

KsResult ks_uniform(std::vector<double> x) {
  KsResult res;
  if (x.empty()) return res;
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = std::clamp(x[i], 0.0, 1.0);
    d = std::max({d, (static_cast<double>(i) + 1.0) / n - f, f - static_cast<double>(i) / n});
  }
  res.d = d;
  const double sq = std::sqrt(n);
  const double lambda = (sq + 0.12 + 0.11 / sq) * d;
  // Q_KS(lambda) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 lambda^2)
  if (lambda < 0.2) {
    res.p = 1.0;
    return res;
  }
  double sum = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += (k % 2 ? 1.0 : -1.0) * term;
    if (term < 1e-12) break;
  }
  res.p = std::clamp(2.0 * sum, 0.0, 1.0);
  return res;
}

}  // namespace gct::stats
