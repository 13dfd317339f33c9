#pragma once

#include <span>
#include <vector>

#include "gct/core.hpp"

namespace gct::stats {

double mean(std::span<const double> x);
/// Sample standard deviation (n - 1).
double sd(std::span<const double> x);
double pearson(std::span<const double> a, std::span<const double> b);
/// Average ranks (1-based) with ties sharing their mean rank.
std::vector<double> ranks(std::span<const double> x);
double spearman(std::span<const double> a, std::span<const double> b);
/// Two-sided p for a correlation coefficient via the t approximation.
double correlation_p_value(double r, std::size_t n);

struct TTest {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;  ///< one-sided, H1: mean > mu (or mean_a > mean_b)
};
TTest one_sample_t_greater(std::span<const double> x, double mu = 0.0);
TTest welch_t_greater(std::span<const double> a, std::span<const double> b);

double student_t_sf(double t, double df);
double chi_squared_sf(double x, double df);
double normal_cdf(double z);

/// Kolmogorov-Smirnov test of a sample against U(0, 1): statistic and
/// asymptotic p-value (Kolmogorov distribution with the Stephens correction).
struct KsResult {
  double d = 0.0;
  double p = 1.0;
};
KsResult ks_uniform(std::vector<double> x);

inline std::span<const double> span_of(const Vector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

}  // namespace gct::stats
