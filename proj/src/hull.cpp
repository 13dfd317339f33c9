#include <cmath>
#include <limits>

#include "gct/encoding.hpp"

namespace gct {

bool lp_feasible(const Matrix& a, const Vector& b, double tol) {
  const Eigen::Index k = a.rows();
  const Eigen::Index m = a.cols();
  if (b.size() != k) throw ShapeMismatch("lp_feasible: rhs size");
  // Tableau [A | I | b] with the phase-1 objective (sum of artificials) in row k.
  Matrix t = Matrix::Zero(k + 1, m + k + 1);
  const Eigen::Index rhs = m + k;
  for (Eigen::Index i = 0; i < k; ++i) {
    const double sign = b(i) < 0 ? -1.0 : 1.0;
    t.block(i, 0, 1, m) = sign * a.row(i);
    t(i, m + i) = 1.0;
    t(i, rhs) = sign * b(i);
  }
  for (Eigen::Index i = 0; i < k; ++i) {
    t.block(k, 0, 1, m) -= t.block(i, 0, 1, m);
    t(k, rhs) -= t(i, rhs);
  }
  std::vector<Eigen::Index> basis(static_cast<std::size_t>(k));
  for (Eigen::Index i = 0; i < k; ++i) basis[static_cast<std::size_t>(i)] = m + i;

  const double scale = 1.0 + b.cwiseAbs().maxCoeff() + a.cwiseAbs().maxCoeff();
  const double eps = 1e-12 * scale;
  for (int iter = 0; iter < 50 * static_cast<int>(m + k) + 100; ++iter) {
    // Bland's rule: first improving column
    Eigen::Index enter = -1;
    for (Eigen::Index j = 0; j < m + k; ++j) {
      if (t(k, j) < -eps) {
        enter = j;
        break;
      }
    }
    if (enter < 0) break;
    Eigen::Index leave = -1;
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < k; ++i) {
      if (t(i, enter) > eps) {
        const double ratio = t(i, rhs) / t(i, enter);
        if (ratio < best - 1e-15 ||
            (std::abs(ratio - best) <= 1e-15 && leave >= 0 && basis[static_cast<std::size_t>(i)] < basis[static_cast<std::size_t>(leave)])) {
          best = ratio;
          leave = i;
        }
      }
    }
    if (leave < 0) break;  // unbounded direction; cannot happen in phase 1
    t.row(leave) /= t(leave, enter);
    for (Eigen::Index i = 0; i <= k; ++i)
      if (i != leave && t(i, enter) != 0.0) t.row(i) -= t(i, enter) * t.row(leave);
    basis[static_cast<std::size_t>(leave)] = enter;
  }
  return -t(k, rhs) <= tol * scale;
}

ConvexHullSampler::ConvexHullSampler(Matrix points) : points_(std::move(points)) {
  if (points_.rows() == 0 || points_.cols() == 0) throw DegenerateHull("no points");
  lo_ = points_.colwise().minCoeff().transpose();
  hi_ = points_.colwise().maxCoeff().transpose();
}

bool ConvexHullSampler::contains(const Vector& p, double tol) const {
  const Eigen::Index d = points_.cols();
  if (p.size() != d) throw DimensionMismatch("point dimension differs from hull dimension");
  for (Eigen::Index i = 0; i < d; ++i) {
    const double slack = tol * (1.0 + hi_(i) - lo_(i));
    if (p(i) < lo_(i) - slack || p(i) > hi_(i) + slack) return false;
  }
  Matrix a(d + 1, points_.rows());
  a.topRows(d) = points_.transpose();
  a.row(d).setOnes();
  Vector b(d + 1);
  b.head(d) = p;
  b(d) = 1.0;
  return lp_feasible(a, b, tol);
}

Vector ConvexHullSampler::sample(std::mt19937_64& rng, int max_tries) const {
  // top 53 bits of the engine output, so samples do not depend on the
  // standard library's distribution code
  auto u = [](std::mt19937_64& g) { return static_cast<double>(g() >> 11) * 0x1.0p-53; };
  const Eigen::Index d = points_.cols();
  Vector p(d);
  for (int tries = 0; tries < max_tries; ++tries) {
    for (Eigen::Index i = 0; i < d; ++i) p(i) = lo_(i) + (hi_(i) - lo_(i)) * u(rng);
    if (contains(p)) return p;
  }
  throw DegenerateHull("no sample accepted after " + std::to_string(max_tries) + " tries; the hull has (near) zero volume");
}

}  // namespace gct
