#pragma once

// Independent reference implementations used by the unit tests and the
// acceptance binary. None of them calls the library code they check.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Scalar GLM pieces, written out directly.
inline double expit(double t) { return t >= 0 ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t)); }
inline double logistic_phi(double t) { return t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }

// ---------------------------------------------------------------------------
// Accelerated proximal gradient for
//   mean(phi(x'b) - y x'b) + lambda * sum_{j >= 1} |b_j|
// with the intercept (column 0) unpenalised.
inline VectorXd lasso_prox_grad(const MatrixXd& X, const VectorXd& y, bool logistic, double lambda,
                                int max_iter = 200000, double tol = 1e-14) {
  const double n = static_cast<double>(X.rows());
  const Eigen::Index p = X.cols();
  const double curvature = logistic ? 0.25 : 1.0;
  const double L = curvature * (X.transpose() * X / n).eval().selfadjointView<Eigen::Lower>().eigenvalues().maxCoeff();
  const double step = 1.0 / L;
  VectorXd b = VectorXd::Zero(p), z = b, prev = b;
  double t = 1.0;
  for (int it = 0; it < max_iter; ++it) {
    const VectorXd theta = X * z;
    VectorXd r(theta.size());
    for (Eigen::Index i = 0; i < theta.size(); ++i) r[i] = (logistic ? expit(theta[i]) : theta[i]) - y[i];
    const VectorXd grad = X.transpose() * r / n;
    VectorXd next = z - step * grad;
    for (Eigen::Index j = 1; j < p; ++j) {
      const double v = next[j];
      next[j] = std::copysign(std::max(std::abs(v) - step * lambda, 0.0), v);
    }
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    z = next + ((t - 1.0) / t_next) * (next - b);
    prev = b;
    b = next;
    t = t_next;
    if ((b - prev).lpNorm<Eigen::Infinity>() < tol && it > 100) break;
  }
  return b;
}

// ---------------------------------------------------------------------------
// Integrative quadratic objective and an accelerated proximal-gradient
// minimiser (exact group prox). beta is p x M.
struct GroupQuad {
  std::vector<MatrixXd> H;
  std::vector<VectorXd> xi;
  std::vector<double> w;
  double lambda = 0.0;
};

inline double group_objective(const GroupQuad& g, const MatrixXd& beta) {
  double f = 0.0;
  for (std::size_t m = 0; m < g.H.size(); ++m) {
    const VectorXd b = beta.col(static_cast<Eigen::Index>(m));
    f += g.w[m] * (b.dot(g.H[m] * b) - 2.0 * b.dot(g.xi[m]));
  }
  for (Eigen::Index j = 1; j < beta.rows(); ++j) f += g.lambda * beta.row(j).norm();
  return f;
}

inline MatrixXd group_prox_grad(const GroupQuad& g, int max_iter = 400000, double tol = 1e-15) {
  const Eigen::Index p = g.H.front().rows();
  const auto M = static_cast<Eigen::Index>(g.H.size());
  double L = 0.0;
  for (std::size_t m = 0; m < g.H.size(); ++m)
    L = std::max(L, 2.0 * g.w[m] * g.H[m].selfadjointView<Eigen::Lower>().eigenvalues().maxCoeff());
  const double step = 1.0 / std::max(L, 1e-12);
  MatrixXd b = MatrixXd::Zero(p, M), z = b, prev = b;
  double t = 1.0;
  for (int it = 0; it < max_iter; ++it) {
    MatrixXd next(p, M);
    for (Eigen::Index m = 0; m < M; ++m)
      next.col(m) = z.col(m) - step * 2.0 * g.w[m] * (g.H[m] * z.col(m) - g.xi[m]);
    for (Eigen::Index j = 1; j < p; ++j) {
      const double nrm = next.row(j).norm();
      next.row(j) *= nrm > step * g.lambda ? 1.0 - step * g.lambda / nrm : 0.0;
    }
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    z = next + ((t - 1.0) / t_next) * (next - b);
    prev = b;
    b = next;
    t = t_next;
    if ((b - prev).lpNorm<Eigen::Infinity>() < tol && it > 100) break;
  }
  return b;
}

// ---------------------------------------------------------------------------
// Dantzig program for M = 2, p = 2 by grid search over u^(1) and an exact
// two-variable LP for u^(2) at each grid point:
//   min max(|u1|_1, |u2|_1)  s.t.  (H1 u1 - e)_r^2 + (H2 u2 - e)_r^2 <= tau^2.
namespace detail {

// min |c| + |d| s.t. lo_r <= (A z)_r <= hi_r, r = 0, 1. Infinity if empty.
inline double min_l1_two_slabs(const Eigen::Matrix2d& A, const Eigen::Vector2d& lo, const Eigen::Vector2d& hi) {
  // Lines: A_r z = lo_r, A_r z = hi_r, and the axes c = 0, d = 0. The
  // optimum of this piecewise-linear convex program over a polygon sits
  // at an intersection of two of them (or at the origin).
  struct Line { Eigen::Vector2d a; double b; };
  std::vector<Line> lines;
  for (int r = 0; r < 2; ++r) {
    lines.push_back({A.row(r).transpose(), lo[r]});
    lines.push_back({A.row(r).transpose(), hi[r]});
  }
  lines.push_back({{1.0, 0.0}, 0.0});
  lines.push_back({{0.0, 1.0}, 0.0});
  auto feasible = [&](const Eigen::Vector2d& z) {
    const Eigen::Vector2d v = A * z;
    for (int r = 0; r < 2; ++r)
      if (v[r] < lo[r] - 1e-12 || v[r] > hi[r] + 1e-12) return false;
    return true;
  };
  double best = std::numeric_limits<double>::infinity();
  if (feasible(Eigen::Vector2d::Zero())) best = 0.0;
  for (std::size_t i = 0; i < lines.size(); ++i)
    for (std::size_t k = i + 1; k < lines.size(); ++k) {
      Eigen::Matrix2d S;
      S.row(0) = lines[i].a.transpose();
      S.row(1) = lines[k].a.transpose();
      const double det = S.determinant();
      if (std::abs(det) < 1e-14) continue;
      const Eigen::Vector2d z = S.inverse() * Eigen::Vector2d(lines[i].b, lines[k].b);
      if (feasible(z)) best = std::min(best, z.lpNorm<1>());
    }
  return best;
}

inline double dantzig_value_at(const Eigen::Matrix2d& H1, const Eigen::Matrix2d& H2, int j, double tau,
                               double a, double b) {
  const Eigen::Vector2d e = Eigen::Vector2d::Unit(j);
  const Eigen::Vector2d r1 = H1 * Eigen::Vector2d(a, b) - e;
  Eigen::Vector2d lo, hi;
  for (int r = 0; r < 2; ++r) {
    const double slack = tau * tau - r1[r] * r1[r];
    if (slack < 0) return std::numeric_limits<double>::infinity();
    const double rho = std::sqrt(slack);
    lo[r] = e[r] - rho;
    hi[r] = e[r] + rho;
  }
  return std::max(std::abs(a) + std::abs(b), min_l1_two_slabs(H2, lo, hi));
}

}  // namespace detail

inline double dantzig_grid_m2p2(const Eigen::Matrix2d& H1, const Eigen::Matrix2d& H2, int j, double tau,
                                double box, double step = 1e-3) {
  double best = std::numeric_limits<double>::infinity(), ba = 0.0, bb = 0.0;
  const int n = static_cast<int>(std::ceil(box / step));
  for (int ia = -n; ia <= n; ++ia)
    for (int ib = -n; ib <= n; ++ib) {
      const double a = ia * step, b = ib * step;
      if (std::abs(a) + std::abs(b) > best) continue;  // cannot improve
      const double v = detail::dantzig_value_at(H1, H2, j, tau, a, b);
      if (v < best) {
        best = v;
        ba = a;
        bb = b;
      }
    }
  // Refine on a finer grid around the coarse optimum.
  const double fine = step / 100.0;
  const double ca = ba, cb = bb;
  for (int ia = -200; ia <= 200; ++ia)
    for (int ib = -200; ib <= 200; ++ib) {
      const double a = ca + ia * fine, b = cb + ib * fine;
      best = std::min(best, detail::dantzig_value_at(H1, H2, j, tau, a, b));
    }
  return best;
}

// ---------------------------------------------------------------------------
// Composite Simpson rule on [a, b] with n (even) panels.
template <typename F>
double simpson(F f, double a, double b, int n = 20000) {
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

inline double normal_survival_quad(double t) {
  const double upper = std::max(t, 0.0) + 40.0;
  return simpson([](double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }, t, upper,
                 200000);
}

inline double chi2_density(double x, int df) {
  if (x <= 0) return 0.0;
  const double k = df / 2.0;
  return std::exp((k - 1.0) * std::log(x) - x / 2.0 - k * std::log(2.0) - std::lgamma(k));
}

// Survival via the density; for df <= 2 the substitution x = s^2 removes the
// endpoint singularity.
inline double chi2_survival_quad(double x, int df) {
  const double upper = x + 400.0 + 40.0 * df;
  if (x <= 0) return 1.0;
  return simpson([df](double s) { return 2.0 * s * chi2_density(s * s, df); }, std::sqrt(x), std::sqrt(upper),
                 200000);
}

// Bisection inverse of the quadrature normal survival.
inline double normal_survival_inverse_quad(double prob) {
  double lo = -40.0, hi = 40.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (normal_survival_quad(mid) > prob) lo = mid; else hi = mid;
    if (hi - lo < 1e-13) break;
  }
  return 0.5 * (lo + hi);
}

// ---------------------------------------------------------------------------
// FDR threshold by scanning t = 0, step, 2 step, ... <= t_q; returns the
// rejection positions, ascending.
inline std::vector<int> fdr_grid_scan(const std::vector<double>& scores, double alpha, double step = 1e-4) {
  const double q = static_cast<double>(scores.size());
  const double tq = std::sqrt(2.0 * std::log(q) - 2.0 * std::log(std::log(q)));
  std::vector<double> sorted = scores;
  std::sort(sorted.begin(), sorted.end());
  auto reject_count = [&](double t) {
    return static_cast<double>(sorted.end() - std::lower_bound(sorted.begin(), sorted.end(), t));
  };
  auto survival = [](double t) { return 0.5 * std::erfc(t / std::sqrt(2.0)); };
  double threshold = std::sqrt(2.0 * std::log(q));
  const long steps = static_cast<long>(std::floor(tq / step));
  for (long i = 0; i <= steps; ++i) {
    const double t = i * step;
    if (2.0 * q * survival(t) / std::max(reject_count(t), 1.0) <= alpha) {
      threshold = t;
      break;
    }
  }
  std::vector<int> out;
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (scores[i] >= threshold) out.push_back(static_cast<int>(i));
  return out;
}

// Kolmogorov-Smirnov distance between a sample and a CDF.
template <typename Cdf>
double ks_distance(std::vector<double> sample, Cdf cdf) {
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double F = cdf(sample[i]);
    d = std::max({d, (i + 1) / n - F, F - i / n});
  }
  return d;
}

}  // namespace oracle
