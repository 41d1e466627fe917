#include <algorithm>
#include <cmath>

#include "dsilt/errors.hpp"
#include "dsilt/solvers.hpp"

namespace dsilt {

namespace {

double soft(double z, double kappa) {
  if (z > kappa) return z - kappa;
  if (z < -kappa) return z + kappa;
  return 0.0;
}

double penalized_loss(const MatrixXd& X, const VectorXd& y, Family family, double lambda,
                      const VectorXd& beta) {
  const VectorXd theta = X * beta;
  double loss = 0.0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) loss += glm_loss(family, theta[i], y[i]);
  return loss / static_cast<double>(X.rows()) + lambda * beta.tail(beta.size() - 1).lpNorm<1>();
}

// Coordinate descent on (1/2n) sum_i w_i (z_i - x_i'b)^2 + lambda ||b_{-1}||_1.
// `resid` must hold z - X b on entry and is kept in sync.
int weighted_cd(const MatrixXd& X, const VectorXd& w, double lambda, double tol, int max_sweeps,
                VectorXd& beta, VectorXd& resid) {
  const Eigen::Index n = X.rows();
  const Eigen::Index p = X.cols();
  const double inv_n = 1.0 / static_cast<double>(n);
  VectorXd curvature(p);
  for (Eigen::Index j = 0; j < p; ++j)
    curvature[j] = X.col(j).cwiseAbs2().dot(w) * inv_n;

  auto update = [&](Eigen::Index j) {
    if (curvature[j] <= 0.0) {
      if (beta[j] != 0.0) {
        resid += X.col(j) * beta[j];
        beta[j] = 0.0;
      }
      return 0.0;
    }
    const double grad = X.col(j).cwiseProduct(w).dot(resid) * inv_n;
    const double kappa = j == 0 ? 0.0 : lambda;
    const double updated = soft(beta[j] * curvature[j] + grad, kappa) / curvature[j];
    const double delta = updated - beta[j];
    if (delta != 0.0) {
      resid -= X.col(j) * delta;
      beta[j] = updated;
    }
    return std::abs(delta);
  };

  int sweeps = 0;
  while (sweeps < max_sweeps) {
    // Full sweep.
    double change = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) change = std::max(change, update(j));
    ++sweeps;
    if (change < tol) break;
    // Cycle on the active set until it settles, then re-check with a full sweep.
    while (sweeps < max_sweeps) {
      double active_change = 0.0;
      for (Eigen::Index j = 0; j < p; ++j)
        if (j == 0 || beta[j] != 0.0) active_change = std::max(active_change, update(j));
      ++sweeps;
      if (active_change < tol) break;
    }
  }
  return sweeps;
}

}  // namespace

double lasso_kkt_residual(const MatrixXd& X, const VectorXd& y, Family family, double lambda,
                          const VectorXd& beta) {
  const VectorXd theta = X * beta;
  VectorXd score(theta.size());
  for (Eigen::Index i = 0; i < theta.size(); ++i)
    score[i] = link_eval(family, theta[i]).dphi - y[i];
  const VectorXd grad = X.transpose() * score / static_cast<double>(X.rows());
  double worst = std::abs(grad[0]);
  for (Eigen::Index j = 1; j < grad.size(); ++j) {
    const double r = beta[j] != 0.0 ? std::abs(grad[j] + lambda * (beta[j] > 0 ? 1.0 : -1.0))
                                    : std::max(0.0, std::abs(grad[j]) - lambda);
    worst = std::max(worst, r);
  }
  return worst;
}

LassoFit lasso_fit(const MatrixXd& X, const VectorXd& y, const LassoSpec& spec,
                   const VectorXd* warm_start) {
  if (X.rows() == 0) throw InputError("lasso_fit: empty subset");
  if (X.rows() != y.size()) throw InputError("lasso_fit: X/y size mismatch");
  if (spec.lambda < 0.0 || spec.tol <= 0.0) throw ConfigError("lasso_fit: invalid spec");
  const Eigen::Index n = X.rows();
  const Eigen::Index p = X.cols();

  LassoFit fit;
  if (warm_start != nullptr && warm_start->size() == p) {
    fit.beta = *warm_start;
  } else {
    fit.beta = VectorXd::Zero(p);
    const double ybar = y.mean();
    if (spec.family == Family::kGaussian) {
      fit.beta[0] = ybar;
    } else {
      const double clipped = std::clamp(ybar, 1e-3, 1.0 - 1e-3);
      fit.beta[0] = std::log(clipped / (1.0 - clipped));
    }
  }

  if (spec.family == Family::kGaussian) {
    const VectorXd w = VectorXd::Ones(n);
    VectorXd resid = y - X * fit.beta;
    fit.iterations = weighted_cd(X, w, spec.lambda, spec.tol, spec.max_iter, fit.beta, resid);
  } else {
    double objective = penalized_loss(X, y, spec.family, spec.lambda, fit.beta);
    int outer = 0;
    for (; outer < spec.max_iter; ++outer) {
      const VectorXd theta = X * fit.beta;
      VectorXd w(n), z(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        const LinkValues lv = link_eval(spec.family, theta[i]);
        w[i] = std::max(lv.ddphi, 1e-6);
        z[i] = theta[i] + (y[i] - lv.dphi) / w[i];
      }
      VectorXd candidate = fit.beta;
      VectorXd resid = z - theta;
      fit.iterations += weighted_cd(X, w, spec.lambda, spec.tol, spec.max_iter, candidate, resid);

      // Backtrack if the quadratic step overshoots.
      VectorXd step = candidate - fit.beta;
      double next = penalized_loss(X, y, spec.family, spec.lambda, candidate);
      for (int halvings = 0; next > objective + 1e-12 && halvings < 30; ++halvings) {
        step *= 0.5;
        candidate = fit.beta + step;
        next = penalized_loss(X, y, spec.family, spec.lambda, candidate);
      }
      const double change = step.lpNorm<Eigen::Infinity>();
      fit.beta = std::move(candidate);
      objective = next;
      if (change < spec.tol) break;
    }
    if (outer == spec.max_iter) {
      const double kkt = lasso_kkt_residual(X, y, spec.family, spec.lambda, fit.beta);
      throw ConvergenceError("lasso_fit: proximal Newton did not converge", kkt);
    }
  }

  fit.kkt_residual = lasso_kkt_residual(X, y, spec.family, spec.lambda, fit.beta);
  if (fit.kkt_residual > spec.kkt_tol)
    throw ConvergenceError("lasso_fit: KKT conditions not met", fit.kkt_residual);
  return fit;
}

}  // namespace dsilt
