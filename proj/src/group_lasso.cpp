#include <algorithm>
#include <cmath>
#include <limits>

#include "dsilt/errors.hpp"
#include "dsilt/solvers.hpp"

namespace dsilt {

VectorXd block_soft_threshold(const VectorXd& v, double kappa) {
  const double norm = v.norm();
  if (norm <= kappa || norm == 0.0) return VectorXd::Zero(v.size());
  return (1.0 - kappa / norm) * v;
}

void GroupQuadProblem::validate() const {
  const Eigen::Index M = this->M();
  if (M == 0) throw InputError("GroupQuadProblem: no studies");
  if (static_cast<Eigen::Index>(xi_blocks.size()) != M ||
      static_cast<Eigen::Index>(weights.size()) != M)
    throw InputError("GroupQuadProblem: block counts disagree");
  const Eigen::Index p = this->p();
  for (Eigen::Index m = 0; m < M; ++m) {
    if (H_blocks[m].rows() != p || H_blocks[m].cols() != p || xi_blocks[m].size() != p)
      throw InputError("GroupQuadProblem: dimension mismatch");
    if ((H_blocks[m] - H_blocks[m].transpose()).cwiseAbs().maxCoeff() > 1e-10)
      throw InputError("GroupQuadProblem: H block not symmetric");
    if (!(weights[m] > 0.0)) throw InputError("GroupQuadProblem: weights must be positive");
  }
  if (lambda < 0.0) throw InputError("GroupQuadProblem: negative lambda");
}

double group_quad_objective(const GroupQuadProblem& problem, const CoefficientBlock& beta) {
  double value = 0.0;
  for (Eigen::Index m = 0; m < problem.M(); ++m) {
    const auto b = beta.study(m);
    value += problem.weights[m] *
             (b.dot(problem.H_blocks[m] * b) - 2.0 * b.dot(problem.xi_blocks[m]));
  }
  const Eigen::Index first = problem.penalize_first ? 0 : 1;
  for (Eigen::Index j = first; j < problem.p(); ++j) value += problem.lambda * beta.group(j).norm();
  return value;
}

double group_quad_kkt_residual(const GroupQuadProblem& problem, const CoefficientBlock& beta) {
  const Eigen::Index M = problem.M();
  const Eigen::Index p = problem.p();
  MatrixXd grad(p, M);
  for (Eigen::Index m = 0; m < M; ++m)
    grad.col(m) = 2.0 * problem.weights[m] *
                  (problem.H_blocks[m] * beta.study(m) - problem.xi_blocks[m]);
  double worst = 0.0;
  for (Eigen::Index j = 0; j < p; ++j) {
    const bool penalized = j > 0 || problem.penalize_first;
    const VectorXd g = grad.row(j).transpose();
    const VectorXd b = beta.group(j).transpose();
    const double bn = b.norm();
    double r;
    if (!penalized || problem.lambda == 0.0) {
      r = g.norm();
    } else if (bn > 0.0) {
      r = (g + problem.lambda * b / bn).norm();
    } else {
      r = std::max(0.0, g.norm() - problem.lambda);
    }
    worst = std::max(worst, r);
  }
  return worst;
}

namespace {

// argmin_b sum_m (a_m / 2 b_m^2 - c_m b_m) + kappa ||b||_2 with a_m >= 0.
VectorXd group_subproblem(const VectorXd& a, const VectorXd& c, double kappa) {
  const Eigen::Index M = a.size();
  VectorXd b = VectorXd::Zero(M);
  if (kappa == 0.0) {
    for (Eigen::Index m = 0; m < M; ++m) {
      if (a[m] > 0.0) {
        b[m] = c[m] / a[m];
      } else if (c[m] != 0.0) {
        throw NumericalError("group_lasso_quad: unbounded direction (zero curvature)");
      }
    }
    return b;
  }
  if (c.norm() <= kappa) return b;

  // b_m = c_m s / (a_m s + kappa) with s = ||b||, where s solves
  // sum_m c_m^2 / (a_m s + kappa)^2 = 1.
  double flat = 0.0;
  for (Eigen::Index m = 0; m < M; ++m)
    if (a[m] <= 0.0) flat += c[m] * c[m];
  if (flat >= kappa * kappa)
    throw NumericalError("group_lasso_quad: unbounded direction (zero curvature)");

  auto excess = [&](double s) {
    double total = 0.0;
    for (Eigen::Index m = 0; m < M; ++m) {
      const double d = a[m] * s + kappa;
      total += c[m] * c[m] / (d * d);
    }
    return total - 1.0;
  };
  double lo = 0.0;
  double hi = 1.0;
  while (excess(hi) > 0.0) hi *= 2.0;
  // Newton steps safeguarded by the bracket.
  double s = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    const double f = excess(s);
    if (f > 0.0) lo = s; else hi = s;
    double deriv = 0.0;
    for (Eigen::Index m = 0; m < M; ++m) {
      const double d = a[m] * s + kappa;
      deriv -= 2.0 * c[m] * c[m] * a[m] / (d * d * d);
    }
    double next = deriv < 0.0 ? s - f / deriv : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - s) <= 1e-15 * std::max(1.0, s)) {
      s = next;
      break;
    }
    s = next;
  }
  for (Eigen::Index m = 0; m < M; ++m) b[m] = c[m] * s / (a[m] * s + kappa);
  return b;
}

}  // namespace

GroupLassoResult group_lasso_quad(const GroupQuadProblem& problem, const GroupLassoOptions& options,
                                  const CoefficientBlock* warm_start) {
  problem.validate();
  const Eigen::Index M = problem.M();
  const Eigen::Index p = problem.p();
  for (Eigen::Index m = 0; m < M; ++m)
    if (problem.H_blocks[m].diagonal().minCoeff() < -1e-12)
      throw NumericalError("group_lasso_quad: H block is not positive semidefinite");

  GroupLassoResult result;
  result.beta = (warm_start != nullptr && warm_start->p() == p && warm_start->M() == M)
                    ? *warm_start
                    : CoefficientBlock(p, M);
  MatrixXd& beta = result.beta.matrix();

  // Hb[:, m] = H_m beta_m, kept in sync with coordinate updates.
  MatrixXd Hb(p, M);
  for (Eigen::Index m = 0; m < M; ++m) Hb.col(m) = problem.H_blocks[m] * beta.col(m);

  VectorXd a(M), c(M);
  double previous = std::numeric_limits<double>::infinity();
  if (options.record_objective) previous = group_quad_objective(problem, result.beta);

  bool converged = false;
  for (result.sweeps = 0; result.sweeps < options.max_iter;) {
    double change = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) {
      for (Eigen::Index m = 0; m < M; ++m) {
        const double hjj = problem.H_blocks[m](j, j);
        const double w = problem.weights[m];
        a[m] = 2.0 * w * hjj;
        c[m] = 2.0 * w * (problem.xi_blocks[m][j] - (Hb(j, m) - hjj * beta(j, m)));
      }
      const bool penalized = j > 0 || problem.penalize_first;
      const VectorXd updated = group_subproblem(a, c, penalized ? problem.lambda : 0.0);
      for (Eigen::Index m = 0; m < M; ++m) {
        const double delta = updated[m] - beta(j, m);
        if (delta != 0.0) {
          Hb.col(m) += problem.H_blocks[m].col(j) * delta;
          beta(j, m) = updated[m];
          change = std::max(change, std::abs(delta));
        }
      }
    }
    ++result.sweeps;
    if (options.record_objective) {
      const double value = group_quad_objective(problem, result.beta);
      if (value > previous + 1e-12 * std::max(1.0, std::abs(previous)))
        throw NumericalError("group_lasso_quad: objective increased (H not PSD?)");
      result.objective_trace.push_back(value);
      previous = value;
    }
    if (change < options.tol) {
      converged = true;
      break;
    }
  }
  result.kkt_residual = group_quad_kkt_residual(problem, result.beta);
  if (!converged)
    throw ConvergenceError("group_lasso_quad: block coordinate descent did not converge",
                           result.kkt_residual);
  return result;
}

}  // namespace dsilt
