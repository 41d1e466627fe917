// Group Dantzig selector via ADMM on the cone reformulation (cross-check path)
//
//   min_{u, v, z} max_m ||v^(m)||_1 + I{||z_r||_2 <= tau for all r}
//   s.t. u = v,  H u - z = e_j   (H block diagonal over studies)
//
// The u-update is a linear solve with (I + H^2), which is diagonal in the
// eigenbasis of each H^(m); the v-update is the prox of max_m ||.||_1 and
// the z-update projects each row r (across studies) onto an l2 ball.
// All targets j of a batch advance together so the per-iteration work is
// two matrix-matrix products per study.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "dsilt/errors.hpp"
#include "dsilt/solvers.hpp"

namespace dsilt {

DantzigFactor::DantzigFactor(std::vector<MatrixXd> H_blocks) : H_(std::move(H_blocks)) {
  if (H_.empty()) throw InputError("DantzigFactor: no H blocks");
  p_ = H_.front().rows();
  double top = 0.0;
  for (const MatrixXd& H : H_) {
    if (H.rows() != p_ || H.cols() != p_) throw InputError("DantzigFactor: dimension mismatch");
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(0.5 * (H + H.transpose()));
    if (eig.info() != Eigen::Success) throw NumericalError("DantzigFactor: eigensolver failed");
    VectorXd lam = eig.eigenvalues();
    const double scale = std::max(1.0, lam.cwiseAbs().maxCoeff());
    if (lam.minCoeff() < -1e-8 * scale)
      throw NumericalError("DantzigFactor: H block is not positive semidefinite");
    lam = lam.cwiseMax(0.0);
    top = std::max(top, lam.maxCoeff());
    Q_.push_back(eig.eigenvectors());
    lambda_.push_back(std::move(lam));
  }
  // Rescale the cone constraint so the largest curvature is one.
  scale_ = top > 0.0 ? 1.0 / top : 1.0;
}

MatrixXd DantzigFactor::apply(Eigen::Index m, const MatrixXd& A) const {
  MatrixXd coeffs = Q_[m].transpose() * A;
  coeffs.array().colwise() *= lambda_[m].array();
  return Q_[m] * coeffs;
}

namespace {

// prox of gamma * max_m ||x^(m)||_1 applied to the M columns of `x` (p x M).
// The result is soft(x^(m), kappa_m) with sum_m kappa_m = gamma and equal l1
// norms across the studies whose threshold is positive.
void prox_max_l1(Eigen::Ref<MatrixXd> x, double gamma, std::vector<std::vector<double>>& scratch) {
  const Eigen::Index p = x.rows();
  const Eigen::Index M = x.cols();
  double dual_norm = 0.0;
  for (Eigen::Index m = 0; m < M; ++m) dual_norm += x.col(m).lpNorm<Eigen::Infinity>();
  if (dual_norm <= gamma) {
    x.setZero();
    return;
  }
  // Sorted magnitudes and prefix sums per study.
  scratch.resize(2 * M);
  double t_hi = 0.0;
  for (Eigen::Index m = 0; m < M; ++m) {
    auto& mags = scratch[2 * m];
    auto& prefix = scratch[2 * m + 1];
    mags.resize(p);
    for (Eigen::Index i = 0; i < p; ++i) mags[i] = std::abs(x(i, m));
    std::sort(mags.begin(), mags.end(), std::greater<>());
    prefix.resize(p + 1);
    prefix[0] = 0.0;
    for (Eigen::Index i = 0; i < p; ++i) prefix[i + 1] = prefix[i] + mags[i];
    t_hi = std::max(t_hi, prefix[p]);
  }
  // Threshold that leaves l1 mass t in study m.
  auto threshold = [&](Eigen::Index m, double t) {
    const auto& mags = scratch[2 * m];
    const auto& prefix = scratch[2 * m + 1];
    if (prefix[p] <= t) return 0.0;
    // Largest k with prefix[k] - k * mags[k-1] <= t... search the segment
    // where kappa = (prefix[k] - t) / k lies in [mags[k], mags[k-1]].
    std::size_t lo = 1;
    std::size_t hi = static_cast<std::size_t>(p);
    while (lo < hi) {
      const std::size_t k = (lo + hi) / 2;
      const double next = k < static_cast<std::size_t>(p) ? mags[k] : 0.0;
      // l1 mass remaining at kappa = next using the top k entries.
      const double mass = prefix[k] - static_cast<double>(k) * next;
      if (mass >= t) hi = k; else lo = k + 1;
    }
    return std::max(0.0, (prefix[lo] - t) / static_cast<double>(lo));
  };
  auto total = [&](double t) {
    double s = 0.0;
    for (Eigen::Index m = 0; m < M; ++m) s += threshold(m, t);
    return s;
  };
  double lo = 0.0;
  double hi = t_hi;
  for (int it = 0; it < 100 && hi - lo > 1e-15 * std::max(1.0, hi); ++it) {
    const double mid = 0.5 * (lo + hi);
    if (total(mid) > gamma) lo = mid; else hi = mid;
  }
  const double t = 0.5 * (lo + hi);
  for (Eigen::Index m = 0; m < M; ++m) {
    const double kappa = threshold(m, t);
    for (Eigen::Index i = 0; i < p; ++i) {
      const double v = x(i, m);
      x(i, m) = v > kappa ? v - kappa : (v < -kappa ? v + kappa : 0.0);
    }
  }
}

}  // namespace

// With Lambda^(m) = -P_null^(m) e_j we have H Lambda = 0, so a positive dual
// value proves the cone constraints cannot be met.
bool dantzig_null_space_certificate(const DantzigFactor& factor, int target, double tau) {
  const Eigen::Index p = factor.p();
  const Eigen::Index M = factor.M();
  MatrixXd proj = MatrixXd::Zero(p, M);
  bool singular = false;
  for (Eigen::Index m = 0; m < M; ++m) {
    const VectorXd& lam = factor.eigenvalues(m);
    const double cutoff = 1e-10 * std::max(1.0, lam.maxCoeff());
    const MatrixXd& Q = factor.eigenvectors(m);
    for (Eigen::Index i = 0; i < p; ++i) {
      if (lam[i] > cutoff) continue;
      singular = true;
      proj.col(m) += Q.col(i) * Q(target, i);
    }
  }
  if (!singular) return false;
  double value = proj.row(target).sum();
  value -= tau * proj.rowwise().norm().sum();
  return value > 1e-9;
}

AdmmBatchResult group_dantzig_admm_batch(const DantzigFactor& factor,
                                         std::span<const int> targets, double tau,
                                         const AdmmOptions& options, AdmmWarmState* warm) {
  if (!(tau > 0.0)) throw InputError("group_dantzig: tau must be positive");
  const Eigen::Index p = factor.p();
  const Eigen::Index M = factor.M();
  const Eigen::Index n_targets = static_cast<Eigen::Index>(targets.size());
  for (int j : targets)
    if (j < 0 || j >= p) throw InputError("group_dantzig: target index out of range");

  const double s = factor.scale();
  const double radius = s * tau;
  const double alpha = options.relaxation;

  AdmmBatchResult result;
  result.targets.assign(targets.begin(), targets.end());
  result.u.assign(M, MatrixXd::Zero(p, n_targets));
  result.status.assign(n_targets, DantzigStatus::kMaxIter);
  result.iterations.assign(n_targets, 0);
  result.objective.assign(n_targets, std::numeric_limits<double>::quiet_NaN());
  result.violation.assign(n_targets, std::numeric_limits<double>::infinity());

  // Full-width state (scaled units: z and w2 live in the s * H space).
  std::vector<MatrixXd> V(M), Z(M), W1(M), W2(M);
  VectorXd rho = VectorXd::Constant(n_targets, options.rho);
  const bool warm_ok = warm != nullptr && !warm->empty() &&
                       static_cast<Eigen::Index>(warm->v.size()) == M &&
                       warm->v.front().cols() == n_targets;
  for (Eigen::Index m = 0; m < M; ++m) {
    if (warm_ok) {
      V[m] = warm->v[m];
      Z[m] = warm->z[m];
      W1[m] = warm->w1[m];
      W2[m] = warm->w2[m];
    } else {
      V[m] = MatrixXd::Zero(p, n_targets);
      Z[m] = MatrixXd::Zero(p, n_targets);
      W1[m] = MatrixXd::Zero(p, n_targets);
      W2[m] = MatrixXd::Zero(p, n_targets);
    }
  }
  if (warm_ok) rho = warm->rho;

  // Columns proven infeasible up front never enter the loop.
  std::vector<Eigen::Index> active;
  for (Eigen::Index c = 0; c < n_targets; ++c) {
    if (dantzig_null_space_certificate(factor, targets[c], tau)) {
      result.status[c] = DantzigStatus::kInfeasible;
    } else {
      active.push_back(c);
    }
  }

  std::vector<VectorXd> scaled_lambda(M), denom(M);
  for (Eigen::Index m = 0; m < M; ++m) {
    scaled_lambda[m] = s * factor.eigenvalues(m);
    denom[m] = (1.0 + scaled_lambda[m].array().square()).inverse().matrix();
  }

  std::vector<std::vector<double>> scratch;
  std::vector<MatrixXd> v, z, w1, w2, u, gu, w2_prev;
  VectorXd r_acc, s_acc;

  auto gather = [&](const std::vector<MatrixXd>& full, std::vector<MatrixXd>& part) {
    part.resize(M);
    for (Eigen::Index m = 0; m < M; ++m) {
      part[m].resize(p, static_cast<Eigen::Index>(active.size()));
      for (std::size_t a = 0; a < active.size(); ++a) part[m].col(a) = full[m].col(active[a]);
    }
  };
  auto scatter = [&](const std::vector<MatrixXd>& part, std::vector<MatrixXd>& full) {
    for (Eigen::Index m = 0; m < M; ++m)
      for (std::size_t a = 0; a < active.size(); ++a) full[m].col(active[a]) = part[m].col(a);
  };

  int iter = 0;
  while (!active.empty() && iter < options.max_iter) {
    gather(V, v);
    gather(Z, z);
    gather(W1, w1);
    gather(W2, w2);
    w2_prev = w2;
    const Eigen::Index na = static_cast<Eigen::Index>(active.size());
    VectorXd rho_a(na);
    for (Eigen::Index a = 0; a < na; ++a) rho_a[a] = rho[active[a]];

    MatrixXd stacked(p, 2 * na), coeffs, back;
    u.resize(M);
    gu.resize(M);
    for (int inner = 0; inner < options.check_every && iter < options.max_iter; ++inner, ++iter) {
      r_acc = VectorXd::Zero(na);
      s_acc = VectorXd::Zero(na);
      for (Eigen::Index m = 0; m < M; ++m) {
        const MatrixXd& Q = factor.eigenvectors(m);
        stacked.leftCols(na) = v[m] - w1[m];
        stacked.rightCols(na) = z[m] - w2[m];
        for (Eigen::Index a = 0; a < na; ++a) stacked(targets[active[a]], na + a) += s;
        coeffs.noalias() = Q.transpose() * stacked;
        MatrixXd y = (coeffs.leftCols(na).array() +
                      coeffs.rightCols(na).array().colwise() * scaled_lambda[m].array())
                         .colwise() *
                     denom[m].array();
        stacked.leftCols(na) = y;
        stacked.rightCols(na) = y.array().colwise() * scaled_lambda[m].array();
        back.noalias() = Q * stacked;
        u[m] = back.leftCols(na);
        gu[m] = back.rightCols(na);
      }
      // v-update (couples studies through the max) and z-update (row balls).
      MatrixXd xcol(p, M);
      for (Eigen::Index a = 0; a < na; ++a) {
        const int j = targets[active[a]];
        for (Eigen::Index m = 0; m < M; ++m)
          xcol.col(m) = alpha * u[m].col(a) + (1.0 - alpha) * v[m].col(a) + w1[m].col(a);
        MatrixXd vnew = xcol;
        prox_max_l1(vnew, 1.0 / rho_a[a], scratch);
        double dv = 0.0;
        double r1 = 0.0;
        for (Eigen::Index m = 0; m < M; ++m) {
          w1[m].col(a) = xcol.col(m) - vnew.col(m);
          dv += (vnew.col(m) - v[m].col(a)).squaredNorm();
          r1 += (u[m].col(a) - vnew.col(m)).squaredNorm();
          v[m].col(a) = vnew.col(m);
        }
        double dz = 0.0;
        double r2 = 0.0;
        for (Eigen::Index r = 0; r < p; ++r) {
          double norm_sq = 0.0;
          for (Eigen::Index m = 0; m < M; ++m) {
            const double e = r == j ? s : 0.0;
            const double relaxed = alpha * gu[m](r, a) + (1.0 - alpha) * (z[m](r, a) + e);
            xcol(r, m) = relaxed - e + w2[m](r, a);
            norm_sq += xcol(r, m) * xcol(r, m);
          }
          const double norm = std::sqrt(norm_sq);
          const double shrink = norm > radius ? radius / norm : 1.0;
          for (Eigen::Index m = 0; m < M; ++m) {
            const double e = r == j ? s : 0.0;
            const double znew = xcol(r, m) * shrink;
            w2[m](r, a) = xcol(r, m) - znew;
            dz += (znew - z[m](r, a)) * (znew - z[m](r, a));
            const double res = gu[m](r, a) - znew - e;
            r2 += res * res;
            z[m](r, a) = znew;
          }
        }
        r_acc[a] = std::sqrt(r1 + r2);
        s_acc[a] = rho_a[a] * std::sqrt(dv + dz);
      }
    }

    // Convergence / infeasibility check on the sparse iterate v.
    std::vector<MatrixXd> gv(M), gw(M), gw_prev(M);
    for (Eigen::Index m = 0; m < M; ++m) {
      const MatrixXd& Q = factor.eigenvectors(m);
      MatrixXd both(p, 3 * na);
      both.leftCols(na) = v[m];
      both.middleCols(na, na) = w2[m];
      both.rightCols(na) = w2_prev[m];
      MatrixXd c = Q.transpose() * both;
      c.array().colwise() *= scaled_lambda[m].array();
      MatrixXd back_all = Q * c;
      gv[m] = back_all.leftCols(na);
      gw[m] = back_all.middleCols(na, na);
      gw_prev[m] = back_all.rightCols(na);
    }

    std::vector<Eigen::Index> still_active;
    for (Eigen::Index a = 0; a < na; ++a) {
      const Eigen::Index c = active[a];
      const int j = targets[c];
      result.iterations[c] = iter;
      // Primal feasibility and objective in original units.
      double worst_row = 0.0;
      double objective = 0.0;
      for (Eigen::Index m = 0; m < M; ++m) objective = std::max(objective, v[m].col(a).lpNorm<1>());
      for (Eigen::Index r = 0; r < p; ++r) {
        double sq = 0.0;
        for (Eigen::Index m = 0; m < M; ++m) {
          const double g = gv[m](r, a) / s - (r == j ? 1.0 : 0.0);
          sq += g * g;
        }
        worst_row = std::max(worst_row, sq);
      }
      const double violation = std::sqrt(worst_row) - tau;

      // Dual bound from y2 = rho * w2: D = -s sum_m y_{m,j} - s tau sum_r ||y_r||,
      // feasible after scaling so that sum_m ||(G y)_m||_inf <= 1.
      auto dual_value = [&](const std::vector<MatrixXd>& w, const std::vector<MatrixXd>& gw_,
                            double coef, const std::vector<MatrixXd>* minus,
                            const std::vector<MatrixXd>* gminus, double& cone_norm) {
        double lin = 0.0;
        double rows = 0.0;
        cone_norm = 0.0;
        for (Eigen::Index m = 0; m < M; ++m) {
          VectorXd col = w[m].col(a);
          VectorXd gcol = gw_[m].col(a);
          if (minus != nullptr) {
            col -= (*minus)[m].col(a);
            gcol -= (*gminus)[m].col(a);
          }
          lin += coef * col[j];
          cone_norm += coef * gcol.lpNorm<Eigen::Infinity>();
        }
        for (Eigen::Index r = 0; r < p; ++r) {
          double sq = 0.0;
          for (Eigen::Index m = 0; m < M; ++m) {
            double val = w[m](r, a);
            if (minus != nullptr) val -= (*minus)[m](r, a);
            sq += val * val;
          }
          rows += coef * std::sqrt(sq);
        }
        return -s * lin - s * tau * rows;
      };
      double cone = 0.0;
      const double dual = dual_value(w2, gw, rho_a[a], nullptr, nullptr, cone);
      const double lower = std::max(0.0, dual / std::max(1.0, cone));
      const double gap = objective - lower;

      double ray_cone = 0.0;
      const double ray = dual_value(w2, gw, 1.0, &w2_prev, &gw_prev, ray_cone);

      if (violation <= options.feas_tol && gap <= options.obj_tol * std::max(1.0, objective)) {
        result.status[c] = DantzigStatus::kSolved;
        result.objective[c] = objective;
        result.violation[c] = violation;
        for (Eigen::Index m = 0; m < M; ++m) result.u[m].col(c) = v[m].col(a);
      } else if (ray > 0.0 && ray > 1e8 * ray_cone) {
        result.status[c] = DantzigStatus::kInfeasible;
        result.violation[c] = violation;
      } else {
        result.objective[c] = objective;
        result.violation[c] = violation;
        for (Eigen::Index m = 0; m < M; ++m) result.u[m].col(c) = v[m].col(a);
        still_active.push_back(a);
      }

      if (options.adaptive_rho) {
        const double rp = r_acc[a];
        const double sd = s_acc[a];
        double factor_rho = 1.0;
        if (rp > 10.0 * sd) factor_rho = 2.0;
        else if (sd > 10.0 * rp) factor_rho = 0.5;
        if (factor_rho != 1.0) {
          rho_a[a] *= factor_rho;
          for (Eigen::Index m = 0; m < M; ++m) {
            w1[m].col(a) /= factor_rho;
            w2[m].col(a) /= factor_rho;
          }
        }
      }
    }
    for (Eigen::Index a = 0; a < na; ++a) rho[active[a]] = rho_a[a];
    scatter(v, V);
    scatter(z, Z);
    scatter(w1, W1);
    scatter(w2, W2);
    std::vector<Eigen::Index> next;
    for (Eigen::Index a : still_active) next.push_back(active[a]);
    active = std::move(next);
  }

  if (warm != nullptr) {
    warm->v = std::move(V);
    warm->z = std::move(Z);
    warm->w1 = std::move(W1);
    warm->w2 = std::move(W2);
    warm->rho = rho;
  }
  return result;
}

std::vector<VectorXd> group_dantzig_admm(const DantzigProblem& problem, const AdmmOptions& options) {
  const DantzigFactor factor(problem.H_blocks);
  const int target = problem.target_index;
  const AdmmBatchResult batch =
      group_dantzig_admm_batch(factor, std::span<const int>(&target, 1), problem.tau, options);
  if (batch.status[0] == DantzigStatus::kInfeasible) throw InfeasibleTauError(problem.tau, target);
  if (batch.status[0] == DantzigStatus::kMaxIter) {
    // Residuals that stall well above tolerance indicate an empty feasible set.
    if (batch.violation[0] > 1e-3 * std::max(1.0, problem.tau))
      throw InfeasibleTauError(problem.tau, target);
    throw ConvergenceError("group_dantzig: ADMM did not converge", batch.violation[0]);
  }
  std::vector<VectorXd> u;
  for (Eigen::Index m = 0; m < factor.M(); ++m) u.push_back(batch.u[m].col(0));
  return u;
}

}  // namespace dsilt
