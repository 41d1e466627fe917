#include "dsilt/inference.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include <boost/math/special_functions/erf.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "dsilt/errors.hpp"
#include "dsilt/kernels.hpp"

namespace dsilt {

double normal_survival(double t) {
  if (std::isnan(t)) throw DomainError("normal_survival: NaN argument");
  return 0.5 * std::erfc(t / std::numbers::sqrt2);
}

double normal_survival_inverse(double prob) {
  if (!(prob > 0.0 && prob < 1.0)) throw DomainError("normal_survival_inverse: prob outside (0, 1)");
  return std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * prob);
}

double chi2_survival(double x, int df) {
  if (df < 1) throw DomainError("chi2_survival: df must be positive");
  if (!(x >= 0.0)) throw DomainError("chi2_survival: argument must be a non-negative number");
  if (std::isinf(x)) return 0.0;
  return boost::math::gamma_q(0.5 * df, 0.5 * x);
}

NormalScore normal_quantile_transform(double zeta, int df) {
  const double half_tail = 0.5 * chi2_survival(zeta, df);
  if (half_tail < kSaturationProb) return {normal_survival_inverse(kSaturationProb), true};
  if (half_tail >= 0.5) return {0.0, false};
  return {normal_survival_inverse(half_tail), false};
}

DebiasBatch debias_batch(std::span<const CoefficientBlock> beta_tilde,
                         const std::vector<std::vector<Round2Summary>>& round2,
                         std::span<const int> targets,
                         const std::vector<std::vector<MatrixXd>>& u) {
  const int K = static_cast<int>(beta_tilde.size());
  if (K == 0) throw InputError("debias: no folds");
  const Eigen::Index M = beta_tilde.front().M();
  const Eigen::Index p = beta_tilde.front().p();
  const auto T = static_cast<Eigen::Index>(targets.size());
  if (static_cast<int>(round2.size()) != K || static_cast<int>(u.size()) != K)
    throw InputError("debias: fold count mismatch");

  DebiasBatch out;
  out.targets.assign(targets.begin(), targets.end());
  out.beta_breve = MatrixXd::Zero(T, M);
  out.beta_null = MatrixXd::Zero(T, M);
  out.sigma_sq = MatrixXd::Zero(T, M);
  for (int k = 0; k < K; ++k) {
    if (beta_tilde[k].M() != M || beta_tilde[k].p() != p ||
        static_cast<Eigen::Index>(round2[k].size()) != M ||
        static_cast<Eigen::Index>(u[k].size()) != M)
      throw InputError("debias: study count mismatch in fold " + std::to_string(k));
    const double sign = (k + 1) > K / 2 ? -1.0 : 1.0;
    for (Eigen::Index m = 0; m < M; ++m) {
      const Round2Summary& r2 = round2[k][m];
      const MatrixXd& U = u[k][m];
      if (U.rows() != p || U.cols() != T || r2.xi_tilde.size() != p)
        throw InputError("debias: direction or summary dimension mismatch");
      const VectorXd b = beta_tilde[k].study(m);
      const VectorXd resid = r2.xi_tilde - r2.H_tilde * b;
      const VectorXd shift = U.transpose() * resid;
      const VectorXd quad = column_quad_forms(U, r2.J_tilde);
      for (Eigen::Index t = 0; t < T; ++t) {
        const int j = targets[t];
        if (j < 0 || j >= p) throw InputError("debias: target out of range");
        const double corr = b[j] + shift[t];
        out.beta_breve(t, m) += corr;
        out.beta_null(t, m) += sign * corr;
        out.sigma_sq(t, m) += quad[t];
      }
    }
  }
  out.beta_breve /= K;
  out.beta_null /= K;
  out.sigma_sq /= K;
  return out;
}

DebiasedEstimate debias(std::span<const CoefficientBlock> beta_tilde,
                        const std::vector<std::vector<Round2Summary>>& round2, int j, double tau,
                        const DantzigOptions& options) {
  const int K = static_cast<int>(beta_tilde.size());
  if (K == 0 || static_cast<int>(round2.size()) != K) throw InputError("debias: fold count mismatch");
  DebiasedEstimate est;
  est.j = j;
  std::vector<std::vector<MatrixXd>> U(K);
  for (int k = 0; k < K; ++k) {
    DantzigProblem problem;
    problem.target_index = j;
    problem.tau = tau;
    for (const Round2Summary& r2 : round2[k]) problem.H_blocks.push_back(r2.H_tilde);
    std::vector<VectorXd> u = group_dantzig(problem, options);
    for (const VectorXd& um : u) U[k].push_back(um);
    est.u_hats.push_back(std::move(u));
  }
  const int targets[1] = {j};
  const DebiasBatch batch = debias_batch(beta_tilde, round2, targets, U);
  est.beta_breve = batch.beta_breve.row(0).transpose();
  est.sigma_sq = batch.sigma_sq.row(0).transpose();
  if (!(est.sigma_sq.minCoeff() > 0.0))
    throw NumericalError("debias: non-positive variance estimate for target " + std::to_string(j));
  return est;
}

double group_zeta(const Eigen::Ref<const VectorXd>& beta, const Eigen::Ref<const VectorXd>& sigma_sq,
                  std::span<const std::int64_t> n_per_study) {
  if (beta.size() != sigma_sq.size() || static_cast<std::size_t>(beta.size()) != n_per_study.size())
    throw InputError("group_zeta: study count mismatch");
  double zeta = 0.0;
  for (Eigen::Index m = 0; m < beta.size(); ++m)
    zeta += static_cast<double>(n_per_study[m]) * beta[m] * beta[m] / sigma_sq[m];
  return zeta;
}

GroupTestResult group_statistic(const DebiasedEstimate& est,
                                std::span<const std::int64_t> n_per_study) {
  GroupTestResult r;
  r.j = est.j;
  r.zeta = group_zeta(est.beta_breve, est.sigma_sq, n_per_study);
  const NormalScore s = normal_quantile_transform(r.zeta, static_cast<int>(est.beta_breve.size()));
  r.n_score = s.value;
  r.saturated = s.saturated;
  return r;
}

bool single_test_reject(double n_score, double alpha) {
  if (!(alpha > 0.0 && alpha < 2.0)) throw DomainError("single_test_reject: alpha outside (0, 2)");
  return n_score >= normal_survival_inverse(alpha / 2.0);
}

double t_q(std::size_t q) {
  if (q < 3) throw DomainError("t_q needs q >= 3");
  const double lq = std::log(static_cast<double>(q));
  return std::sqrt(2.0 * lq - 2.0 * std::log(lq));
}

TestingOutcome fdr_threshold(std::span<const double> scores, double alpha) {
  const std::size_t q = scores.size();
  const double cap = t_q(q);
  if (!(alpha > 0.0)) throw DomainError("fdr_threshold: alpha must be positive");
  std::vector<double> sorted(scores.begin(), scores.end());
  std::sort(sorted.begin(), sorted.end());

  std::vector<double> candidates{0.0, cap};
  for (double s : sorted)
    if (s >= 0.0 && s <= cap) candidates.push_back(s);
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

  TestingOutcome out;
  out.capped = true;
  out.threshold = std::sqrt(2.0 * std::log(static_cast<double>(q)));
  for (double t : candidates) {
    const auto below = std::lower_bound(sorted.begin(), sorted.end(), t) - sorted.begin();
    const double R = static_cast<double>(q - static_cast<std::size_t>(below));
    if (2.0 * static_cast<double>(q) * normal_survival(t) / std::max(R, 1.0) <= alpha) {
      out.threshold = t;
      out.capped = false;
      break;
    }
  }
  for (std::size_t i = 0; i < q; ++i)
    if (scores[i] >= out.threshold) out.rejected.push_back(static_cast<int>(i));
  return out;
}

ErrorMetrics fdp_fdr_metrics(std::span<const int> rejected, std::span<const int> truth_null,
                             std::span<const int> truth_alt) {
  std::vector<int> null(truth_null.begin(), truth_null.end());
  std::vector<int> alt(truth_alt.begin(), truth_alt.end());
  std::sort(null.begin(), null.end());
  std::sort(alt.begin(), alt.end());
  std::vector<int> both;
  std::set_intersection(null.begin(), null.end(), alt.begin(), alt.end(), std::back_inserter(both));
  if (!both.empty()) throw InputError("fdp_fdr_metrics: null and alternative sets overlap");

  std::size_t false_pos = 0;
  std::size_t true_pos = 0;
  for (int j : rejected) {
    if (std::binary_search(null.begin(), null.end(), j)) {
      ++false_pos;
    } else if (std::binary_search(alt.begin(), alt.end(), j)) {
      ++true_pos;
    } else {
      throw InputError("fdp_fdr_metrics: rejection " + std::to_string(j) + " is in neither set");
    }
  }
  ErrorMetrics m;
  m.fdp = static_cast<double>(false_pos) / static_cast<double>(std::max<std::size_t>(rejected.size(), 1));
  m.power = alt.empty() ? 0.0 : static_cast<double>(true_pos) / static_cast<double>(alt.size());
  return m;
}

}  // namespace dsilt
