#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dsilt/payloads.hpp"
#include "dsilt/solvers.hpp"

namespace dsilt {

// ---------------------------------------------------------------------------
// Distributions.

// Phibar(t) = 1 - Phi(t).
double normal_survival(double t);
// Phibar^{-1}(prob) for prob in (0, 1).
double normal_survival_inverse(double prob);
// Survival of chi-square with df degrees of freedom: Q(df/2, x/2).
double chi2_survival(double x, int df);

// N = Phibar^{-1}(Fbar_{chi2_df}(zeta) / 2). When Fbar/2 is below
// kSaturationProb the score is clamped to Phibar^{-1}(kSaturationProb) and
// flagged; callers that need to order saturated scores use zeta.
inline constexpr double kSaturationProb = 1e-300;
struct NormalScore {
  double value = 0.0;
  bool saturated = false;
};
NormalScore normal_quantile_transform(double zeta, int df);

// ---------------------------------------------------------------------------
// Debiasing.

// Debiased estimates for a batch of targets from precomputed directions.
// Per fold k and study m: corr = beta_tilde_j + u' (xi - H beta_tilde).
//   beta_breve = K^{-1} sum_k corr
//   beta_null  = K^{-1} sum_k (-1)^{1{k > K/2}} corr   (k counted from 1)
//   sigma_sq   = K^{-1} sum_k u' J u
// All three are (targets x M).
struct DebiasBatch {
  std::vector<int> targets;
  MatrixXd beta_breve;
  MatrixXd beta_null;
  MatrixXd sigma_sq;
};

// u[k][m] is p x targets. round2 is indexed [k][m].
DebiasBatch debias_batch(std::span<const CoefficientBlock> beta_tilde,
                         const std::vector<std::vector<Round2Summary>>& round2,
                         std::span<const int> targets,
                         const std::vector<std::vector<MatrixXd>>& u);

struct DebiasedEstimate {
  int j = 0;
  VectorXd beta_breve;  // M
  VectorXd sigma_sq;    // M, strictly positive
  std::vector<std::vector<VectorXd>> u_hats;  // [k][m]
};

// Single target: solves the group Dantzig program on every fold, then
// applies the batch formulas. Throws InfeasibleTauError / ConvergenceError
// from the solver and NumericalError if a variance is not positive.
DebiasedEstimate debias(std::span<const CoefficientBlock> beta_tilde,
                        const std::vector<std::vector<Round2Summary>>& round2, int j, double tau,
                        const DantzigOptions& options = {});

// Sum over studies of n_m (beta / sigma)^2 for one row of a batch.
double group_zeta(const Eigen::Ref<const VectorXd>& beta, const Eigen::Ref<const VectorXd>& sigma_sq,
                  std::span<const std::int64_t> n_per_study);

// ---------------------------------------------------------------------------
// Testing.

struct GroupTestResult {
  int j = 0;
  double zeta = 0.0;
  double n_score = 0.0;
  bool saturated = false;
};

GroupTestResult group_statistic(const DebiasedEstimate& est,
                                std::span<const std::int64_t> n_per_study);

// Single-hypothesis rule: reject when N >= Phibar^{-1}(alpha / 2).
bool single_test_reject(double n_score, double alpha);

// sqrt(2 log q - 2 log log q); q >= 3.
double t_q(std::size_t q);

struct TestingOutcome {
  double threshold = 0.0;
  std::vector<int> rejected;  // positions in the score list, ascending
  bool capped = false;        // fallback sqrt(2 log q) used
};

// t = inf{0 <= t <= t_q : 2 q Phibar(t) / max(R(t), 1) <= alpha}, searched
// over {0} U {scores <= t_q} U {t_q}. Between consecutive candidates R(t)
// is constant and Phibar decreasing, so the first feasible candidate gives
// the same rejection set as the exact infimum. Throws DomainError if q < 3.
TestingOutcome fdr_threshold(std::span<const double> scores, double alpha);

struct ErrorMetrics {
  double fdp = 0.0;
  double power = 0.0;
};

// FDP = |rejected & null| / max(|rejected|, 1); power = |rejected & alt| /
// |alt| (0 when alt is empty). Throws InputError if the truth sets overlap
// or a rejection is in neither.
ErrorMetrics fdp_fdr_metrics(std::span<const int> rejected, std::span<const int> truth_null,
                             std::span<const int> truth_alt);

}  // namespace dsilt
