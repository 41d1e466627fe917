#pragma once

#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "dsilt/glm.hpp"

namespace dsilt {

// ---------------------------------------------------------------------------
// Stacked per-study coefficients: a p x M matrix whose column m is beta^(m)
// and whose row j is the covariate group beta_j.
class CoefficientBlock {
 public:
  CoefficientBlock() = default;
  CoefficientBlock(Eigen::Index p, Eigen::Index M) : beta_(MatrixXd::Zero(p, M)) {}
  explicit CoefficientBlock(MatrixXd beta) : beta_(std::move(beta)) {}

  Eigen::Index p() const { return beta_.rows(); }
  Eigen::Index M() const { return beta_.cols(); }

  auto study(Eigen::Index m) { return beta_.col(m); }
  auto study(Eigen::Index m) const { return beta_.col(m); }
  auto group(Eigen::Index j) { return beta_.row(j); }
  auto group(Eigen::Index j) const { return beta_.row(j); }

  const MatrixXd& matrix() const { return beta_; }
  MatrixXd& matrix() { return beta_; }

  friend bool operator==(const CoefficientBlock& a, const CoefficientBlock& b) {
    return a.beta_.rows() == b.beta_.rows() && a.beta_.cols() == b.beta_.cols() &&
           a.beta_ == b.beta_;
  }

 private:
  MatrixXd beta_;
};

// ---------------------------------------------------------------------------
// l1-penalised GLM (intercept unpenalised), coordinate descent with a
// proximal-Newton outer loop for the logistic family.
struct LassoSpec {
  Family family = Family::kLogistic;
  double lambda = 0.0;
  int max_iter = 2000;
  double tol = 1e-9;       // sup-norm of the coefficient change
  double kkt_tol = 1e-6;   // reported KKT residual must not exceed this
};

struct LassoFit {
  VectorXd beta;
  int iterations = 0;
  double kkt_residual = 0.0;
};

// X holds the rows of the subset (contiguous); y the matching responses.
LassoFit lasso_fit(const MatrixXd& X, const VectorXd& y, const LassoSpec& spec,
                   const VectorXd* warm_start = nullptr);

// Sup-norm violation of the subgradient optimality conditions.
double lasso_kkt_residual(const MatrixXd& X, const VectorXd& y, Family family, double lambda,
                          const VectorXd& beta);

// (1 - kappa / ||v||_2)_+ v.
VectorXd block_soft_threshold(const VectorXd& v, double kappa);

// ---------------------------------------------------------------------------
// sum_m w_m (b_m' H_m b_m - 2 b_m' xi_m) + lambda sum_{j >= 1} ||b_j||_2
struct GroupQuadProblem {
  std::vector<MatrixXd> H_blocks;
  std::vector<VectorXd> xi_blocks;
  std::vector<double> weights;
  double lambda = 0.0;
  bool penalize_first = false;

  Eigen::Index p() const { return H_blocks.empty() ? 0 : H_blocks.front().rows(); }
  Eigen::Index M() const { return static_cast<Eigen::Index>(H_blocks.size()); }
  void validate() const;
};

struct GroupLassoOptions {
  int max_iter = 5000;     // sweeps
  double tol = 1e-10;      // sup-norm of coefficient change over a sweep
  bool record_objective = false;
};

struct GroupLassoResult {
  CoefficientBlock beta;
  int sweeps = 0;
  double kkt_residual = 0.0;
  std::vector<double> objective_trace;  // one entry per sweep when recorded
};

double group_quad_objective(const GroupQuadProblem& problem, const CoefficientBlock& beta);
double group_quad_kkt_residual(const GroupQuadProblem& problem, const CoefficientBlock& beta);

GroupLassoResult group_lasso_quad(const GroupQuadProblem& problem,
                                  const GroupLassoOptions& options = {},
                                  const CoefficientBlock* warm_start = nullptr);

// ---------------------------------------------------------------------------
// min_u max_m ||u^(m)||_1
//   s.t. sqrt(sum_m (H^(m)_r u^(m) - 1{r = j})^2) <= tau for every row r.
struct DantzigProblem {
  std::vector<MatrixXd> H_blocks;
  int target_index = 0;
  double tau = 0.0;
};

// kBudget: the working set outgrew DantzigOptions::max_columns.
enum class DantzigStatus { kSolved, kInfeasible, kMaxIter, kBudget };

struct DantzigOptions {
  double feas_tol = 1e-6;       // max_r ||(H u - e_j)_r||_2 - tau on return
  double obj_tol = 1e-6;        // relative gap of the restricted cone program
  int max_outer = 60;           // column / row generation rounds
  int max_ipm_iter = 100;       // interior-point iterations per round
  double penalty_start = 1e3;   // elastic penalty on row slack
  double penalty_max = 1e8;
  int max_columns = 0;          // working-set budget; 0 means unbounded
};

// Columns (shared across studies) and rows carried over between
// consecutive tau values of the same target.
struct DantzigActiveSet {
  std::vector<int> columns;
  std::vector<int> rows;
};

struct DantzigSolution {
  DantzigStatus status = DantzigStatus::kMaxIter;
  std::vector<VectorXd> u;  // one p-vector per study
  double objective = 0.0;
  double violation = 0.0;   // max_r row norm - tau
  int rounds = 0;
  int ipm_iterations = 0;
};

// Exact solve: interior-point method on a restricted cone program over a
// working set of columns and rows, grown until the full KKT conditions hold.
DantzigSolution group_dantzig_solve(const std::vector<MatrixXd>& H_blocks, int target, double tau,
                                    const DantzigOptions& options = {},
                                    DantzigActiveSet* working_set = nullptr);

// Single problem. Throws InfeasibleTauError / ConvergenceError.
std::vector<VectorXd> group_dantzig(const DantzigProblem& problem,
                                    const DantzigOptions& options = {});

// Solutions for many targets at one tau; independent targets run on separate
// OpenMP threads. u[m] is p x targets.
struct DantzigBatchResult {
  std::vector<int> targets;
  std::vector<MatrixXd> u;
  std::vector<DantzigStatus> status;
  std::vector<double> objective;
  std::vector<double> violation;
};

DantzigBatchResult group_dantzig_batch(const std::vector<MatrixXd>& H_blocks,
                                       std::span<const int> targets, double tau,
                                       const DantzigOptions& options = {},
                                       std::vector<DantzigActiveSet>* working_sets = nullptr);

// max_r ||(H u - e_j)_r||_2 for a candidate solution.
double dantzig_constraint_norm(const std::vector<MatrixXd>& H_blocks, int target,
                               const std::vector<VectorXd>& u);

// ---------------------------------------------------------------------------
// First-order alternative: ADMM on the cone reformulation. Slower than the
// interior-point path but independent of it; used to cross-check.
struct AdmmOptions {
  double rho = 1.0;
  double feas_tol = 1e-6;
  double obj_tol = 1e-6;
  int max_iter = 5000;
  double relaxation = 1.6;  // over-relaxation factor in (0, 2)
  bool adaptive_rho = true;
  int check_every = 10;
};

// Per-study eigendecompositions of the H blocks, shared by every target j and
// every tau solved against the same blocks.
class DantzigFactor {
 public:
  explicit DantzigFactor(std::vector<MatrixXd> H_blocks);

  Eigen::Index p() const { return p_; }
  Eigen::Index M() const { return static_cast<Eigen::Index>(H_.size()); }
  const MatrixXd& H(Eigen::Index m) const { return H_[m]; }
  const MatrixXd& eigenvectors(Eigen::Index m) const { return Q_[m]; }
  const VectorXd& eigenvalues(Eigen::Index m) const { return lambda_[m]; }
  // 1 / largest eigenvalue over all blocks (1 when every block is zero).
  double scale() const { return scale_; }

  // H^(m) * A via the eigendecomposition.
  MatrixXd apply(Eigen::Index m, const MatrixXd& A) const;

 private:
  Eigen::Index p_ = 0;
  std::vector<MatrixXd> H_;
  std::vector<MatrixXd> Q_;
  std::vector<VectorXd> lambda_;
  double scale_ = 1.0;
};

// True when the projection of e_j onto the joint null space proves the
// problem infeasible at this tau (Farkas certificate).
bool dantzig_null_space_certificate(const DantzigFactor& factor, int target, double tau);

struct AdmmBatchResult {
  std::vector<int> targets;
  std::vector<MatrixXd> u;
  std::vector<DantzigStatus> status;
  std::vector<int> iterations;
  std::vector<double> objective;
  std::vector<double> violation;
};

struct AdmmWarmState {
  std::vector<MatrixXd> v, z, w1, w2;  // per study, p x targets
  VectorXd rho;                        // per target
  bool empty() const { return v.empty(); }
};

AdmmBatchResult group_dantzig_admm_batch(const DantzigFactor& factor,
                                         std::span<const int> targets, double tau,
                                         const AdmmOptions& options = {},
                                         AdmmWarmState* warm = nullptr);

std::vector<VectorXd> group_dantzig_admm(const DantzigProblem& problem,
                                         const AdmmOptions& options = {});

}  // namespace dsilt
