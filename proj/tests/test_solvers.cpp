#include <gtest/gtest.h>

#include <omp.h>

#include <cmath>
#include <random>

#include "dsilt/errors.hpp"
#include "dsilt/kernels.hpp"
#include "dsilt/solvers.hpp"
#include "oracles.hpp"

using namespace dsilt;

namespace {

MatrixXd random_design(std::mt19937_64& gen, int n, int p) {
  std::normal_distribution<double> z;
  MatrixXd X(n, p);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = 1.0;
    for (int j = 1; j < p; ++j) X(i, j) = z(gen);
  }
  return X;
}

MatrixXd random_psd(std::mt19937_64& gen, int p, double ridge) {
  std::normal_distribution<double> z;
  MatrixXd A(p, p + 2);
  for (int i = 0; i < A.rows(); ++i)
    for (int j = 0; j < A.cols(); ++j) A(i, j) = z(gen);
  return A * A.transpose() / (p + 2) + ridge * MatrixXd::Identity(p, p);
}

double l1_max(const std::vector<VectorXd>& u) {
  double v = 0.0;
  for (const auto& x : u) v = std::max(v, x.lpNorm<1>());
  return v;
}

}  // namespace

// ---------------------------------------------------------------------------
TEST(Lasso, IdentityGramSoftThreshold) {
  MatrixXd X(4, 3);
  X << 1, 1, 1,
       1, 1, -1,
       1, -1, 1,
       1, -1, -1;
  const VectorXd y = 0.9 * X.col(1) + 0.3 * X.col(2);
  LassoSpec spec;
  spec.family = Family::kGaussian;
  spec.lambda = 0.5;
  const LassoFit fit = lasso_fit(X, y, spec);
  EXPECT_NEAR(fit.beta[0], 0.0, 1e-10);
  EXPECT_NEAR(fit.beta[1], 0.4, 1e-10);
  EXPECT_NEAR(fit.beta[2], 0.0, 1e-10);
  EXPECT_LE(fit.kkt_residual, 1e-6);
}

TEST(Lasso, ZeroPenaltyIsLeastSquares) {
  std::mt19937_64 gen(11);
  const MatrixXd X = random_design(gen, 80, 4);
  std::normal_distribution<double> z;
  VectorXd y(80);
  for (int i = 0; i < 80; ++i) y[i] = X(i, 1) - 0.5 * X(i, 3) + z(gen);
  LassoSpec spec;
  spec.family = Family::kGaussian;
  spec.lambda = 0.0;
  const VectorXd ols = X.colPivHouseholderQr().solve(y);
  EXPECT_LE((lasso_fit(X, y, spec).beta - ols).lpNorm<Eigen::Infinity>(), 1e-6);
}

TEST(Lasso, LogisticMatchesProximalGradientOracle) {
  std::mt19937_64 gen(2024);
  const MatrixXd X = random_design(gen, 50, 5);
  std::uniform_real_distribution<double> u;
  VectorXd y(50);
  for (int i = 0; i < 50; ++i) y[i] = u(gen) < oracle::expit(0.3 + X(i, 1) - X(i, 2)) ? 1.0 : 0.0;
  LassoSpec spec;
  spec.lambda = 0.1;
  const VectorXd ref = oracle::lasso_prox_grad(X, y, true, 0.1);
  const LassoFit fit = lasso_fit(X, y, spec);
  EXPECT_LE((fit.beta - ref).lpNorm<Eigen::Infinity>(), 1e-5);
  EXPECT_LE(lasso_kkt_residual(X, y, Family::kLogistic, 0.1, fit.beta), 1e-6);
}

TEST(Lasso, WarmStartReachesSameSolution) {
  std::mt19937_64 gen(5);
  const MatrixXd X = random_design(gen, 60, 6);
  std::normal_distribution<double> z;
  VectorXd y(60);
  for (int i = 0; i < 60; ++i) y[i] = 2.0 * X(i, 1) + z(gen);
  LassoSpec spec;
  spec.family = Family::kGaussian;
  spec.lambda = 0.2;
  const VectorXd start = VectorXd::Constant(6, 3.0);
  const VectorXd a = lasso_fit(X, y, spec).beta, b = lasso_fit(X, y, spec, &start).beta;
  EXPECT_LE((a - b).lpNorm<Eigen::Infinity>(), 1e-7);
}

// ---------------------------------------------------------------------------
TEST(BlockSoftThreshold, Examples) {
  VectorXd v(2);
  v << 3, 4;
  const VectorXd r = block_soft_threshold(v, 1.0);
  EXPECT_NEAR(r[0], 2.4, 1e-15);
  EXPECT_NEAR(r[1], 3.2, 1e-15);
  v << 1, 0;
  EXPECT_EQ(block_soft_threshold(v, 2.0), VectorXd::Zero(2));
  EXPECT_EQ(block_soft_threshold(VectorXd::Zero(3), 0.7), VectorXd::Zero(3));
}

// ---------------------------------------------------------------------------
TEST(GroupLasso, IdentityBlocksShrinkGroup) {
  GroupQuadProblem pr;
  pr.H_blocks = {MatrixXd::Identity(2, 2), MatrixXd::Identity(2, 2)};
  VectorXd x1(2), x2(2);
  x1 << 0.0, 3.0;
  x2 << 0.0, 4.0;
  pr.xi_blocks = {x1, x2};
  pr.weights = {0.5, 0.5};
  pr.lambda = 1.0;
  const GroupLassoResult r = group_lasso_quad(pr);
  EXPECT_NEAR(r.beta.matrix()(1, 0), 2.4, 1e-9);
  EXPECT_NEAR(r.beta.matrix()(1, 1), 3.2, 1e-9);
}

TEST(GroupLasso, ZeroPenaltyDecouplesStudies) {
  std::mt19937_64 gen(3);
  GroupQuadProblem pr;
  std::normal_distribution<double> z;
  for (int m = 0; m < 3; ++m) {
    pr.H_blocks.push_back(random_psd(gen, 4, 0.2));
    VectorXd xi(4);
    for (int j = 0; j < 4; ++j) xi[j] = z(gen);
    pr.xi_blocks.push_back(xi);
    pr.weights.push_back(1.0 / 3.0);
  }
  const GroupLassoResult r = group_lasso_quad(pr);
  for (int m = 0; m < 3; ++m) {
    const VectorXd ref = pr.H_blocks[m].ldlt().solve(pr.xi_blocks[m]);
    EXPECT_LE((r.beta.study(m) - ref).lpNorm<Eigen::Infinity>(), 1e-6);
  }
}

TEST(GroupLasso, MatchesProximalGradientOracle) {
  std::mt19937_64 gen(17);
  std::normal_distribution<double> z;
  GroupQuadProblem pr;
  oracle::GroupQuad g;
  for (int m = 0; m < 2; ++m) {
    const MatrixXd H = random_psd(gen, 3, 0.05);
    VectorXd xi(3);
    for (int j = 0; j < 3; ++j) xi[j] = z(gen);
    pr.H_blocks.push_back(H);
    pr.xi_blocks.push_back(xi);
    pr.weights.push_back(0.5);
    g.H.push_back(H);
    g.xi.push_back(xi);
    g.w.push_back(0.5);
  }
  pr.lambda = g.lambda = 0.3;
  const GroupLassoResult r = group_lasso_quad(pr);
  const double ref = oracle::group_objective(g, oracle::group_prox_grad(g));
  EXPECT_NEAR(oracle::group_objective(g, r.beta.matrix()), ref, 1e-5);
  EXPECT_NEAR(group_quad_objective(pr, r.beta), oracle::group_objective(g, r.beta.matrix()), 1e-12);
  EXPECT_LE(r.kkt_residual, 1e-6);
}

TEST(GroupLasso, ObjectiveTraceIsMonotone) {
  std::mt19937_64 gen(8);
  std::normal_distribution<double> z;
  GroupQuadProblem pr;
  for (int m = 0; m < 3; ++m) {
    pr.H_blocks.push_back(random_psd(gen, 6, 0.01));
    VectorXd xi(6);
    for (int j = 0; j < 6; ++j) xi[j] = z(gen);
    pr.xi_blocks.push_back(xi);
    pr.weights.push_back(1.0 / 3.0);
  }
  pr.lambda = 0.2;
  GroupLassoOptions opt;
  opt.record_objective = true;
  const GroupLassoResult r = group_lasso_quad(pr, opt);
  ASSERT_FALSE(r.objective_trace.empty());
  for (std::size_t i = 1; i < r.objective_trace.size(); ++i)
    EXPECT_LE(r.objective_trace[i], r.objective_trace[i - 1] + 1e-12);
}

TEST(GroupLasso, RejectsIndefiniteBlock) {
  GroupQuadProblem pr;
  MatrixXd H = MatrixXd::Identity(2, 2);
  H(1, 1) = -1.0;
  pr.H_blocks = {H};
  pr.xi_blocks = {VectorXd::Ones(2)};
  pr.weights = {1.0};
  pr.lambda = 0.1;
  EXPECT_THROW(group_lasso_quad(pr), NumericalError);
}

// ---------------------------------------------------------------------------
TEST(Dantzig, ScalarInterval) {
  DantzigProblem pr;
  pr.H_blocks = {MatrixXd::Constant(1, 1, 2.0)};
  pr.target_index = 0;
  pr.tau = 0.1;
  const auto u = group_dantzig(pr);
  EXPECT_NEAR(u[0][0], 0.45, 1e-6);
}

TEST(Dantzig, IdentityPerCoordinate) {
  DantzigProblem pr;
  pr.H_blocks = {MatrixXd::Identity(2, 2)};
  pr.target_index = 0;
  pr.tau = 0.2;
  const auto u = group_dantzig(pr);
  EXPECT_NEAR(u[0][0], 0.8, 1e-6);
  EXPECT_NEAR(u[0][1], 0.0, 1e-6);
}

TEST(Dantzig, TwoStudyFixtureMatchesGridOracle) {
  Eigen::Matrix2d H1, H2;
  H1 << 2, 0, 0, 1;
  H2 = Eigen::Matrix2d::Identity();
  const double ref = oracle::dantzig_grid_m2p2(H1, H2, 0, 0.3, 1.0);
  const DantzigSolution s = group_dantzig_solve({MatrixXd(H1), MatrixXd(H2)}, 0, 0.3);
  ASSERT_EQ(s.status, DantzigStatus::kSolved);
  EXPECT_NEAR(l1_max(s.u), ref, 2e-3);
  EXPECT_LE(s.violation, 1e-6);
}

TEST(Dantzig, InfeasibleTauIsReported) {
  // H = 0 makes H u - e_j = -e_j for every u, so tau < 1 is infeasible.
  DantzigProblem pr;
  pr.H_blocks = {MatrixXd::Zero(2, 2)};
  pr.target_index = 1;
  pr.tau = 0.5;
  EXPECT_THROW(group_dantzig(pr), InfeasibleTauError);
}

TEST(Dantzig, LargeTauGivesZero) {
  std::mt19937_64 gen(1);
  const std::vector<MatrixXd> H = {random_psd(gen, 4, 0.1), random_psd(gen, 4, 0.1)};
  const DantzigSolution s = group_dantzig_solve(H, 2, 1.5);
  EXPECT_EQ(s.status, DantzigStatus::kSolved);
  EXPECT_EQ(l1_max(s.u), 0.0);
}

TEST(Dantzig, ObjectiveDecreasesInTauWithCarriedWorkingSet) {
  std::mt19937_64 gen(21);
  std::vector<MatrixXd> H;
  for (int m = 0; m < 3; ++m) H.push_back(random_psd(gen, 12, 0.02));
  DantzigActiveSet ws;
  double prev = -1.0;
  for (double tau : {0.05, 0.1, 0.2, 0.4, 0.8}) {
    const DantzigSolution s = group_dantzig_solve(H, 3, tau, {}, &ws);
    ASSERT_EQ(s.status, DantzigStatus::kSolved) << tau;
    EXPECT_LE(dantzig_constraint_norm(H, 3, s.u), tau + 1e-6);
    // Cold solve reaches the same value.
    const DantzigSolution cold = group_dantzig_solve(H, 3, tau);
    EXPECT_NEAR(s.objective, cold.objective, 1e-5 * std::max(1.0, cold.objective));
    if (prev >= 0) EXPECT_LE(s.objective, prev + 1e-6);
    prev = s.objective;
  }
}

TEST(Dantzig, InteriorPointAgreesWithAdmm) {
  std::mt19937_64 gen(99);
  std::vector<MatrixXd> H;
  for (int m = 0; m < 2; ++m) H.push_back(random_psd(gen, 6, 0.1));
  const DantzigSolution ipm = group_dantzig_solve(H, 1, 0.15);
  ASSERT_EQ(ipm.status, DantzigStatus::kSolved);
  AdmmOptions opt;
  opt.max_iter = 200000;
  opt.feas_tol = 1e-8;
  opt.obj_tol = 1e-8;
  DantzigProblem pr{H, 1, 0.15};
  const auto admm = group_dantzig_admm(pr, opt);
  EXPECT_NEAR(l1_max(admm), ipm.objective, 1e-4);
  EXPECT_LE(dantzig_constraint_norm(H, 1, admm), 0.15 + 1e-5);
}

TEST(Dantzig, BatchMatchesSingleSolves) {
  std::mt19937_64 gen(4);
  std::vector<MatrixXd> H;
  for (int m = 0; m < 2; ++m) H.push_back(random_psd(gen, 8, 0.05));
  const std::vector<int> targets = {1, 4, 7};
  const DantzigBatchResult b = group_dantzig_batch(H, targets, 0.2);
  for (std::size_t t = 0; t < targets.size(); ++t) {
    const DantzigSolution s = group_dantzig_solve(H, targets[t], 0.2);
    EXPECT_EQ(b.status[t], s.status);
    for (int m = 0; m < 2; ++m) EXPECT_EQ(b.u[m].col(t), s.u[m]);
  }
}

// ---------------------------------------------------------------------------
TEST(Kernels, ParallelEqualsSerialBitwise) {
  std::mt19937_64 gen(12);
  std::normal_distribution<double> z;
  MatrixXd X(157, 41), U(41, 23);
  VectorXd w(157);
  for (int i = 0; i < X.size(); ++i) X.data()[i] = z(gen);
  for (int i = 0; i < U.size(); ++i) U.data()[i] = z(gen);
  for (int i = 0; i < w.size(); ++i) w[i] = std::abs(z(gen));
  const MatrixXd A = random_psd(gen, 41, 0.0);
  const MatrixXd G = weighted_gram_serial(X, w, 157.0);
  const VectorXd q = column_quad_forms_serial(U, A);
  for (int threads : {1, 2, 3, 8}) {
    omp_set_num_threads(threads);
    EXPECT_EQ(weighted_gram(X, w, 157.0), G) << threads;
    EXPECT_EQ(column_quad_forms(U, A), q) << threads;
  }
  const MatrixXd ref = X.transpose() * w.asDiagonal() * X / 157.0;
  EXPECT_LE((G - ref).lpNorm<Eigen::Infinity>(), 1e-12);
  for (int c = 0; c < U.cols(); ++c) EXPECT_NEAR(q[c], U.col(c).dot(A * U.col(c)), 1e-10);
}
