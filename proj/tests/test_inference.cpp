#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "dsilt/errors.hpp"
#include "dsilt/inference.hpp"
#include "oracles.hpp"

using namespace dsilt;

// ---------------------------------------------------------------------------
TEST(Distributions, NormalSurvivalMatchesQuadrature) {
  for (double t : {-3.0, -0.5, 0.0, 0.3, 1.0, 1.96, 3.254, 5.0, 8.0})
    EXPECT_NEAR(normal_survival(t) / oracle::normal_survival_quad(t), 1.0, 1e-9) << t;
  for (double pr : {0.5, 0.25, 0.05, 1e-3, 1e-8})
    EXPECT_NEAR(normal_survival_inverse(pr), oracle::normal_survival_inverse_quad(pr), 1e-8) << pr;
}

TEST(Distributions, ChiSquareSurvivalMatchesQuadrature) {
  for (int df : {1, 2, 3, 5})
    for (double x : {0.01, 0.5, 1.0, 3.0, 7.8, 20.0, 45.0})
      EXPECT_NEAR(chi2_survival(x, df) / oracle::chi2_survival_quad(x, df), 1.0, 1e-8) << df << " " << x;
  EXPECT_EQ(chi2_survival(0.0, 3), 1.0);
}

TEST(Distributions, NormalScoreExamples) {
  EXPECT_EQ(normal_quantile_transform(0.0, 3).value, 0.0);
  EXPECT_NEAR(normal_quantile_transform(4.0, 1).value, 2.0, 1e-12);
  // Oracle: chi2_5 survival and the normal quantile by quadrature.
  const double ref = oracle::normal_survival_inverse_quad(oracle::chi2_survival_quad(4.35146, 5) / 2.0);
  const double got = normal_quantile_transform(4.35146, 5).value;
  EXPECT_NEAR(got, ref, 1e-8);
  EXPECT_NEAR(got, 0.67449, 1e-4);
}

TEST(Distributions, NormalScoreSaturates) {
  const NormalScore s = normal_quantile_transform(1e5, 3);
  EXPECT_TRUE(s.saturated);
  EXPECT_TRUE(std::isfinite(s.value));
  EXPECT_FALSE(normal_quantile_transform(30.0, 3).saturated);
}

// ---------------------------------------------------------------------------
TEST(Debias, UnitDirectionsAndIdentityVariance) {
  const int p = 3, M = 2, K = 2;
  std::vector<CoefficientBlock> bt(K, CoefficientBlock(p, M));
  std::vector<std::vector<Round2Summary>> r2(K, std::vector<Round2Summary>(M));
  std::vector<std::vector<MatrixXd>> u(K, std::vector<MatrixXd>(M));
  for (int k = 0; k < K; ++k)
    for (int m = 0; m < M; ++m) {
      r2[k][m] = {m, k, 50, VectorXd::LinSpaced(p, 1.0, 3.0), MatrixXd::Identity(p, p), MatrixXd::Identity(p, p)};
      u[k][m] = MatrixXd::Zero(p, 1);
      u[k][m](2, 0) = 1.0;
    }
  const std::vector<int> targets = {2};
  const DebiasBatch b = debias_batch(bt, r2, targets, u);
  EXPECT_DOUBLE_EQ(b.sigma_sq(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(b.sigma_sq(0, 1), 1.0);
  // beta_tilde = 0, H = I: corrected estimate is xi_j on both folds.
  EXPECT_DOUBLE_EQ(b.beta_breve(0, 0), 3.0);
  EXPECT_DOUBLE_EQ(b.beta_null(0, 0), 0.0);
}

TEST(Debias, BatchMatchesScriptedFormulas) {
  std::mt19937_64 gen(200);
  std::normal_distribution<double> z;
  const int p = 3, M = 2, K = 2;
  auto rnd = [&](int r, int c) {
    MatrixXd A(r, c);
    for (int i = 0; i < A.size(); ++i) A.data()[i] = z(gen);
    return A;
  };
  std::vector<CoefficientBlock> bt;
  std::vector<std::vector<Round2Summary>> r2(K);
  std::vector<std::vector<MatrixXd>> u(K);
  for (int k = 0; k < K; ++k) {
    bt.emplace_back(rnd(p, M));
    for (int m = 0; m < M; ++m) {
      const MatrixXd A = rnd(p, 200), B = rnd(p, 200);
      r2[k].push_back({m, k, 100, rnd(p, 1).col(0), A * A.transpose() / 200, B * B.transpose() / 200});
      u[k].push_back(rnd(p, p));
    }
  }
  const std::vector<int> targets = {0, 1, 2};
  const DebiasBatch b = debias_batch(bt, r2, targets, u);
  for (int t = 0; t < p; ++t)
    for (int m = 0; m < M; ++m) {
      double corr[2], var = 0.0;
      for (int k = 0; k < K; ++k) {
        const VectorXd uu = u[k][m].col(t);
        const VectorXd beta = bt[k].study(m);
        corr[k] = beta[t] + uu.dot(r2[k][m].xi_tilde - r2[k][m].H_tilde * beta);
        var += uu.dot(r2[k][m].J_tilde * uu) / K;
      }
      EXPECT_NEAR(b.beta_breve(t, m), (corr[0] + corr[1]) / 2, 1e-10);
      EXPECT_NEAR(b.beta_null(t, m), (corr[0] - corr[1]) / 2, 1e-10);
      EXPECT_NEAR(b.sigma_sq(t, m), var, 1e-10);
    }
}

TEST(Debias, IdenticalFoldsGiveZeroNull) {
  std::vector<CoefficientBlock> bt(2, CoefficientBlock(MatrixXd::Constant(2, 1, 0.3)));
  const Round2Summary s{0, 0, 10, VectorXd::Ones(2), MatrixXd::Identity(2, 2), MatrixXd::Identity(2, 2)};
  std::vector<std::vector<Round2Summary>> r2 = {{s}, {s}};
  r2[1][0].fold_id = 1;
  std::vector<std::vector<MatrixXd>> u = {{MatrixXd::Identity(2, 2)}, {MatrixXd::Identity(2, 2)}};
  const std::vector<int> targets = {0, 1};
  const DebiasBatch b = debias_batch(bt, r2, targets, u);
  EXPECT_EQ(b.beta_null, MatrixXd::Zero(2, 1));
}

TEST(Debias, GroupZeta) {
  VectorXd b(2), s(2);
  b << 0.2, -0.1;
  s << 0.04, 0.01;
  const std::vector<std::int64_t> n = {100, 400};
  EXPECT_NEAR(group_zeta(b, s, n), 100 * 1.0 + 400 * 1.0, 1e-12);
  const std::vector<std::int64_t> one = {1};
  VectorXd b1(1), s1(1);
  b1 << 2.0;
  s1 << 1.0;
  EXPECT_DOUBLE_EQ(group_zeta(b1, s1, one), 4.0);
}

// ---------------------------------------------------------------------------
TEST(Fdr, AlphaOneRejectsEverything) {
  // Normal scores are non-negative, so at t = 0 the ratio is 2q/2/q = 1.
  std::mt19937_64 gen(1);
  std::normal_distribution<double> z;
  std::vector<double> s(40);
  for (double& v : s) v = std::abs(z(gen));
  const TestingOutcome o = fdr_threshold(s, 1.0);
  EXPECT_EQ(o.threshold, 0.0);
  EXPECT_EQ(o.rejected.size(), s.size());
}

TEST(Fdr, CompleteNullCaps) {
  const std::vector<double> s(100, 0.0);
  const TestingOutcome o = fdr_threshold(s, 0.1);
  EXPECT_TRUE(o.capped);
  EXPECT_NEAR(o.threshold, std::sqrt(2.0 * std::log(100.0)), 1e-15);
  EXPECT_TRUE(o.rejected.empty());
}

TEST(Fdr, SmallQIsDomainError) {
  const std::vector<double> s = {1.0, 2.0};
  EXPECT_THROW(fdr_threshold(s, 0.1), DomainError);
  EXPECT_NEAR(t_q(100), std::sqrt(2 * std::log(100.0) - 2 * std::log(std::log(100.0))), 1e-15);
}

TEST(Fdr, FrozenFixtureMatchesGridScan) {
  std::mt19937_64 gen(50);
  std::normal_distribution<double> z;
  std::vector<double> s(50);
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = z(gen) + (i < 8 ? 3.0 : 0.0);
  const TestingOutcome o = fdr_threshold(s, 0.2);
  EXPECT_EQ(o.rejected, oracle::fdr_grid_scan(s, 0.2));
  EXPECT_FALSE(o.rejected.empty());
}

TEST(Fdr, RandomFixturesMatchGridScan) {
  for (int f = 0; f < 100; ++f) {
    std::mt19937_64 gen(1000 + f);
    std::normal_distribution<double> z;
    std::uniform_int_distribution<int> qd(3, 300);
    const int q = qd(gen);
    const int alt = static_cast<int>(q * 0.1 * (f % 4));
    std::vector<double> s(q);
    for (int i = 0; i < q; ++i) s[i] = z(gen) + (i < alt ? 2.5 + (f % 3) : 0.0);
    const double alpha = (f % 2) ? 0.1 : 0.2;
    EXPECT_EQ(fdr_threshold(s, alpha).rejected, oracle::fdr_grid_scan(s, alpha)) << "fixture " << f;
  }
}

TEST(SingleTest, Rule) {
  EXPECT_TRUE(single_test_reject(1.96, 0.05));
  EXPECT_FALSE(single_test_reject(1.95, 0.05));
}

// ---------------------------------------------------------------------------
TEST(Metrics, Examples) {
  const std::vector<int> rej = {1, 2, 3}, null = {2, 3, 4}, alt = {0, 1};
  const ErrorMetrics e = fdp_fdr_metrics(rej, null, alt);
  EXPECT_DOUBLE_EQ(e.fdp, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(e.power, 0.5);
  const ErrorMetrics none = fdp_fdr_metrics({}, null, alt);
  EXPECT_EQ(none.fdp, 0.0);
  EXPECT_EQ(none.power, 0.0);
  const std::vector<int> bad_null = {1, 2};
  EXPECT_THROW(fdp_fdr_metrics(rej, bad_null, alt), InputError);
}

TEST(Metrics, RandomFixtureMatchesCounting) {
  std::mt19937_64 gen(3);
  std::bernoulli_distribution coin(0.3), pick(0.4);
  std::vector<int> null, alt, rej;
  for (int j = 0; j < 100; ++j) {
    (coin(gen) ? alt : null).push_back(j);
    if (pick(gen)) rej.push_back(j);
  }
  const std::set<int> a(alt.begin(), alt.end());
  double false_rej = 0, true_rej = 0;
  for (int j : rej) (a.count(j) ? true_rej : false_rej) += 1;
  const ErrorMetrics e = fdp_fdr_metrics(rej, null, alt);
  EXPECT_DOUBLE_EQ(e.fdp, false_rej / std::max<double>(rej.size(), 1));
  EXPECT_DOUBLE_EQ(e.power, true_rej / alt.size());
}
