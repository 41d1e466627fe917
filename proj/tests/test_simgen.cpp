#include <gtest/gtest.h>

#include <cmath>

#include "dsilt/errors.hpp"
#include "dsilt/simgen.hpp"

using namespace dsilt;

namespace {

double corr(const VectorXd& a, const VectorXd& b) {
  const double ma = a.mean(), mb = b.mean();
  return ((a.array() - ma) * (b.array() - mb)).sum() /
         std::sqrt((a.array() - ma).square().sum() * (b.array() - mb).square().sum());
}

}  // namespace

TEST(Design, Ar1MomentsAndIntercept) {
  ScenarioSpec s;
  s.M = 1;
  s.n_m = 200000;
  s.p = 6;
  s.s = 1;
  const MatrixXd X = gen_design(s)[0];
  ASSERT_EQ(X.rows(), 200000);
  EXPECT_TRUE((X.col(0).array() == 1.0).all());
  for (int j = 1; j < 6; ++j) {
    EXPECT_NEAR(X.col(j).mean(), 0.0, 0.01);
    EXPECT_NEAR(X.col(j).squaredNorm() / X.rows(), 1.0, 0.01);
  }
  for (int j = 1; j + 1 < 6; ++j) EXPECT_NEAR(corr(X.col(j), X.col(j + 1)), 0.5, 0.01);
  EXPECT_NEAR(corr(X.col(1), X.col(3)), 0.25, 0.01);
}

TEST(Design, HmmMarginalAndDependence) {
  ScenarioSpec s;
  s.design = DesignKind::kHmm;
  s.M = 1;
  s.n_m = 200000;
  s.p = 5;
  s.s = 1;
  const MatrixXd X = gen_design(s)[0];
  for (int j = 1; j < 5; ++j) {
    EXPECT_TRUE((X.col(j).array() == 0.0 || X.col(j).array() == 1.0).all());
    EXPECT_NEAR(X.col(j).mean(), 0.5, 0.005);
  }
  // Hidden lag-one correlation 1 - 2(0.2); each emission flip scales by 1 - 2(0.2).
  for (int j = 1; j + 1 < 5; ++j) EXPECT_NEAR(corr(X.col(j), X.col(j + 1)), 0.6 * 0.36, 0.01);
}

TEST(Design, StudiesUseIndependentSubStreams) {
  ScenarioSpec a;
  a.M = 3;
  a.n_m = 50;
  a.p = 8;
  a.s = 2;
  ScenarioSpec b = a;
  b.M = 2;
  const auto Xa = gen_design(a), Xb = gen_design(b);
  EXPECT_EQ(Xa[0], Xb[0]);
  EXPECT_EQ(Xa[1], Xb[1]);
  EXPECT_NE(Xa[0], Xa[1]);
}

TEST(Coefficients, ZeroSignalStrength) {
  ScenarioSpec s;
  s.mu = 0.0;
  const GroundTruth t = gen_coefficients(s);
  for (const auto& b : t.beta_true) EXPECT_EQ(b, VectorXd::Zero(s.p));
  EXPECT_TRUE(t.support.empty());
  EXPECT_EQ(t.null_coordinates(s.p).size(), static_cast<std::size_t>(s.p - 1));
}

TEST(Coefficients, SharedSupportAndLayout) {
  ScenarioSpec s;
  s.p = 30;
  s.s = 5;
  const GroundTruth t = gen_coefficients(s);
  EXPECT_EQ(t.support, (std::vector<int>{1, 2, 3, 4, 5}));
  ASSERT_EQ(t.beta_true.size(), 3u);
  for (int m = 0; m < 3; ++m) {
    EXPECT_EQ(t.beta_true[m][0], 0.0);
    for (int j = 1; j < 30; ++j) EXPECT_EQ(t.beta_true[m][j] != 0.0, j <= 5) << m << " " << j;
    for (int i = 0; i < 5; ++i)
      EXPECT_NEAR(t.beta_true[m][i + 1], s.mu * (t.nu(m, i) + 1.0) * t.psi[i], 1e-15);
  }
  for (int i = 0; i < 5; ++i) EXPECT_EQ(std::abs(t.psi[i]), 1.0);
  const auto nulls = t.null_coordinates(30);
  EXPECT_EQ(nulls.size(), 24u);
  EXPECT_EQ(nulls.front(), 6);
}

TEST(Coefficients, MeanIsMuTimesSign) {
  ScenarioSpec s;
  s.p = 12;
  s.s = 5;
  s.M = 2;
  s.mu = 0.3;
  double sum = 0.0, sum_sq_nu = 0.0;
  int count = 0;
  for (std::uint64_t seed = 1; seed <= 10000; ++seed) {
    s.seed = seed;
    const GroundTruth t = gen_coefficients(s);
    for (int m = 0; m < 2; ++m)
      for (int i = 0; i < 5; ++i) {
        sum += t.beta_true[m][i + 1] * t.psi[i];
        sum_sq_nu += t.nu(m, i) * t.nu(m, i);
        ++count;
      }
  }
  EXPECT_NEAR(sum / count, s.mu, 0.01 * s.mu);
  EXPECT_NEAR(std::sqrt(sum_sq_nu / count), s.mu / 2, 0.01);
}

TEST(Outcomes, NullLogisticIsFairCoin) {
  const std::vector<MatrixXd> X = {MatrixXd::Ones(100000, 2)};
  GroundTruth t;
  t.beta_true = {VectorXd::Zero(2)};
  const auto y = gen_outcomes(X, t, Family::kLogistic, 5);
  EXPECT_NEAR(y[0].mean(), 0.5, 0.005);
  EXPECT_EQ(y[0], gen_outcomes(X, t, Family::kLogistic, 5)[0]);
  EXPECT_NE(y[0], gen_outcomes(X, t, Family::kLogistic, 6)[0]);
}

TEST(Outcomes, SaturatedCoefficientFollowsSign) {
  ScenarioSpec s;
  s.M = 1;
  s.n_m = 500;
  s.p = 4;
  s.s = 1;
  const auto X = gen_design(s);
  GroundTruth t;
  t.beta_true = {VectorXd::Zero(4)};
  t.beta_true[0][2] = 1e6;
  const auto y = gen_outcomes(X, t, Family::kLogistic, 9);
  for (int i = 0; i < 500; ++i) EXPECT_EQ(y[0][i], X[0](i, 2) > 0 ? 1.0 : 0.0);
}

TEST(Outcomes, GaussianNoiseIsStandard) {
  const std::vector<MatrixXd> X = {MatrixXd::Ones(100000, 1)};
  GroundTruth t;
  t.beta_true = {VectorXd::Constant(1, 2.0)};
  const VectorXd y = gen_outcomes(X, t, Family::kGaussian, 3)[0];
  EXPECT_NEAR(y.mean(), 2.0, 0.01);
  EXPECT_NEAR((y.array() - y.mean()).square().mean(), 1.0, 0.02);
}

TEST(Simulate, DeterministicAndValid) {
  ScenarioSpec s;
  s.n_m = 40;
  s.p = 15;
  s.s = 3;
  s.seed = 44;
  const SimulatedStudies a = simulate(s), b = simulate(s);
  ASSERT_EQ(a.datasets.size(), 3u);
  for (int m = 0; m < 3; ++m) {
    EXPECT_EQ(a.datasets[m].study_id, m);
    EXPECT_EQ(a.datasets[m].X, b.datasets[m].X);
    EXPECT_EQ(a.datasets[m].y, b.datasets[m].y);
    EXPECT_NO_THROW(a.datasets[m].validate(Family::kLogistic));
  }
}

TEST(Simulate, ValidationErrors) {
  ScenarioSpec s;
  s.rho = 1.0;
  EXPECT_THROW(s.validate(), ConfigError);
  s = {};
  s.switch_prob = 0.0;
  EXPECT_THROW(s.validate(), ConfigError);
  s = {};
  s.s = s.p;
  EXPECT_THROW(s.validate(), ConfigError);
  EXPECT_EQ(design_from_string("hmm"), DesignKind::kHmm);
  EXPECT_THROW(design_from_string("ar2"), ConfigError);
}
