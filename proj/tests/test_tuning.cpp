#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dsilt/errors.hpp"
#include "dsilt/inference.hpp"
#include "dsilt/tuning.hpp"
#include "oracles.hpp"

using namespace dsilt;

namespace {

MatrixXd random_psd(std::mt19937_64& gen, int p) {
  std::normal_distribution<double> z;
  MatrixXd A(p, p + 3);
  for (int i = 0; i < A.size(); ++i) A.data()[i] = z(gen);
  return A * A.transpose() / (p + 3) + 0.05 * MatrixXd::Identity(p, p);
}

Dataset noise_data(std::uint64_t seed, int n, int p) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> z;
  Dataset d;
  d.X.resize(n, p);
  d.y.resize(n);
  for (int i = 0; i < n; ++i) {
    d.X(i, 0) = 1.0;
    for (int j = 1; j < p; ++j) d.X(i, j) = z(gen);
    d.y[i] = z(gen);
  }
  return d;
}

}  // namespace

TEST(Grids, LogSpacedAndScaled) {
  const auto g = log_multipliers({});
  ASSERT_EQ(g.size(), 10u);
  EXPECT_DOUBLE_EQ(g.front(), 0.1);
  EXPECT_DOUBLE_EQ(g.back(), 10.0);
  for (std::size_t i = 1; i < g.size(); ++i) EXPECT_NEAR(g[i] / g[i - 1], std::pow(100.0, 1.0 / 9), 1e-12);
  EXPECT_NEAR(lambda_m_rate(200, 300), std::sqrt(std::log(200.0) / 300), 1e-15);
  EXPECT_NEAR(lambda_rate(200, 3, 300), std::sqrt(3 + std::log(200.0)) / (std::sqrt(300.0) * 3), 1e-15);
  EXPECT_NEAR(tau_rate(200, 3, 300), std::sqrt(3 + std::log(200.0)) / std::sqrt(300.0), 1e-15);
  EXPECT_THROW(log_multipliers({0, 0.1, 1}), ConfigError);
}

// ---------------------------------------------------------------------------
TEST(LocalCv, SingleCandidate) {
  const Dataset d = noise_data(1, 40, 4);
  const std::vector<double> grid = {0.37};
  EXPECT_EQ(cv_lambda_local(d, 5, grid, Family::kGaussian), 0.37);
}

TEST(LocalCv, PureNoisePrefersHeavyPenalty) {
  const Dataset d = noise_data(2, 100, 30);
  const std::vector<double> grid = {0.01, 10.0};
  EXPECT_EQ(cv_lambda_local(d, 11, grid, Family::kGaussian), 10.0);
}

TEST(LocalCv, Deterministic) {
  Dataset d = noise_data(3, 60, 6);
  for (int i = 0; i < 10; ++i) d.y[i] += 2.0 * d.X(i, 1);
  Dataset twice;
  twice.X.resize(120, 6);
  twice.X << d.X, d.X;
  twice.y.resize(120);
  twice.y << d.y, d.y;
  const std::vector<double> grid = {0.01, 0.05, 0.1, 0.3, 1.0};
  EXPECT_EQ(cv_lambda_local(twice, 4, grid, Family::kGaussian), cv_lambda_local(twice, 4, grid, Family::kGaussian));
  EXPECT_EQ(cv_lambda_local(d, 4, grid, Family::kGaussian), cv_lambda_local(d, 4, grid, Family::kGaussian));
}

// ---------------------------------------------------------------------------
TEST(Gic, InterceptOnlyHasDfM) {
  GroupQuadProblem pr;
  for (int m = 0; m < 3; ++m) {
    pr.H_blocks.push_back(MatrixXd::Identity(4, 4));
    VectorXd xi = VectorXd::Constant(4, 0.2);
    xi[0] = 1.0 + m;
    pr.xi_blocks.push_back(xi);
    pr.weights.push_back(1.0 / 3);
  }
  pr.lambda = 100.0;
  const CoefficientBlock beta = group_lasso_quad(pr).beta;
  for (int j = 1; j < 4; ++j) EXPECT_EQ(beta.group(j).norm(), 0.0);
  EXPECT_NEAR(gic_degrees_of_freedom(pr, beta), 3.0, 1e-12);
}

TEST(Gic, ZeroPenaltyIdentityCountsCoordinates) {
  GroupQuadProblem pr;
  for (int m = 0; m < 2; ++m) {
    pr.H_blocks.push_back(MatrixXd::Identity(3, 3));
    pr.xi_blocks.push_back(VectorXd::LinSpaced(3, 1.0, 2.0 + m));
    pr.weights.push_back(0.5);
  }
  pr.lambda = 0.0;
  EXPECT_NEAR(gic_degrees_of_freedom(pr, group_lasso_quad(pr).beta), 6.0, 1e-12);
}

TEST(Gic, DegreesOfFreedomMatchFiniteDifferenceTrace) {
  std::mt19937_64 gen(40);
  std::normal_distribution<double> z;
  GroupQuadProblem pr;
  for (int m = 0; m < 2; ++m) {
    pr.H_blocks.push_back(random_psd(gen, 4));
    VectorXd xi(4);
    for (int j = 0; j < 4; ++j) xi[j] = z(gen);
    pr.xi_blocks.push_back(xi);
    pr.weights.push_back(m ? 0.6 : 0.4);
  }
  pr.lambda = 0.15;
  const CoefficientBlock beta = group_lasso_quad(pr).beta;
  std::vector<int> active;
  for (int j = 0; j < 4; ++j)
    if (beta.group(j).norm() > 0) active.push_back(j);
  ASSERT_GE(active.size(), 2u);

  // Numerical Hessians of Dev and Dev + penalty over the active coordinates.
  const int d = static_cast<int>(active.size()) * 2;
  auto coord = [&](int c) { return std::pair{active[c / 2], c % 2}; };
  auto dev = [&](const MatrixXd& b) {
    double f = 0.0;
    for (int m = 0; m < 2; ++m)
      f += pr.weights[m] * (b.col(m).dot(pr.H_blocks[m] * b.col(m)) - 2 * b.col(m).dot(pr.xi_blocks[m]));
    return f;
  };
  auto full = [&](const MatrixXd& b) {
    double f = dev(b);
    for (int j = 1; j < 4; ++j) f += pr.lambda * b.row(j).norm();
    return f;
  };
  auto hessian = [&](auto f) {
    const double h = 1e-4;
    MatrixXd Hs(d, d);
    for (int a = 0; a < d; ++a)
      for (int c = 0; c < d; ++c) {
        auto [ja, ma] = coord(a);
        auto [jc, mc] = coord(c);
        MatrixXd pp = beta.matrix(), pm = pp, mp = pp, mm = pp;
        pp(ja, ma) += h; pp(jc, mc) += h;
        pm(ja, ma) += h; pm(jc, mc) -= h;
        mp(ja, ma) -= h; mp(jc, mc) += h;
        mm(ja, ma) -= h; mm(jc, mc) -= h;
        Hs(a, c) = (f(pp) - f(pm) - f(mp) + f(mm)) / (4 * h * h);
      }
    return Hs;
  };
  const MatrixXd Hd = hessian(dev), Hf = hessian(full);
  const double ref = Hf.ldlt().solve(Hd).trace();
  EXPECT_NEAR(gic_degrees_of_freedom(pr, beta), ref, 1e-6);
}

TEST(Gic, SingleCandidateAndTies) {
  std::mt19937_64 gen(41);
  std::vector<Round1Summary> s;
  for (int m = 0; m < 2; ++m) s.push_back({m, 0, 100, VectorXd::Ones(3), random_psd(gen, 3)});
  const std::vector<double> one = {0.2};
  EXPECT_EQ(gic_select(s, one).lambda, 0.2);
  // A constant deviance and gamma = 0 make every candidate tie.
  const std::vector<double> grid = {0.5, 0.1, 0.3};
  const GicSelection sel = gic_select(s, grid, 0.0, [](const CoefficientBlock&) { return 1.0; });
  EXPECT_EQ(sel.lambda, 0.1);
  EXPECT_TRUE(sel.report.entries[1].selected);
}

TEST(Gic, DefaultGammaIsBic) {
  std::mt19937_64 gen(42);
  std::vector<Round1Summary> s;
  for (int m = 0; m < 3; ++m) s.push_back({m, 0, 100, VectorXd::Ones(3), random_psd(gen, 3)});
  const std::vector<double> grid = {0.1, 1.0};
  EXPECT_NEAR(gic_select(s, grid).report.gamma, std::log(300.0) / 300.0, 1e-15);
}

// ---------------------------------------------------------------------------
namespace {

// Direct computation: sort nothing, count each threshold separately.
double distance_oracle(const std::vector<double>& zeta, int M, int H) {
  const double q = static_cast<double>(zeta.size());
  const double base = 0.5 * std::erfc(std::sqrt(2 * std::log(q)) / std::sqrt(2.0));
  double d = 0.0;
  for (int h = 1; h <= H; ++h) {
    const double x = base * h / H;
    double R = 0;
    for (double z : zeta) R += oracle::chi2_survival_quad(z, M) <= 2 * x;
    d += (R / (2 * q * x) - 1) * (R / (2 * q * x) - 1);
  }
  return d / H;
}

}  // namespace

TEST(TauDistance, ZeroNullStatisticsGiveOne) {
  // Fbar(0) = 1 exceeds every 2 x_h, so R = 0 and each term is 1.
  const std::vector<double> zeta(50, 0.0);
  EXPECT_DOUBLE_EQ(tau_distance(zeta, 3, 10), 1.0);
}

TEST(TauDistance, SaturatedNullStatisticsClosedForm) {
  // Every statistic far in the tail: R = q at each x_h.
  const std::vector<double> zeta(50, 1e4);
  const double q = 50;
  const double base = normal_survival(std::sqrt(2 * std::log(q)));
  double ref = 0.0;
  for (int h = 1; h <= 10; ++h) ref += std::pow(1.0 / (2 * base * h / 10) - 1.0, 2);
  EXPECT_NEAR(tau_distance(zeta, 3, 10), ref / 10, 1e-9 * ref);
}

TEST(TauDistance, FrozenFixtureMatchesDirectComputation) {
  std::mt19937_64 gen(20);
  std::chi_squared_distribution<double> chi(3.0);
  std::vector<double> zeta(20);
  for (double& z : zeta) z = chi(gen) * 1.8;
  EXPECT_NEAR(tau_distance(zeta, 3, 10), distance_oracle(zeta, 3, 10), 1e-12);
  EXPECT_GT(tau_distance(zeta, 3, 10), 0.0);
}

TEST(TauSelect, SkipsDegenerateStopsAtFailureAndBreaksTiesLow) {
  const std::vector<double> taus = {0.1, 0.2, 0.3, 0.4, 0.5};
  std::vector<double> visited;
  const std::vector<double> same(30, 1e4);
  const TauSelection sel = tau_select(
      taus,
      [&](double tau) {
        visited.push_back(tau);
        if (tau == 0.5) return NullStatistics{TauStatus::kDegenerate, {}};
        if (tau == 0.1) return NullStatistics{TauStatus::kFailed, {}};
        return NullStatistics{TauStatus::kFeasible, same};
      },
      3, 10);
  EXPECT_EQ(visited, (std::vector<double>{0.5, 0.4, 0.3, 0.2, 0.1}));
  EXPECT_EQ(sel.tau, 0.2);
  EXPECT_FALSE(sel.candidates[0].feasible);
  EXPECT_FALSE(sel.candidates[4].feasible);
}

TEST(TauSelect, FailureHidesSmallerCandidates) {
  const std::vector<double> taus = {0.1, 0.2, 0.3};
  const std::vector<double> good(30, 0.0), bad(30, 1e4);
  const TauSelection sel = tau_select(
      taus,
      [&](double tau) {
        if (tau == 0.2) return NullStatistics{TauStatus::kFailed, {}};
        return NullStatistics{TauStatus::kFeasible, tau == 0.1 ? good : bad};
      },
      3, 10);
  EXPECT_EQ(sel.tau, 0.3);
  EXPECT_FALSE(sel.candidates[0].evaluated);
}

TEST(TauSelect, NothingFeasibleThrows) {
  const std::vector<double> taus = {0.1, 0.2};
  EXPECT_THROW(tau_select(taus, [](double) { return NullStatistics{TauStatus::kFailed, {}}; }, 3, 10),
               TuningError);
}
