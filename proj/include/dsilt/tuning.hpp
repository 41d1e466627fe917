#pragma once

// Selection of the three tuning parameters in order: lambda_m by local
// cross-validation, lambda by GIC on summaries, tau by the null-calibration
// distance d(tau). Every grid is a rate constant times log-spaced
// multipliers.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dsilt/glm.hpp"
#include "dsilt/payloads.hpp"
#include "dsilt/solvers.hpp"

namespace dsilt {

struct GridSettings {
  int points = 10;
  double lo = 0.1;   // smallest multiplier
  double hi = 10.0;  // largest multiplier
};

// points log-spaced values in [lo, hi], ascending.
std::vector<double> log_multipliers(const GridSettings& grid);

// sqrt(log p / n_m)
double lambda_m_rate(Eigen::Index p, double n_m);
// sqrt(M + log p) / (sqrt(n) M), n = N / M
double lambda_rate(Eigen::Index p, int M, double n);
// sqrt(M + log p) / sqrt(n)
double tau_rate(Eigen::Index p, int M, double n);

struct TuningGrids {
  std::vector<std::vector<double>> lambda_m_grid;  // per study
  std::vector<double> lambda_grid;
  std::vector<double> tau_grid;
  int H_points = 10;
};

TuningGrids make_tuning_grids(Eigen::Index p, std::span<const std::int64_t> n_per_study,
                              const GridSettings& grid, int H_points = 10);

// ---------------------------------------------------------------------------
// `folds`-fold CV on held-out mean GLM deviance. The CV folds come from
// `seed` and are unrelated to the cross-fitting partition. Ties go to the
// larger penalty.
double cv_lambda_local(const Dataset& data, std::uint64_t seed, std::span<const double> grid,
                       Family family, int folds = 5);

// ---------------------------------------------------------------------------
struct GicEntry {
  double lambda = 0.0;
  double deviance = 0.0;
  double df = 0.0;
  double gic = 0.0;
  bool skipped = false;
  bool selected = false;
};

struct GicReport {
  double gamma = 0.0;
  std::vector<GicEntry> entries;  // one per grid value, grid order
};

struct GicSelection {
  double lambda = 0.0;
  GicReport report;
  CoefficientBlock beta;  // fit at the selected lambda
};

// Unpenalised quadratic deviance of the integrative objective.
double gic_deviance(const GroupQuadProblem& problem, const CoefficientBlock& beta);

// trace{[d2(Dev + pen)]^{-1} d2 Dev} over the nonzero groups (all M
// coordinates of each). Throws NumericalError if the penalised Hessian is
// singular.
double gic_degrees_of_freedom(const GroupQuadProblem& problem, const CoefficientBlock& beta);

// gamma defaults to log|I_{-k}| / |I_{-k}| (BIC). Fits are warm-started
// from the largest lambda down. Ties go to the smaller lambda. `deviance`
// replaces gic_deviance when set (the pooled-data pipeline evaluates the
// exact likelihood there).
using DevianceFn = std::function<double(const CoefficientBlock& beta)>;
GicSelection gic_select(std::span<const Round1Summary> summaries, std::span<const double> grid,
                        std::optional<double> gamma = std::nullopt, const DevianceFn& deviance = {});

// ---------------------------------------------------------------------------
// d(tau) = H^{-1} sum_h [R(x_h) / (2 q x_h) - 1]^2 with
// R(x) = #{j : Fbar_{chi2_M}(zeta_null_j) <= 2x} and
// x_h = Phibar(sqrt(2 log q)) h / H, q = zeta_null.size().
double tau_distance(std::span<const double> zeta_null, int M, int H_points);

struct TauCandidate {
  double tau = 0.0;
  bool evaluated = false;
  bool feasible = false;
  double distance = 0.0;
};

struct TauSelection {
  double tau = 0.0;
  std::size_t index = 0;                 // into the candidate list
  std::vector<TauCandidate> candidates;  // ascending tau
};

// `null_statistics(tau)` reports one of:
//   kFeasible    the q null statistics at tau;
//   kDegenerate  directions exist but some variance is zero (u = 0 is
//                feasible at large tau); skipped, the search continues down;
//   kFailed      the debiasing program cannot be solved at tau.
// Candidates are visited from the largest tau down; the first kFailed marks
// that candidate and every smaller one infeasible without evaluating them
// (the feasible set shrinks with tau). Returns argmin d, ties to the smaller
// tau. Throws TuningError if no candidate is feasible.
enum class TauStatus { kFeasible, kDegenerate, kFailed };
struct NullStatistics {
  TauStatus status = TauStatus::kFailed;
  std::vector<double> zeta;
};
using NullStatisticsFn = std::function<NullStatistics(double tau)>;
TauSelection tau_select(std::span<const double> candidates, const NullStatisticsFn& null_statistics,
                        int M, int H_points);

}  // namespace dsilt
