#pragma once

// The three end-to-end testing pipelines. All of them finish with the same
// code: group_zeta -> normal_quantile_transform -> fdr_threshold over the
// hypotheses j = 1..p-1 (coordinate 0 is the intercept).
//
//   DSILT    run_protocol, then group debiasing with tau from the
//            null-calibration search.
//   OneShot  per-study cross-fitted local LASSO and l_inf Dantzig debiasing
//            (tau_m tuned per study); only p-vectors leave a study.
//   ILMA     the DSILT estimator computed at one site from pooled rows; the
//            GIC for the integrative penalty uses the exact likelihood of
//            the rows instead of its quadratic summary.

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "dsilt/glm.hpp"
#include "dsilt/inference.hpp"
#include "dsilt/solvers.hpp"
#include "dsilt/transport.hpp"
#include "dsilt/tuning.hpp"

namespace dsilt {

enum class Method { kDsilt, kOneShot, kIlma };

std::string to_string(Method m);
Method method_from_string(const std::string& s);  // "dsilt" | "oneshot" | "ilma"

struct PipelineConfig {
  Family family = Family::kLogistic;
  int K = 2;
  int K_inner = 5;
  std::uint64_t seed = 0;
  GridSettings grid;
  int H_points = 10;
  double alpha = 0.1;
  std::vector<double> lambda_m;  // empty: local cross-validation
  std::optional<double> lambda;  // empty: GIC
  std::optional<double> tau;     // empty: null-calibration search
  DantzigOptions dantzig;
  // Working-set budget for the tau search: < 0 picks max(10, p / 2), 0 is
  // unbounded. A fixed tau is always solved without a budget.
  int tau_column_budget = -1;
};

struct StageTimes {
  double local_tuning_s = 0.0;
  double estimation_s = 0.0;
  double debiasing_s = 0.0;
  double testing_s = 0.0;
  double total_s = 0.0;
};

struct PipelineResult {
  Method method = Method::kDsilt;
  std::vector<int> hypotheses;         // coordinates 1..p-1
  std::vector<GroupTestResult> tests;  // one per hypothesis, same order
  std::vector<double> zeta_null;       // at the selected tau; empty for OneShot
  TestingOutcome outcome;              // positions into `hypotheses`
  std::vector<int> rejected;           // coordinates
  std::vector<double> lambda_m;
  double lambda = std::numeric_limits<double>::quiet_NaN();  // NaN for OneShot
  std::vector<double> tau;             // one value, or one per study for OneShot
  std::vector<TauSelection> tau_search;
  StageTimes timing;
};

// `transport` defaults to an internal MemoryTransport.
PipelineResult dsilt_pipeline(const std::vector<Dataset>& datasets, const PipelineConfig& config,
                              Transport* transport = nullptr);
PipelineResult one_shot_pipeline(const std::vector<Dataset>& datasets, const PipelineConfig& config,
                                 Transport* transport = nullptr);
PipelineResult ilma_pipeline(const std::vector<Dataset>& datasets, const PipelineConfig& config);

PipelineResult run_pipeline(Method method, const std::vector<Dataset>& datasets,
                            const PipelineConfig& config);

// ---------------------------------------------------------------------------
// Building blocks shared by the pipelines, exposed for tests.

// Debiasing at one tau for all hypotheses. `status` is kFailed when any
// Dantzig solve is not kSolved and kDegenerate when a variance is not
// positive; `batch` is set only for kFeasible.
struct DebiasPath {
  std::vector<std::vector<MatrixXd>> H;                  // [k][m], from round 2
  std::vector<std::vector<DantzigActiveSet>> working;    // [k][target]
};
struct DebiasAttempt {
  TauStatus status = TauStatus::kFailed;
  std::optional<DebiasBatch> batch;
};
DebiasAttempt debias_at_tau(std::span<const CoefficientBlock> beta_tilde,
                                         const std::vector<std::vector<Round2Summary>>& round2,
                                         std::span<const int> targets, double tau,
                                         const DantzigOptions& options, DebiasPath& path);

struct TunedDebias {
  TauSelection selection;
  DebiasBatch batch;
};

// Tau search over `candidates` (ascending) followed by the batch at the
// selected tau. A fixed tau skips the search.
TunedDebias tune_and_debias(std::span<const CoefficientBlock> beta_tilde,
                            const std::vector<std::vector<Round2Summary>>& round2,
                            std::span<const std::int64_t> n_per_study, std::span<const double> candidates,
                            std::optional<double> fixed_tau, int H_points,
                            const DantzigOptions& options, int column_budget);

// Statistics and thresholding for debiased rows (targets x M).
void finish_testing(const MatrixXd& beta_breve, const MatrixXd& sigma_sq,
                    std::span<const std::int64_t> n_per_study, double alpha, PipelineResult& result);

}  // namespace dsilt
