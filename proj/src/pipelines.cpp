#include "dsilt/pipelines.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>

#include "dsilt/errors.hpp"
#include "dsilt/federation.hpp"

namespace dsilt {

std::string to_string(Method m) {
  switch (m) {
    case Method::kDsilt: return "dsilt";
    case Method::kOneShot: return "oneshot";
    case Method::kIlma: return "ilma";
  }
  return "unknown";
}

Method method_from_string(const std::string& s) {
  if (s == "dsilt") return Method::kDsilt;
  if (s == "oneshot") return Method::kOneShot;
  if (s == "ilma") return Method::kIlma;
  throw ConfigError("unknown method '" + s + "' (expected dsilt, oneshot or ilma)");
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::vector<int> hypothesis_coordinates(Eigen::Index p) {
  std::vector<int> h(static_cast<std::size_t>(p - 1));
  std::iota(h.begin(), h.end(), 1);
  return h;
}

std::vector<double> scaled_grid(const GridSettings& grid, double rate) {
  std::vector<double> g = log_multipliers(grid);
  for (double& v : g) v *= rate;
  return g;
}

void check_datasets(const std::vector<Dataset>& datasets, const PipelineConfig& config) {
  if (datasets.empty()) throw ConfigError("pipeline: no studies");
  const Eigen::Index p = datasets.front().p();
  if (p < 4) throw ConfigError("pipeline: need p >= 4 so that q = p - 1 >= 3");
  for (std::size_t m = 0; m < datasets.size(); ++m) {
    if (datasets[m].p() != p) throw ConfigError("pipeline: studies disagree on p");
    if (datasets[m].study_id != static_cast<int>(m))
      throw ConfigError("pipeline: study ids must be 0..M-1 in order");
  }
  if (!config.lambda_m.empty() && config.lambda_m.size() != datasets.size())
    throw ConfigError("pipeline: lambda_m needs one value per study");
  if (!(config.alpha > 0.0 && config.alpha < 1.0)) throw ConfigError("pipeline: alpha must lie in (0, 1)");
}

// Local penalties, identical across pipelines for the same seed.
std::vector<double> local_penalties(const std::vector<Dataset>& datasets, const PipelineConfig& config) {
  if (!config.lambda_m.empty()) return config.lambda_m;
  std::vector<double> out(datasets.size());
  std::vector<std::exception_ptr> errors(datasets.size());
#pragma omp parallel for schedule(dynamic)
  for (int m = 0; m < static_cast<int>(datasets.size()); ++m) {
    try {
      const Dataset& d = datasets[m];
      out[m] = cv_lambda_local(d, cv_seed(config.seed, m),
                               scaled_grid(config.grid, lambda_m_rate(d.p(), static_cast<double>(d.n()))),
                               config.family);
    } catch (...) {
      errors[m] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

double mean_size(std::span<const std::int64_t> n) {
  double s = 0.0;
  for (auto v : n) s += static_cast<double>(v);
  return s / static_cast<double>(n.size());
}

}  // namespace

// ---------------------------------------------------------------------------
DebiasAttempt debias_at_tau(std::span<const CoefficientBlock> beta_tilde,
                            const std::vector<std::vector<Round2Summary>>& round2,
                            std::span<const int> targets, double tau, const DantzigOptions& options,
                            DebiasPath& path) {
  const std::size_t K = beta_tilde.size();
  if (path.H.size() != K) throw InputError("debias_at_tau: path has the wrong fold count");
  path.working.resize(K);
  std::vector<std::vector<MatrixXd>> u(K);
  for (std::size_t k = 0; k < K; ++k) {
    DantzigBatchResult r = group_dantzig_batch(path.H[k], targets, tau, options, &path.working[k]);
    for (DantzigStatus s : r.status)
      if (s != DantzigStatus::kSolved) return {};
    u[k] = std::move(r.u);
  }
  DebiasBatch batch = debias_batch(beta_tilde, round2, targets, u);
  for (Eigen::Index i = 0; i < batch.sigma_sq.size(); ++i) {
    const double v = batch.sigma_sq.data()[i];
    if (!std::isfinite(v)) return {};
    if (!(v > 0.0)) return {TauStatus::kDegenerate, std::nullopt};
  }
  return {TauStatus::kFeasible, std::move(batch)};
}

TunedDebias tune_and_debias(std::span<const CoefficientBlock> beta_tilde,
                            const std::vector<std::vector<Round2Summary>>& round2,
                            std::span<const std::int64_t> n_per_study, std::span<const double> candidates,
                            std::optional<double> fixed_tau, int H_points,
                            const DantzigOptions& options, int column_budget) {
  if (beta_tilde.empty()) throw InputError("tune_and_debias: no folds");
  const Eigen::Index p = beta_tilde.front().p();
  const int M = static_cast<int>(beta_tilde.front().M());
  const std::vector<int> targets = hypothesis_coordinates(p);
  DebiasPath path;
  for (const auto& fold : round2) {
    std::vector<MatrixXd> H;
    for (const Round2Summary& r : fold) H.push_back(r.H_tilde);
    path.H.push_back(std::move(H));
  }

  TunedDebias out;
  if (fixed_tau) {
    DantzigOptions opts = options;
    opts.max_columns = 0;
    DebiasAttempt attempt = debias_at_tau(beta_tilde, round2, targets, *fixed_tau, opts, path);
    if (attempt.status != TauStatus::kFeasible)
      throw TuningError("debiasing failed at the fixed tau " + std::to_string(*fixed_tau));
    out.selection.tau = *fixed_tau;
    out.selection.candidates.push_back({*fixed_tau, true, true, 0.0});
    out.batch = std::move(*attempt.batch);
    return out;
  }

  DantzigOptions opts = options;
  opts.max_columns = column_budget < 0 ? std::max<int>(10, static_cast<int>(p / 2)) : column_budget;
  std::map<double, DebiasBatch> batches;
  const NullStatisticsFn null_statistics = [&](double tau) -> NullStatistics {
    DebiasAttempt attempt = debias_at_tau(beta_tilde, round2, targets, tau, opts, path);
    if (attempt.status != TauStatus::kFeasible) return {attempt.status, {}};
    const std::optional<DebiasBatch>& batch = attempt.batch;
    std::vector<double> zeta(targets.size());
    for (std::size_t t = 0; t < targets.size(); ++t)
      zeta[t] = group_zeta(batch->beta_null.row(t).transpose(), batch->sigma_sq.row(t).transpose(),
                           n_per_study);
    batches.emplace(tau, std::move(*attempt.batch));
    return {TauStatus::kFeasible, std::move(zeta)};
  };
  out.selection = tau_select(candidates, null_statistics, M, H_points);
  out.batch = std::move(batches.at(out.selection.tau));
  return out;
}

void finish_testing(const MatrixXd& beta_breve, const MatrixXd& sigma_sq,
                    std::span<const std::int64_t> n_per_study, double alpha, PipelineResult& result) {
  const auto t0 = Clock::now();
  const int M = static_cast<int>(beta_breve.cols());
  result.hypotheses = hypothesis_coordinates(beta_breve.rows() + 1);
  result.tests.resize(result.hypotheses.size());
  std::vector<double> scores(result.hypotheses.size());
  for (std::size_t t = 0; t < result.hypotheses.size(); ++t) {
    GroupTestResult& g = result.tests[t];
    g.j = result.hypotheses[t];
    g.zeta = group_zeta(beta_breve.row(t).transpose(), sigma_sq.row(t).transpose(), n_per_study);
    const NormalScore ns = normal_quantile_transform(g.zeta, M);
    g.n_score = ns.value;
    g.saturated = ns.saturated;
    scores[t] = ns.value;
  }
  result.outcome = fdr_threshold(scores, alpha);
  result.rejected.clear();
  for (int pos : result.outcome.rejected) result.rejected.push_back(result.hypotheses[pos]);
  result.timing.testing_s += seconds_since(t0);
}

// ---------------------------------------------------------------------------
namespace {

// Shared tail of DSILT and ILMA: tau search, debiasing, testing.
void integrative_tail(std::span<const CoefficientBlock> beta_tilde,
                      const std::vector<std::vector<Round2Summary>>& round2,
                      std::span<const std::int64_t> n_per_study, const PipelineConfig& config,
                      PipelineResult& result) {
  const auto t0 = Clock::now();
  const Eigen::Index p = beta_tilde.front().p();
  const int M = static_cast<int>(n_per_study.size());
  const std::vector<double> candidates =
      scaled_grid(config.grid, tau_rate(p, M, mean_size(n_per_study)));
  TunedDebias tuned = tune_and_debias(beta_tilde, round2, n_per_study, candidates, config.tau,
                                      config.H_points, config.dantzig, config.tau_column_budget);
  result.timing.debiasing_s += seconds_since(t0);
  result.tau = {tuned.selection.tau};
  result.zeta_null.resize(tuned.batch.targets.size());
  for (std::size_t t = 0; t < tuned.batch.targets.size(); ++t)
    result.zeta_null[t] = group_zeta(tuned.batch.beta_null.row(t).transpose(),
                                     tuned.batch.sigma_sq.row(t).transpose(), n_per_study);
  result.tau_search.push_back(std::move(tuned.selection));
  finish_testing(tuned.batch.beta_breve, tuned.batch.sigma_sq, n_per_study, config.alpha, result);
}

}  // namespace

PipelineResult dsilt_pipeline(const std::vector<Dataset>& datasets, const PipelineConfig& config,
                              Transport* transport) {
  const auto t_start = Clock::now();
  check_datasets(datasets, config);
  PipelineResult result;
  result.method = Method::kDsilt;

  auto t0 = Clock::now();
  ProtocolConfig pc;
  pc.family = config.family;
  pc.K = config.K;
  pc.K_inner = config.K_inner;
  pc.seed = config.seed;
  pc.grid = config.grid;
  pc.lambda_m = local_penalties(datasets, config);
  pc.lambda = config.lambda;
  result.timing.local_tuning_s = seconds_since(t0);

  t0 = Clock::now();
  MemoryTransport local;
  const ProtocolResult proto = run_protocol(datasets, pc, transport != nullptr ? *transport : local);
  result.timing.estimation_s = seconds_since(t0);
  result.lambda_m = proto.lambda_m;
  result.lambda = proto.lambda;

  integrative_tail(proto.beta_tilde, proto.round2, proto.n_per_study, config, result);
  result.timing.total_s = seconds_since(t_start);
  return result;
}

// ---------------------------------------------------------------------------
namespace {

// Twice the mean negative log-likelihood over I_{-k}, study-weighted as in
// the integrative problem. On pooled rows this is the exact counterpart of
// the quadratic deviance built from round-1 summaries.
double pooled_deviance(const std::vector<Dataset>& datasets, const std::vector<FoldPartition>& parts,
                       int k, Family family, const CoefficientBlock& beta) {
  double total_rows = 0.0, dev = 0.0;
  for (std::size_t m = 0; m < datasets.size(); ++m) {
    const std::vector<int> rows = parts[m].complement_rows(k);
    const VectorXd theta = gather_rows(datasets[m].X, rows) * beta.study(static_cast<Eigen::Index>(m));
    for (std::size_t i = 0; i < rows.size(); ++i)
      dev += glm_loss(family, theta[static_cast<Eigen::Index>(i)], datasets[m].y[rows[i]]);
    total_rows += static_cast<double>(rows.size());
  }
  return 2.0 * dev / total_rows;
}

}  // namespace

PipelineResult ilma_pipeline(const std::vector<Dataset>& datasets, const PipelineConfig& config) {
  const auto t_start = Clock::now();
  check_datasets(datasets, config);
  const int M = static_cast<int>(datasets.size());
  const int K = config.K;
  const Eigen::Index p = datasets.front().p();
  PipelineResult result;
  result.method = Method::kIlma;

  auto t0 = Clock::now();
  result.lambda_m = local_penalties(datasets, config);
  result.timing.local_tuning_s = seconds_since(t0);

  // The analysis site holds every row; partitions match the protocol's.
  t0 = Clock::now();
  std::vector<FoldPartition> parts;
  std::vector<std::int64_t> n_per_study;
  for (int m = 0; m < M; ++m) {
    datasets[m].validate(config.family);
    parts.push_back(make_partition(static_cast<std::size_t>(datasets[m].n()), K, config.K_inner,
                                   partition_seed(config.seed, m)));
    n_per_study.push_back(datasets[m].n());
  }
  std::vector<std::vector<std::vector<RowMoments>>> cells(K, std::vector<std::vector<RowMoments>>(M));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(M * K));
#pragma omp parallel for schedule(dynamic)
  for (int s = 0; s < M * K; ++s) {
    const int m = s / K, k = s % K;
    try {
      cells[k][m] = dc_round1_cells(datasets[m], parts[m], k, result.lambda_m[m], config.family);
    } catch (...) {
      errors[s] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  std::vector<std::vector<Round1Summary>> r1(K);
  for (int k = 0; k < K; ++k)
    for (int m = 0; m < M; ++m)
      r1[k].push_back(round1_from_cells(
          m, k, static_cast<std::int64_t>(parts[m].complement_rows(k).size()), cells[k][m]));

  if (config.lambda) {
    result.lambda = *config.lambda;
  } else {
    const std::vector<double> grid = scaled_grid(config.grid, lambda_rate(p, M, mean_size(n_per_study)));
    const DevianceFn deviance = [&](const CoefficientBlock& beta) {
      return pooled_deviance(datasets, parts, 0, config.family, beta);
    };
    result.lambda = gic_select(r1[0], grid, std::nullopt, deviance).lambda;
  }

  std::vector<CoefficientBlock> beta_tilde;
  std::vector<std::vector<Round2Summary>> round2(K);
  for (int k = 0; k < K; ++k) {
    const BroadcastCoefficients b = ac_integrate(r1[k], result.lambda);
    CoefficientBlock block(p, M);
    for (int m = 0; m < M; ++m) block.study(m) = b.beta_blocks[m];
    beta_tilde.push_back(std::move(block));
    for (int m = 0; m < M; ++m) round2[k].push_back(dc_round2(datasets[m], parts[m], k, b, config.family));
  }
  result.timing.estimation_s = seconds_since(t0);

  integrative_tail(beta_tilde, round2, n_per_study, config, result);
  result.timing.total_s = seconds_since(t_start);
  return result;
}

// ---------------------------------------------------------------------------
PipelineResult one_shot_pipeline(const std::vector<Dataset>& datasets, const PipelineConfig& config,
                                 Transport* transport) {
  const auto t_start = Clock::now();
  check_datasets(datasets, config);
  const int M = static_cast<int>(datasets.size());
  const int K = config.K;
  const Eigen::Index p = datasets.front().p();
  PipelineResult result;
  result.method = Method::kOneShot;

  auto t0 = Clock::now();
  result.lambda_m = local_penalties(datasets, config);
  result.timing.local_tuning_s = seconds_since(t0);

  MemoryTransport local;
  Transport& wire = transport != nullptr ? *transport : local;
  result.tau.assign(M, 0.0);
  result.tau_search.resize(M);

  // Each study works alone; only its debiased vector and variances leave.
  for (int m = 0; m < M; ++m) {
    const Dataset& d = datasets[m];
    d.validate(config.family);
    t0 = Clock::now();
    const FoldPartition part = make_partition(static_cast<std::size_t>(d.n()), K, config.K_inner,
                                              partition_seed(config.seed, m));
    LassoSpec spec;
    spec.family = config.family;
    spec.lambda = result.lambda_m[m];
    std::vector<CoefficientBlock> beta_local;
    std::vector<std::vector<Round2Summary>> round2(K);
    for (int k = 0; k < K; ++k) {
      const std::vector<int> fit_rows = part.complement_rows(k);
      const LassoFit fit = lasso_fit(gather_rows(d.X, fit_rows), gather_rows(d.y, fit_rows), spec);
      CoefficientBlock block(p, 1);
      block.study(0) = fit.beta;
      beta_local.push_back(block);
      const std::vector<int> rows = part.fold_rows(k);
      const RowMoments mom =
          row_moments(gather_rows(d.X, rows), gather_rows(d.y, rows), fit.beta, config.family, true);
      Round2Summary r2;
      r2.study_id = 0;  // position within this single-study problem
      r2.fold_id = k;
      r2.n_used = static_cast<std::int64_t>(rows.size());
      r2.xi_tilde = mom.xi;
      r2.H_tilde = mom.H;
      r2.J_tilde = mom.J;
      round2[k].push_back(std::move(r2));
    }
    result.timing.estimation_s += seconds_since(t0);

    t0 = Clock::now();
    const std::int64_t n_m = d.n();
    const std::vector<double> candidates =
        scaled_grid(config.grid, tau_rate(p, 1, static_cast<double>(n_m)));
    TunedDebias tuned = tune_and_debias(beta_local, round2, std::span<const std::int64_t>(&n_m, 1),
                                        candidates, config.tau, config.H_points, config.dantzig,
                                        config.tau_column_budget);
    result.tau[m] = tuned.selection.tau;
    result.tau_search[m] = std::move(tuned.selection);
    OneShotSummary summary;
    summary.study_id = m;
    summary.n_used = n_m;
    summary.beta_breve = tuned.batch.beta_breve.col(0);
    summary.sigma_sq = tuned.batch.sigma_sq.col(0);
    MessageEnvelope msg;
    msg.round = Round::kOneShot;
    msg.payload = std::move(summary);
    wire.send({Round::kOneShot, m, 0}, msg);
    result.timing.debiasing_s += seconds_since(t0);
  }

  // Analysis site.
  MatrixXd beta_breve(p - 1, M), sigma_sq(p - 1, M);
  std::vector<std::int64_t> n_per_study(M);
  for (int m = 0; m < M; ++m) {
    const auto s = std::get<OneShotSummary>(wire.receive({Round::kOneShot, m, 0}).payload);
    if (s.beta_breve.size() != p - 1 || s.sigma_sq.size() != p - 1)
      throw ProtocolError("one-shot summary has the wrong length", m, 0);
    beta_breve.col(m) = s.beta_breve;
    sigma_sq.col(m) = s.sigma_sq;
    n_per_study[m] = s.n_used;
  }
  finish_testing(beta_breve, sigma_sq, n_per_study, config.alpha, result);
  result.timing.total_s = seconds_since(t_start);
  return result;
}

PipelineResult run_pipeline(Method method, const std::vector<Dataset>& datasets,
                            const PipelineConfig& config) {
  switch (method) {
    case Method::kDsilt: return dsilt_pipeline(datasets, config);
    case Method::kOneShot: return one_shot_pipeline(datasets, config);
    case Method::kIlma: return ilma_pipeline(datasets, config);
  }
  throw ConfigError("unknown method");
}

}  // namespace dsilt
