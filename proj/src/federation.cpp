#include "dsilt/federation.hpp"

#include <exception>
#include <string>

#include "dsilt/errors.hpp"
#include "dsilt/kernels.hpp"
#include "dsilt/rng.hpp"

namespace dsilt {

std::uint64_t partition_seed(std::uint64_t seed, int study) {
  return derive_key(seed, {static_cast<std::uint64_t>(StreamTag::kPartition),
                           static_cast<std::uint64_t>(study)});
}

std::uint64_t cv_seed(std::uint64_t seed, int study) {
  return derive_key(seed, {static_cast<std::uint64_t>(StreamTag::kCrossValidation),
                           static_cast<std::uint64_t>(study)});
}

RowMoments row_moments(const MatrixXd& X, const VectorXd& y, const VectorXd& beta, Family family,
                       bool with_J) {
  const Eigen::Index n = X.rows();
  if (n == 0) throw InputError("row_moments: no rows");
  const VectorXd theta = X * beta;
  VectorXd weight(n), work(n), resid_sq(with_J ? n : 0);
  for (Eigen::Index i = 0; i < n; ++i) {
    const LinkValues lv = link_eval(family, theta[i]);
    if (lv.ddphi < kWeightFloor) throw WeightUnderflowError(theta[i], lv.ddphi);
    weight[i] = lv.ddphi;
    // X_beta * Y_beta collapses to x (y - phi' + phi'' theta).
    work[i] = y[i] - lv.dphi + lv.ddphi * theta[i];
    if (with_J) resid_sq[i] = (y[i] - lv.dphi) * (y[i] - lv.dphi);
  }
  const double scale = static_cast<double>(n);
  RowMoments out;
  out.xi = X.transpose() * work / scale;
  out.H = weighted_gram(X, weight, scale);
  if (with_J) out.J = weighted_gram(X, resid_sq, scale);
  return out;
}

std::vector<RowMoments> dc_round1_cells(const Dataset& data, const FoldPartition& partition, int k,
                                        double lambda_m, Family family) {
  if (partition.n() != static_cast<std::size_t>(data.n()))
    throw InputError("dc_round1: partition does not cover the data");
  if (!(lambda_m >= 0.0)) throw InputError("dc_round1: lambda_m must be non-negative");
  LassoSpec spec;
  spec.family = family;
  spec.lambda = lambda_m;
  VectorXd warm = VectorXd::Zero(data.p());
  std::vector<RowMoments> cells;
  for (int kp = 0; kp < partition.K_inner(); ++kp) {
    const std::vector<int> fit_rows = partition.inner_fit_rows(k, kp);
    const std::vector<int> cell = partition.inner_cell(k, kp);
    const LassoFit fit = lasso_fit(gather_rows(data.X, fit_rows), gather_rows(data.y, fit_rows), spec, &warm);
    warm = fit.beta;
    cells.push_back(
        row_moments(gather_rows(data.X, cell), gather_rows(data.y, cell), fit.beta, family, false));
  }
  return cells;
}

Round1Summary round1_from_cells(int study, int fold, std::int64_t n_used,
                                const std::vector<RowMoments>& cells) {
  if (cells.empty()) throw InputError("round1_from_cells: no cells");
  const Eigen::Index p = cells.front().xi.size();
  Round1Summary s;
  s.study_id = study;
  s.fold_id = fold;
  s.n_used = n_used;
  s.xi_hat = VectorXd::Zero(p);
  s.H_hat = MatrixXd::Zero(p, p);
  for (const RowMoments& c : cells) {
    s.xi_hat += c.xi;
    s.H_hat += c.H;
  }
  s.xi_hat /= static_cast<double>(cells.size());
  s.H_hat /= static_cast<double>(cells.size());
  return s;
}

Round1Summary dc_round1(const Dataset& data, const FoldPartition& partition, int k,
                        double lambda_m, Family family) {
  return round1_from_cells(data.study_id, k,
                           static_cast<std::int64_t>(partition.complement_rows(k).size()),
                           dc_round1_cells(data, partition, k, lambda_m, family));
}

Round2Summary dc_round2(const Dataset& data, const FoldPartition& partition, int k,
                        const BroadcastCoefficients& broadcast, Family family) {
  if (broadcast.fold_id != k) throw InputError("dc_round2: broadcast is for another fold");
  if (data.study_id < 0 || static_cast<std::size_t>(data.study_id) >= broadcast.beta_blocks.size())
    throw InputError("dc_round2: broadcast lacks this study's block");
  const VectorXd& beta = broadcast.beta_blocks[data.study_id];
  if (beta.size() != data.p()) throw InputError("dc_round2: coefficient length mismatch");
  const std::vector<int> rows = partition.fold_rows(k);
  const RowMoments mom = row_moments(gather_rows(data.X, rows), gather_rows(data.y, rows), beta, family, true);
  Round2Summary s;
  s.study_id = data.study_id;
  s.fold_id = k;
  s.n_used = static_cast<std::int64_t>(rows.size());
  s.xi_tilde = mom.xi;
  s.H_tilde = mom.H;
  s.J_tilde = mom.J;
  return s;
}

GroupQuadProblem assemble_problem(std::span<const Round1Summary> summaries, double lambda) {
  if (summaries.empty()) throw InputError("assemble_problem: no summaries");
  const Eigen::Index p = summaries.front().xi_hat.size();
  const int fold = summaries.front().fold_id;
  GroupQuadProblem problem;
  problem.lambda = lambda;
  double total = 0.0;
  for (const Round1Summary& s : summaries) {
    if (s.fold_id != fold)
      throw ProtocolError("round-1 summaries from different folds", s.study_id, s.fold_id);
    if (s.xi_hat.size() != p || s.H_hat.rows() != p || s.H_hat.cols() != p)
      throw ProtocolError("round-1 summary dimension mismatch", s.study_id, s.fold_id);
    if (s.n_used <= 0) throw ProtocolError("round-1 summary with no rows", s.study_id, s.fold_id);
    total += static_cast<double>(s.n_used);
  }
  for (const Round1Summary& s : summaries) {
    problem.H_blocks.push_back(s.H_hat);
    problem.xi_blocks.push_back(s.xi_hat);
    problem.weights.push_back(static_cast<double>(s.n_used) / total);
  }
  return problem;
}

BroadcastCoefficients ac_integrate(std::span<const Round1Summary> summaries, double lambda,
                                   const CoefficientBlock* warm_start) {
  const GroupQuadProblem problem = assemble_problem(summaries, lambda);
  const GroupLassoResult fit = group_lasso_quad(problem, {}, warm_start);
  BroadcastCoefficients b;
  b.fold_id = summaries.front().fold_id;
  for (Eigen::Index m = 0; m < fit.beta.M(); ++m) b.beta_blocks.push_back(fit.beta.study(m));
  return b;
}

// ---------------------------------------------------------------------------
DataComputer::DataComputer(Dataset data, int K, int K_inner, std::uint64_t seed, Family family)
    : data_(std::move(data)),
      partition_(make_partition(static_cast<std::size_t>(data_.n()), K, K_inner,
                                partition_seed(seed, data_.study_id))),
      family_(family),
      seed_(seed) {
  data_.validate(family_);
}

double DataComputer::tune_lambda(const GridSettings& grid) {
  std::vector<double> candidates = log_multipliers(grid);
  const double rate = lambda_m_rate(data_.p(), static_cast<double>(data_.n()));
  for (double& c : candidates) c *= rate;
  lambda_m_ = cv_lambda_local(data_, cv_seed(seed_, data_.study_id), candidates, family_);
  return lambda_m_;
}

Round1Summary DataComputer::round1(int k) const {
  return dc_round1(data_, partition_, k, lambda_m_, family_);
}

Round2Summary DataComputer::round2(const BroadcastCoefficients& broadcast) const {
  return dc_round2(data_, partition_, broadcast.fold_id, broadcast, family_);
}

std::vector<std::int64_t> AnalysisComputer::study_sizes(
    const std::vector<std::vector<Round1Summary>>& r1) const {
  std::vector<std::int64_t> n(M_, 0);
  for (const auto& fold : r1)
    for (const Round1Summary& s : fold) n[s.study_id] += s.n_used;
  for (auto& v : n) v /= (K_ - 1);
  return n;
}

GicSelection AnalysisComputer::select_lambda(std::span<const Round1Summary> fold_summaries,
                                             std::span<const double> grid) const {
  return gic_select(fold_summaries, grid);
}

BroadcastCoefficients AnalysisComputer::integrate(std::span<const Round1Summary> fold_summaries,
                                                  double lambda) const {
  return ac_integrate(fold_summaries, lambda);
}

// ---------------------------------------------------------------------------
namespace {

// Runs body(m, k) for every slot on OpenMP threads; the first failure (in
// slot order) is rethrown as a ProtocolError naming that slot.
template <typename Body>
void for_each_slot(int M, int K, const char* round, Body&& body) {
  const int total = M * K;
  std::vector<std::exception_ptr> errors(total);
#pragma omp parallel for schedule(dynamic)
  for (int s = 0; s < total; ++s) {
    try {
      body(s / K, s % K);
    } catch (...) {
      errors[s] = std::current_exception();
    }
  }
  for (int s = 0; s < total; ++s) {
    if (!errors[s]) continue;
    try {
      std::rethrow_exception(errors[s]);
    } catch (const ProtocolError&) {
      throw;
    } catch (const std::exception& e) {
      throw ProtocolError(std::string(round) + " failed: " + e.what(), s / K, s % K);
    }
  }
}

}  // namespace

ProtocolResult run_protocol(const std::vector<Dataset>& datasets, const ProtocolConfig& config,
                            Transport& transport) {
  const int M = static_cast<int>(datasets.size());
  const int K = config.K;
  if (M == 0) throw ConfigError("run_protocol: no studies");
  const Eigen::Index p = datasets.front().p();
  for (int m = 0; m < M; ++m) {
    if (datasets[m].p() != p) throw ConfigError("run_protocol: studies disagree on p");
    if (datasets[m].study_id != m) throw ConfigError("run_protocol: study ids must be 0..M-1 in order");
  }
  if (!config.lambda_m.empty() && static_cast<int>(config.lambda_m.size()) != M)
    throw ConfigError("run_protocol: lambda_m needs one value per study");

  std::vector<DataComputer> dcs;
  dcs.reserve(M);
  for (int m = 0; m < M; ++m) dcs.emplace_back(datasets[m], K, config.K_inner, config.seed, config.family);
  AnalysisComputer ac(M, K);

  ProtocolResult result;
  result.lambda_m.resize(M);
  for_each_slot(M, 1, "local tuning", [&](int m, int) {
    if (config.lambda_m.empty()) {
      dcs[m].tune_lambda(config.grid);
    } else {
      dcs[m].set_lambda(config.lambda_m[m]);
    }
  });
  for (int m = 0; m < M; ++m) result.lambda_m[m] = dcs[m].lambda();

  // Round 1.
  for_each_slot(M, K, "round 1", [&](int m, int k) {
    MessageEnvelope msg;
    msg.round = Round::kR1;
    msg.payload = dcs[m].round1(k);
    transport.send({Round::kR1, m, k}, msg);
  });
  std::vector<std::vector<Round1Summary>> r1(K);
  for (int k = 0; k < K; ++k)
    for (int m = 0; m < M; ++m)
      r1[k].push_back(std::get<Round1Summary>(transport.receive({Round::kR1, m, k}).payload));
  result.n_per_study = ac.study_sizes(r1);

  // Integration and broadcast.
  if (config.lambda) {
    result.lambda = *config.lambda;
  } else {
    double n_bar = 0.0;
    for (auto n : result.n_per_study) n_bar += static_cast<double>(n);
    n_bar /= M;
    std::vector<double> grid = log_multipliers(config.grid);
    for (double& g : grid) g *= lambda_rate(p, M, n_bar);
    try {
      GicSelection sel = ac.select_lambda(r1[0], grid);
      result.lambda = sel.lambda;
      result.gic = std::move(sel.report);
    } catch (const Error& e) {
      throw ProtocolError(std::string("lambda selection failed: ") + e.what(), -1, 0);
    }
  }
  result.beta_tilde.resize(K);
  for (int k = 0; k < K; ++k) {
    BroadcastCoefficients b;
    try {
      b = ac.integrate(r1[k], result.lambda);
    } catch (const ProtocolError&) {
      throw;
    } catch (const Error& e) {
      throw ProtocolError(std::string("integration failed: ") + e.what(), -1, k);
    }
    result.beta_tilde[k] = CoefficientBlock(p, M);
    for (int m = 0; m < M; ++m) result.beta_tilde[k].study(m) = b.beta_blocks[m];
    MessageEnvelope msg;
    msg.round = Round::kBroadcast;
    msg.payload = b;
    for (int m = 0; m < M; ++m) transport.send({Round::kBroadcast, m, k}, msg);
  }

  // Round 2.
  for_each_slot(M, K, "round 2", [&](int m, int k) {
    const MessageEnvelope in = transport.receive({Round::kBroadcast, m, k});
    MessageEnvelope msg;
    msg.round = Round::kR2;
    msg.payload = dcs[m].round2(std::get<BroadcastCoefficients>(in.payload));
    transport.send({Round::kR2, m, k}, msg);
  });
  result.round2.assign(K, {});
  for (int k = 0; k < K; ++k)
    for (int m = 0; m < M; ++m)
      result.round2[k].push_back(std::get<Round2Summary>(transport.receive({Round::kR2, m, k}).payload));
  return result;
}

}  // namespace dsilt
