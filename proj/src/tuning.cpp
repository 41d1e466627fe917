#include "dsilt/tuning.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "dsilt/errors.hpp"
#include "dsilt/federation.hpp"
#include "dsilt/inference.hpp"
#include "dsilt/rng.hpp"

namespace dsilt {

std::vector<double> log_multipliers(const GridSettings& grid) {
  if (grid.points < 1 || !(grid.lo > 0.0) || !(grid.hi >= grid.lo))
    throw ConfigError("grid needs points >= 1 and 0 < lo <= hi");
  std::vector<double> out(grid.points);
  if (grid.points == 1) {
    out[0] = std::sqrt(grid.lo * grid.hi);
    return out;
  }
  const double step = std::log(grid.hi / grid.lo) / (grid.points - 1);
  for (int g = 0; g < grid.points; ++g) out[g] = grid.lo * std::exp(step * g);
  out.back() = grid.hi;
  return out;
}

double lambda_m_rate(Eigen::Index p, double n_m) {
  return std::sqrt(std::log(static_cast<double>(p)) / n_m);
}

double lambda_rate(Eigen::Index p, int M, double n) {
  return std::sqrt(M + std::log(static_cast<double>(p))) / (std::sqrt(n) * M);
}

double tau_rate(Eigen::Index p, int M, double n) {
  return std::sqrt(M + std::log(static_cast<double>(p))) / std::sqrt(n);
}

namespace {

std::vector<double> scaled(const std::vector<double>& mult, double rate) {
  std::vector<double> out(mult.size());
  for (std::size_t i = 0; i < mult.size(); ++i) out[i] = mult[i] * rate;
  return out;
}

}  // namespace

TuningGrids make_tuning_grids(Eigen::Index p, std::span<const std::int64_t> n_per_study,
                              const GridSettings& grid, int H_points) {
  if (n_per_study.empty()) throw ConfigError("make_tuning_grids: no studies");
  const auto mult = log_multipliers(grid);
  const int M = static_cast<int>(n_per_study.size());
  const double n = static_cast<double>(std::accumulate(n_per_study.begin(), n_per_study.end(),
                                                       std::int64_t{0})) / M;
  TuningGrids g;
  for (std::int64_t n_m : n_per_study)
    g.lambda_m_grid.push_back(scaled(mult, lambda_m_rate(p, static_cast<double>(n_m))));
  g.lambda_grid = scaled(mult, lambda_rate(p, M, n));
  g.tau_grid = scaled(mult, tau_rate(p, M, n));
  g.H_points = H_points;
  return g;
}

// ---------------------------------------------------------------------------
double cv_lambda_local(const Dataset& data, std::uint64_t seed, std::span<const double> grid,
                       Family family, int folds) {
  if (grid.empty()) throw TuningError("cv_lambda_local: empty grid");
  if (grid.size() == 1) return grid.front();
  const auto n = static_cast<std::size_t>(data.n());
  if (folds < 2 || n < static_cast<std::size_t>(folds))
    throw TuningError("cv_lambda_local: fewer rows than folds");

  // Seeded shuffle, then round-robin.
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  CounterRng rng(seed);
  for (std::size_t i = n - 1; i > 0; --i)
    std::swap(order[i], order[rng.below(i + 1)]);
  std::vector<int> fold_of(n);
  for (std::size_t i = 0; i < n; ++i) fold_of[order[i]] = static_cast<int>(i % folds);

  // Largest penalty first so each fit warm-starts from a sparser one.
  std::vector<std::size_t> by_lambda(grid.size());
  std::iota(by_lambda.begin(), by_lambda.end(), 0);
  std::sort(by_lambda.begin(), by_lambda.end(),
            [&](std::size_t a, std::size_t b) { return grid[a] > grid[b]; });

  std::vector<double> loss(grid.size(), 0.0);
  std::vector<std::size_t> rows_scored(grid.size(), 0);
  for (int f = 0; f < folds; ++f) {
    std::vector<int> train, test;
    for (std::size_t i = 0; i < n; ++i) (fold_of[i] == f ? test : train).push_back(static_cast<int>(i));
    const MatrixXd Xtr = gather_rows(data.X, train);
    const VectorXd ytr = gather_rows(data.y, train);
    const MatrixXd Xte = gather_rows(data.X, test);
    const VectorXd yte = gather_rows(data.y, test);
    VectorXd warm = VectorXd::Zero(data.p());
    for (std::size_t g : by_lambda) {
      LassoSpec spec;
      spec.family = family;
      spec.lambda = grid[g];
      try {
        const LassoFit fit = lasso_fit(Xtr, ytr, spec, &warm);
        warm = fit.beta;
        const VectorXd theta = Xte * fit.beta;
        for (Eigen::Index i = 0; i < theta.size(); ++i) loss[g] += glm_loss(family, theta[i], yte[i]);
        rows_scored[g] += static_cast<std::size_t>(theta.size());
      } catch (const Error&) {
        // This fold does not score this candidate.
      }
    }
  }

  std::size_t best = grid.size();
  double best_loss = std::numeric_limits<double>::infinity();
  for (std::size_t g : by_lambda) {
    if (rows_scored[g] == 0) continue;
    const double mean = loss[g] / static_cast<double>(rows_scored[g]);
    if (mean < best_loss) {  // strict: ties keep the larger penalty
      best_loss = mean;
      best = g;
    }
  }
  if (best == grid.size()) throw TuningError("cv_lambda_local: solver failed for every candidate");
  return grid[best];
}

// ---------------------------------------------------------------------------
double gic_deviance(const GroupQuadProblem& problem, const CoefficientBlock& beta) {
  double dev = 0.0;
  for (Eigen::Index m = 0; m < problem.M(); ++m) {
    const VectorXd b = beta.study(m);
    dev += problem.weights[m] * (b.dot(problem.H_blocks[m] * b) - 2.0 * b.dot(problem.xi_blocks[m]));
  }
  return dev;
}

double gic_degrees_of_freedom(const GroupQuadProblem& problem, const CoefficientBlock& beta) {
  const Eigen::Index p = problem.p();
  const Eigen::Index M = problem.M();
  std::vector<Eigen::Index> active;
  for (Eigen::Index j = 0; j < p; ++j)
    if (beta.group(j).norm() > 0.0) active.push_back(j);
  if (active.empty()) return 0.0;

  // Coordinates ordered group-major: (j, m) -> a * M + m.
  const auto d = static_cast<Eigen::Index>(active.size()) * M;
  MatrixXd dev_hess = MatrixXd::Zero(d, d);
  MatrixXd pen_hess = MatrixXd::Zero(d, d);
  for (std::size_t a = 0; a < active.size(); ++a) {
    for (std::size_t b = 0; b < active.size(); ++b)
      for (Eigen::Index m = 0; m < M; ++m)
        dev_hess(a * M + m, b * M + m) =
            2.0 * problem.weights[m] * problem.H_blocks[m](active[a], active[b]);
    const Eigen::Index j = active[a];
    if (j == 0 && !problem.penalize_first) continue;
    const VectorXd g = beta.group(j).transpose();
    const double norm = g.norm();
    pen_hess.block(a * M, a * M, M, M) =
        problem.lambda * (MatrixXd::Identity(M, M) / norm - g * g.transpose() / (norm * norm * norm));
  }
  const MatrixXd total = dev_hess + pen_hess;
  const Eigen::LDLT<MatrixXd> ldlt(total);
  if (ldlt.info() != Eigen::Success || !(ldlt.rcond() > 1e-12))
    throw NumericalError("gic: penalised Hessian on the active set is singular");
  return ldlt.solve(dev_hess).trace();
}

GicSelection gic_select(std::span<const Round1Summary> summaries, std::span<const double> grid,
                        std::optional<double> gamma, const DevianceFn& deviance) {
  if (grid.empty()) throw TuningError("gic_select: empty grid");
  if (summaries.empty()) throw TuningError("gic_select: no summaries");
  std::int64_t total = 0;
  for (const Round1Summary& s : summaries) total += s.n_used;
  GicSelection sel;
  sel.report.gamma = gamma.value_or(std::log(static_cast<double>(total)) / static_cast<double>(total));
  sel.report.entries.resize(grid.size());

  std::vector<std::size_t> by_lambda(grid.size());
  std::iota(by_lambda.begin(), by_lambda.end(), 0);
  std::sort(by_lambda.begin(), by_lambda.end(),
            [&](std::size_t a, std::size_t b) { return grid[a] > grid[b]; });

  std::vector<CoefficientBlock> fits(grid.size());
  std::optional<CoefficientBlock> warm;
  for (std::size_t g : by_lambda) {
    GicEntry& e = sel.report.entries[g];
    e.lambda = grid[g];
    const GroupQuadProblem problem = assemble_problem(summaries, grid[g]);
    try {
      GroupLassoResult fit = group_lasso_quad(problem, {}, warm ? &*warm : nullptr);
      warm = fit.beta;
      e.deviance = deviance ? deviance(fit.beta) : gic_deviance(problem, fit.beta);
      e.df = gic_degrees_of_freedom(problem, fit.beta);
      e.gic = e.deviance + sel.report.gamma * e.df;
      if (!std::isfinite(e.gic)) throw NumericalError("gic: non-finite criterion");
      fits[g] = std::move(fit.beta);
    } catch (const Error&) {
      e.skipped = true;
    }
  }

  std::size_t best = grid.size();
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const GicEntry& e = sel.report.entries[g];
    if (e.skipped) continue;
    if (best == grid.size()) {
      best = g;
      continue;
    }
    const GicEntry& b = sel.report.entries[best];
    if (e.gic < b.gic || (e.gic == b.gic && e.lambda < b.lambda)) best = g;
  }
  if (best == grid.size()) throw TuningError("gic_select: every candidate was skipped");
  sel.report.entries[best].selected = true;
  sel.lambda = grid[best];
  sel.beta = std::move(fits[best]);
  return sel;
}

// ---------------------------------------------------------------------------
double tau_distance(std::span<const double> zeta_null, int M, int H_points) {
  const std::size_t q = zeta_null.size();
  if (q < 3) throw DomainError("tau_distance needs q >= 3");
  if (H_points < 1) throw ConfigError("tau_distance: H must be positive");
  std::vector<double> tail(q);
  for (std::size_t j = 0; j < q; ++j) tail[j] = chi2_survival(zeta_null[j], M);
  std::sort(tail.begin(), tail.end());
  const double base = normal_survival(std::sqrt(2.0 * std::log(static_cast<double>(q))));
  double d = 0.0;
  for (int h = 1; h <= H_points; ++h) {
    const double x = base * h / H_points;
    const auto R = static_cast<double>(std::upper_bound(tail.begin(), tail.end(), 2.0 * x) - tail.begin());
    const double ratio = R / (2.0 * static_cast<double>(q) * x) - 1.0;
    d += ratio * ratio;
  }
  return d / H_points;
}

TauSelection tau_select(std::span<const double> candidates, const NullStatisticsFn& null_statistics,
                        int M, int H_points) {
  if (candidates.empty()) throw TuningError("tau_select: no candidates");
  if (!std::is_sorted(candidates.begin(), candidates.end()))
    throw ConfigError("tau_select: candidates must be ascending");
  TauSelection sel;
  sel.candidates.resize(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) sel.candidates[i].tau = candidates[i];

  for (std::size_t i = candidates.size(); i-- > 0;) {
    TauCandidate& c = sel.candidates[i];
    c.evaluated = true;
    const NullStatistics stats = null_statistics(c.tau);
    if (stats.status == TauStatus::kFailed) break;  // this and every smaller candidate stay infeasible
    if (stats.status == TauStatus::kDegenerate) continue;
    c.feasible = true;
    c.distance = tau_distance(stats.zeta, M, H_points);
  }

  bool found = false;
  for (std::size_t i = 0; i < sel.candidates.size(); ++i) {
    const TauCandidate& c = sel.candidates[i];
    if (!c.feasible) continue;
    if (!found || c.distance < sel.candidates[sel.index].distance) {
      sel.index = i;
      found = true;
    }
  }
  if (!found) throw TuningError("tau_select: no feasible tau; enlarge the grid");
  sel.tau = sel.candidates[sel.index].tau;
  return sel;
}

}  // namespace dsilt
