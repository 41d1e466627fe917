#include "dsilt/glm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "dsilt/errors.hpp"
#include "dsilt/rng.hpp"

namespace dsilt {

const char* to_string(Family f) {
  return f == Family::kLogistic ? "logistic" : "gaussian";
}

Family family_from_string(const std::string& name) {
  if (name == "logistic") return Family::kLogistic;
  if (name == "gaussian") return Family::kGaussian;
  throw ConfigError("unknown GLM family '" + name + "'");
}

LinkValues link_eval(Family family, double theta) {
  if (!std::isfinite(theta)) throw DomainError("link_eval: non-finite theta");
  if (family == Family::kGaussian) return {0.5 * theta * theta, theta, 1.0};

  // log(1 + e^t) = max(t, 0) + log1p(e^{-|t|}); expit from the same e^{-|t|}.
  const double e = std::exp(-std::abs(theta));
  const double phi = std::max(theta, 0.0) + std::log1p(e);
  const double inv = 1.0 / (1.0 + e);
  const double dphi = theta >= 0 ? inv : e * inv;
  const double ddphi = e * inv * inv;
  return {phi, dphi, ddphi};
}

double glm_loss(Family family, double theta, double y) {
  return link_eval(family, theta).phi - y * theta;
}

AdjustedPair adjusted_pair(Family family, const Eigen::Ref<const VectorXd>& x_row, double y,
                           const Eigen::Ref<const VectorXd>& beta) {
  const double theta = x_row.dot(beta);
  const LinkValues lv = link_eval(family, theta);
  if (lv.ddphi < kWeightFloor) throw WeightUnderflowError(theta, lv.ddphi);
  const double root = std::sqrt(lv.ddphi);
  return {root * x_row, (y - lv.dphi + lv.ddphi * theta) / root};
}

void Dataset::validate(Family family) const {
  if (X.rows() != y.size()) throw InputError("Dataset: X rows and y length differ");
  if (X.cols() < 1) throw InputError("Dataset: empty design");
  if (((X.col(0).array() - 1.0).abs() > 0.0).any())
    throw InputError("Dataset: first column must be the intercept (all ones)");
  if (!X.allFinite() || !y.allFinite()) throw InputError("Dataset: non-finite entries");
  if (family == Family::kLogistic && ((y.array() < 0.0) || (y.array() > 1.0)).any())
    throw InputError("Dataset: logistic response must lie in [0, 1]");
}

FoldPartition::FoldPartition(std::vector<int> outer, std::vector<std::vector<int>> inner, int K,
                             int K_inner, std::uint64_t seed)
    : outer_(std::move(outer)), inner_(std::move(inner)), K_(K), K_inner_(K_inner), seed_(seed) {}

std::vector<int> FoldPartition::fold_rows(int k) const {
  std::vector<int> rows;
  for (std::size_t i = 0; i < outer_.size(); ++i)
    if (outer_[i] == k) rows.push_back(static_cast<int>(i));
  return rows;
}

std::vector<int> FoldPartition::complement_rows(int k) const {
  std::vector<int> rows;
  for (std::size_t i = 0; i < outer_.size(); ++i)
    if (outer_[i] != k) rows.push_back(static_cast<int>(i));
  return rows;
}

std::vector<int> FoldPartition::inner_cell(int k, int kp) const {
  std::vector<int> rows;
  for (std::size_t i = 0; i < outer_.size(); ++i)
    if (inner_[k][i] == kp) rows.push_back(static_cast<int>(i));
  return rows;
}

std::vector<int> FoldPartition::inner_fit_rows(int k, int kp) const {
  std::vector<int> rows;
  for (std::size_t i = 0; i < outer_.size(); ++i)
    if (inner_[k][i] >= 0 && inner_[k][i] != kp) rows.push_back(static_cast<int>(i));
  return rows;
}

namespace {

// Fisher-Yates driven by the counter RNG, then fold = position mod folds.
std::vector<int> shuffled_round_robin(std::size_t n, int folds, CounterRng& rng) {
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  std::vector<int> fold(n);
  for (std::size_t pos = 0; pos < n; ++pos) fold[order[pos]] = static_cast<int>(pos % folds);
  return fold;
}

}  // namespace

FoldPartition make_partition(std::size_t n, int K, int K_inner, std::uint64_t seed) {
  if (K < 2 || K % 2 != 0) throw ConfigError("make_partition: K must be even and >= 2");
  if (K_inner < 2) throw ConfigError("make_partition: K' must be >= 2");
  if (n < static_cast<std::size_t>(K) * static_cast<std::size_t>(K_inner))
    throw ConfigError("make_partition: n must be at least K * K'");

  CounterRng outer_rng(derive_key(seed, {static_cast<std::uint64_t>(StreamTag::kPartition)}));
  std::vector<int> outer = shuffled_round_robin(n, K, outer_rng);

  std::vector<std::vector<int>> inner(K, std::vector<int>(n, -1));
  for (int k = 0; k < K; ++k) {
    std::vector<int> members;
    for (std::size_t i = 0; i < n; ++i)
      if (outer[i] != k) members.push_back(static_cast<int>(i));
    CounterRng rng(derive_key(seed, {static_cast<std::uint64_t>(StreamTag::kPartition),
                                     static_cast<std::uint64_t>(k) + 1}));
    const std::vector<int> local = shuffled_round_robin(members.size(), K_inner, rng);
    for (std::size_t pos = 0; pos < members.size(); ++pos) inner[k][members[pos]] = local[pos];
  }
  return FoldPartition(std::move(outer), std::move(inner), K, K_inner, seed);
}

MatrixXd gather_rows(const MatrixXd& X, std::span<const int> rows) {
  MatrixXd out(static_cast<Eigen::Index>(rows.size()), X.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = X.row(rows[r]);
  return out;
}

VectorXd gather_rows(const VectorXd& y, std::span<const int> rows) {
  VectorXd out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) out[static_cast<Eigen::Index>(r)] = y[rows[r]];
  return out;
}

}  // namespace dsilt
