#pragma once

// GLM primitives shared by every estimator: the canonical link function
// phi and its derivatives, the heteroscedasticity-adjusted working
// design/response pair, and the nested K x K' fold partition used for
// cross-fitting.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace dsilt {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class Family { kLogistic, kGaussian };

const char* to_string(Family f);
Family family_from_string(const std::string& name);

struct LinkValues {
  double phi;
  double dphi;
  double ddphi;
};

// Rows whose phi''(theta) falls below this floor raise WeightUnderflowError.
inline constexpr double kWeightFloor = 1e-10;

// phi(theta), phi'(theta), phi''(theta). Throws DomainError on non-finite theta.
LinkValues link_eval(Family family, double theta);

// Negative log-likelihood contribution f(theta, y) = phi(theta) - y * theta.
double glm_loss(Family family, double theta, double y);

struct AdjustedPair {
  VectorXd x_adj;
  double y_adj;
};

// X_beta = phi''^{1/2}(theta) x and
// Y_beta = phi''^{-1/2}(theta) {y - phi'(theta) + phi''(theta) theta}
// at theta = x' beta.
AdjustedPair adjusted_pair(Family family, const Eigen::Ref<const VectorXd>& x_row,
                           double y, const Eigen::Ref<const VectorXd>& beta);

// One study's individual-level data. Column 0 of X is the intercept.
struct Dataset {
  MatrixXd X;
  VectorXd y;
  int study_id = 0;

  Eigen::Index n() const { return X.rows(); }
  Eigen::Index p() const { return X.cols(); }

  // Throws InputError when shapes disagree or the intercept column is not 1.
  void validate(Family family) const;
};

// Outer K-fold split of [n] plus, for every outer fold k, an inner K'-fold
// split of the complement I_{-k}.
class FoldPartition {
 public:
  FoldPartition(std::vector<int> outer, std::vector<std::vector<int>> inner,
                int K, int K_inner, std::uint64_t seed);

  int K() const { return K_; }
  int K_inner() const { return K_inner_; }
  std::uint64_t seed() const { return seed_; }
  std::size_t n() const { return outer_.size(); }

  int outer_fold(std::size_t i) const { return outer_[i]; }
  // Inner fold of row i within I_{-k}; -1 when i belongs to I_k.
  int inner_fold(int k, std::size_t i) const { return inner_[k][i]; }

  std::vector<int> fold_rows(int k) const;        // I_k
  std::vector<int> complement_rows(int k) const;  // I_{-k}
  std::vector<int> inner_cell(int k, int kp) const;  // I_{-k,k'}
  std::vector<int> inner_fit_rows(int k, int kp) const;  // I_{-k} \ I_{-k,k'}

 private:
  std::vector<int> outer_;
  std::vector<std::vector<int>> inner_;
  int K_;
  int K_inner_;
  std::uint64_t seed_;
};

// Seeded shuffle followed by round-robin assignment, so fold sizes differ by
// at most one. Requires K even, K >= 2, K' >= 2 and n >= K * K'.
FoldPartition make_partition(std::size_t n, int K, int K_inner, std::uint64_t seed);

// Copies the selected rows of X / y into contiguous storage.
MatrixXd gather_rows(const MatrixXd& X, std::span<const int> rows);
VectorXd gather_rows(const VectorXd& y, std::span<const int> rows);

}  // namespace dsilt
