#include "dsilt/kernels.hpp"

#include <algorithm>

#include "dsilt/errors.hpp"

namespace dsilt {

namespace {

constexpr Eigen::Index kBlock = 16;

// Column j of X' diag(w) X, rows [0, j]. The sum over i runs in index order
// whichever thread calls it.
void gram_column(const MatrixXd& X, const VectorXd& w, double inv_scale, Eigen::Index j,
                 MatrixXd& out) {
  const VectorXd wx = X.col(j).cwiseProduct(w);
  for (Eigen::Index r = 0; r <= j; ++r) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < X.rows(); ++i) acc += X(i, r) * wx[i];
    out(r, j) = acc * inv_scale;
  }
}

void check_gram(const MatrixXd& X, const VectorXd& w, double scale) {
  if (w.size() != X.rows()) throw InputError("weighted_gram: weight length mismatch");
  if (!(scale > 0.0)) throw InputError("weighted_gram: scale must be positive");
}

void mirror_upper(MatrixXd& G) {
  G.triangularView<Eigen::StrictlyLower>() = G.transpose();
}

}  // namespace

MatrixXd weighted_gram_serial(const MatrixXd& X, const VectorXd& w, double scale) {
  check_gram(X, w, scale);
  const Eigen::Index p = X.cols();
  MatrixXd G(p, p);
  for (Eigen::Index j = 0; j < p; ++j) gram_column(X, w, 1.0 / scale, j, G);
  mirror_upper(G);
  return G;
}

MatrixXd weighted_gram(const MatrixXd& X, const VectorXd& w, double scale) {
  check_gram(X, w, scale);
  const Eigen::Index p = X.cols();
  MatrixXd G(p, p);
  const Eigen::Index blocks = (p + kBlock - 1) / kBlock;
#pragma omp parallel for schedule(dynamic)
  for (Eigen::Index b = 0; b < blocks; ++b) {
    const Eigen::Index end = std::min(p, (b + 1) * kBlock);
    for (Eigen::Index j = b * kBlock; j < end; ++j) gram_column(X, w, 1.0 / scale, j, G);
  }
  mirror_upper(G);
  return G;
}

VectorXd column_quad_forms_serial(const MatrixXd& U, const MatrixXd& A) {
  if (A.rows() != U.rows() || A.cols() != U.rows())
    throw InputError("column_quad_forms: dimension mismatch");
  VectorXd out(U.cols());
  for (Eigen::Index c = 0; c < U.cols(); ++c) out[c] = U.col(c).dot(A * U.col(c));
  return out;
}

VectorXd column_quad_forms(const MatrixXd& U, const MatrixXd& A) {
  if (A.rows() != U.rows() || A.cols() != U.rows())
    throw InputError("column_quad_forms: dimension mismatch");
  VectorXd out(U.cols());
#pragma omp parallel for schedule(static)
  for (Eigen::Index c = 0; c < U.cols(); ++c) out[c] = U.col(c).dot(A * U.col(c));
  return out;
}

}  // namespace dsilt
