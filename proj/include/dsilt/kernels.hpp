#pragma once

// Dense kernels behind the moment computations. Each has a serial
// reference and an OpenMP version. The parallel versions split the
// *output* into column blocks and never split a floating-point reduction,
// so both produce bit-identical results for any thread count.

#include <Eigen/Dense>

namespace dsilt {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// X' diag(w) X / scale.
MatrixXd weighted_gram_serial(const MatrixXd& X, const VectorXd& w, double scale);
MatrixXd weighted_gram(const MatrixXd& X, const VectorXd& w, double scale);

// diag(U' A U): one quadratic form per column of U.
VectorXd column_quad_forms_serial(const MatrixXd& U, const MatrixXd& A);
VectorXd column_quad_forms(const MatrixXd& U, const MatrixXd& A);

}  // namespace dsilt
