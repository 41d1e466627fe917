// Group Dantzig selector, exact path.
//
// For a working set S of columns (shared by the studies) and W of rows the
// restricted problem
//
//   min  t + Gamma sum_r eps_r
//   s.t. ||u^(m)_S||_1 <= t                                        every m
//        ||(H^(m)_{r,S} u^(m)_S - 1{r = j})_m||_2 <= tau + eps_r   r in W
//        eps >= 0
//
// is a small cone program solved by a primal-dual interior-point method with
// Nesterov-Todd scaling and a Mehrotra corrector. Violated rows of the full
// problem join W; a column joins S when its reduced cost
// |sum_r H^(m)_{r,i} z_{r,m}| exceeds the l1 multiplier w_m. The elastic
// slack keeps every restricted problem feasible; slack that survives the
// largest penalty means the full problem is infeasible.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "dsilt/errors.hpp"
#include "dsilt/solvers.hpp"

namespace dsilt {

double dantzig_constraint_norm(const std::vector<MatrixXd>& H_blocks, int target,
                               const std::vector<VectorXd>& u) {
  const Eigen::Index p = H_blocks.front().rows();
  VectorXd row_sq = VectorXd::Zero(p);
  for (std::size_t m = 0; m < H_blocks.size(); ++m) {
    VectorXd g = H_blocks[m] * u[m];
    g[target] -= 1.0;
    row_sq += g.cwiseAbs2();
  }
  return std::sqrt(row_sq.maxCoeff());
}

namespace {

// Variable layout x = [t | a (M k) | u (M k) | eps (w)], where a bounds |u|.
// Constraint layout s, z = [P (M k) | N (M k) | L (M) | E (w) | SOC (w x (M+1))]
// with P: a - u >= 0, N: a + u >= 0, L: t - 1'a_m >= 0, E: eps >= 0 and
// SOC row r: (tau + eps_r, 1{r = j} - H_{r,S} u_m) in the second-order cone.
struct Restricted {
  int M = 0;
  int k = 0;
  int w = 0;
  std::vector<MatrixXd> HWS;  // w x k per study
  VectorXd target_rows;       // 1{r = j} for r in W
  double tau = 0.0;
  double penalty = 0.0;

  int n_x() const { return 1 + 2 * M * k + w; }
  int n_orth() const { return 2 * M * k + M + w; }
  int n_z() const { return n_orth() + w * (M + 1); }
  int a_off(int m) const { return 1 + m * k; }
  int u_off(int m) const { return 1 + M * k + m * k; }
  int e_off() const { return 1 + 2 * M * k; }
  int P_off(int m) const { return m * k; }
  int N_off(int m) const { return M * k + m * k; }
  int L_off() const { return 2 * M * k; }
  int E_off() const { return 2 * M * k + M; }
  int soc_off(int r) const { return n_orth() + r * (M + 1); }
  int degree() const { return n_orth() + w; }
};

VectorXd apply_G(const Restricted& R, const VectorXd& x) {
  VectorXd out(R.n_z());
  const double t = x[0];
  for (int m = 0; m < R.M; ++m) {
    const auto a = x.segment(R.a_off(m), R.k);
    const auto u = x.segment(R.u_off(m), R.k);
    out.segment(R.P_off(m), R.k) = u - a;
    out.segment(R.N_off(m), R.k) = -a - u;
    out[R.L_off() + m] = a.sum() - t;
  }
  const auto eps = x.segment(R.e_off(), R.w);
  out.segment(R.E_off(), R.w) = -eps;
  for (int m = 0; m < R.M; ++m) {
    const VectorXd hu = R.HWS[m] * x.segment(R.u_off(m), R.k);
    for (int r = 0; r < R.w; ++r) out[R.soc_off(r) + 1 + m] = hu[r];
  }
  for (int r = 0; r < R.w; ++r) out[R.soc_off(r)] = -eps[r];
  return out;
}

VectorXd apply_GT(const Restricted& R, const VectorXd& z) {
  VectorXd out = VectorXd::Zero(R.n_x());
  VectorXd zm(R.w);
  for (int m = 0; m < R.M; ++m) {
    const auto zp = z.segment(R.P_off(m), R.k);
    const auto zn = z.segment(R.N_off(m), R.k);
    const double zl = z[R.L_off() + m];
    out[0] -= zl;
    out.segment(R.a_off(m), R.k) = -zp - zn + VectorXd::Constant(R.k, zl);
    for (int r = 0; r < R.w; ++r) zm[r] = z[R.soc_off(r) + 1 + m];
    out.segment(R.u_off(m), R.k) = zp - zn + R.HWS[m].transpose() * zm;
  }
  for (int r = 0; r < R.w; ++r)
    out[R.e_off() + r] = -z[R.E_off() + r] - z[R.soc_off(r)];
  return out;
}

VectorXd make_h(const Restricted& R) {
  VectorXd h = VectorXd::Zero(R.n_z());
  for (int r = 0; r < R.w; ++r) {
    h[R.soc_off(r)] = R.tau;
    for (int m = 0; m < R.M; ++m) h[R.soc_off(r) + 1 + m] = R.target_rows[r];
  }
  return h;
}

VectorXd make_c(const Restricted& R) {
  VectorXd c = VectorXd::Zero(R.n_x());
  c[0] = 1.0;
  c.segment(R.e_off(), R.w).setConstant(R.penalty);
  return c;
}

// ---- second-order cone algebra (blocks of length M + 1) ----

double jnorm_sq(const Eigen::Ref<const VectorXd>& v) {
  return v[0] * v[0] - v.tail(v.size() - 1).squaredNorm();
}

// x o y
VectorXd arrow_product(const Eigen::Ref<const VectorXd>& x, const Eigen::Ref<const VectorXd>& y) {
  VectorXd out(x.size());
  out[0] = x.dot(y);
  out.tail(x.size() - 1) = x[0] * y.tail(y.size() - 1) + y[0] * x.tail(x.size() - 1);
  return out;
}

// y with x o y = r.
VectorXd arrow_solve(const Eigen::Ref<const VectorXd>& x, const Eigen::Ref<const VectorXd>& r) {
  const Eigen::Index n = x.size() - 1;
  VectorXd y(x.size());
  y[0] = (x[0] * r[0] - x.tail(n).dot(r.tail(n))) / jnorm_sq(x);
  y.tail(n) = (r.tail(n) - y[0] * x.tail(n)) / x[0];
  return y;
}

// Largest alpha in [0, inf] with x + alpha d in the cone (x interior).
double soc_step(const Eigen::Ref<const VectorXd>& x, const Eigen::Ref<const VectorXd>& d) {
  const Eigen::Index n = x.size() - 1;
  const double a = d[0] * d[0] - d.tail(n).squaredNorm();
  const double b = x[0] * d[0] - x.tail(n).dot(d.tail(n));
  const double c = std::max(jnorm_sq(x), 0.0);
  double best = std::numeric_limits<double>::infinity();
  auto consider = [&](double root) {
    if (root > 0.0) best = std::min(best, root);
  };
  if (a == 0.0) {
    if (b < 0.0) consider(-c / (2.0 * b));
  } else {
    const double disc = b * b - a * c;
    if (disc >= 0.0) {
      const double sq = std::sqrt(disc);
      const double q = -(b + (b >= 0.0 ? sq : -sq));
      if (q != 0.0) {
        consider(q / a);
        consider(c / q);
      } else {
        consider(-b / a);
      }
    }
  }
  if (d[0] < 0.0) consider(-x[0] / d[0]);
  return best;
}

struct Scaling {
  VectorXd d;                      // orthant: W_ii = sqrt(s_i / z_i)
  std::vector<MatrixXd> W, Winv;   // per cone
  VectorXd lambda;                 // W z
};

Scaling nt_scaling(const Restricted& R, const VectorXd& s, const VectorXd& z) {
  Scaling sc;
  const int l = R.n_orth();
  sc.d = (s.head(l).array() / z.head(l).array()).sqrt();
  sc.lambda.resize(R.n_z());
  sc.lambda.head(l) = (s.head(l).array() * z.head(l).array()).sqrt();
  const int dim = R.M + 1;
  MatrixXd J = MatrixXd::Identity(dim, dim);
  J.bottomRightCorner(dim - 1, dim - 1) *= -1.0;
  sc.W.resize(R.w);
  sc.Winv.resize(R.w);
  for (int r = 0; r < R.w; ++r) {
    const auto sr = s.segment(R.soc_off(r), dim);
    const auto zr = z.segment(R.soc_off(r), dim);
    const double sn = std::sqrt(jnorm_sq(sr));
    const double zn = std::sqrt(jnorm_sq(zr));
    const VectorXd sbar = sr / sn;
    const VectorXd zbar = zr / zn;
    const double gamma = std::sqrt(0.5 * (1.0 + sbar.dot(zbar)));
    VectorXd wbar = sbar + J * zbar;
    wbar /= 2.0 * gamma;
    const double beta = std::sqrt(sn / zn);
    VectorXd v = wbar;
    v[0] += 1.0;
    v /= std::sqrt(2.0 * (wbar[0] + 1.0));
    sc.W[r] = beta * (2.0 * v * v.transpose() - J);
    const VectorXd Jv = J * v;
    sc.Winv[r] = (2.0 * Jv * Jv.transpose() - J) / beta;
    sc.lambda.segment(R.soc_off(r), dim) = sc.W[r] * zr;
  }
  return sc;
}

VectorXd scale_by_W(const Restricted& R, const Scaling& sc, const VectorXd& v, bool inverse) {
  VectorXd out(v.size());
  const int l = R.n_orth();
  if (inverse) {
    out.head(l) = v.head(l).cwiseQuotient(sc.d);
  } else {
    out.head(l) = v.head(l).cwiseProduct(sc.d);
  }
  const int dim = R.M + 1;
  for (int r = 0; r < R.w; ++r)
    out.segment(R.soc_off(r), dim) =
        (inverse ? sc.Winv[r] : sc.W[r]) * v.segment(R.soc_off(r), dim);
  return out;
}

// Solves [0 G'; G -W'W] [dx; dz] = [bx; bz] by eliminating a and eps and
// factoring the reduced system in (t, u).
class KktSolver {
 public:
  KktSolver(const Restricted& R, const VectorXd& orth_phi, const std::vector<MatrixXd>& soc_phi,
            const std::vector<MatrixXd>& soc_phi_inv)
      : R_(R), orth_phi_(orth_phi), soc_phi_(soc_phi), soc_phi_inv_(soc_phi_inv) {
    const int M = R.M, k = R.k, w = R.w;
    f_.resize(M);
    c_.resize(M);
    rho_.resize(M);
    psi_.resize(M);
    MatrixXd red = MatrixXd::Zero(1 + M * k, 1 + M * k);
    for (int m = 0; m < M; ++m) {
      const VectorXd phiP = orth_phi.segment(R.P_off(m), k);
      const VectorXd phiN = orth_phi.segment(R.N_off(m), k);
      const VectorXd d = phiP + phiN;
      f_[m] = d.cwiseInverse();
      c_[m] = phiN - phiP;
      psi_[m] = orth_phi[R.L_off() + m];
      rho_[m] = psi_[m] / (1.0 + psi_[m] * f_[m].sum());
      const VectorXd cf = c_[m].cwiseProduct(f_[m]);
      const int off = 1 + m * k;
      red(0, 0) += rho_[m];
      red.block(off, 0, k, 1) = rho_[m] * cf;
      red.block(0, off, 1, k) = rho_[m] * cf.transpose();
      // d - c^2 / d written without cancellation.
      red.block(off, off, k, k).diagonal() +=
          (4.0 * phiP.array() * phiN.array() / d.array()).matrix();
      red.block(off, off, k, k) += rho_[m] * cf * cf.transpose();
    }
    e_.resize(w);
    for (int r = 0; r < w; ++r) e_[r] = orth_phi[R.E_off() + r] + soc_phi[r](0, 0);
    MatrixXd scaled(w, k);
    for (int m = 0; m < M; ++m) {
      for (int mp = m; mp < M; ++mp) {
        for (int r = 0; r < w; ++r) {
          const MatrixXd& P = soc_phi[r];
          const double coef = P(1 + m, 1 + mp) - P(0, 1 + m) * P(0, 1 + mp) / e_[r];
          scaled.row(r) = coef * R.HWS[mp].row(r);
        }
        const MatrixXd block = R.HWS[m].transpose() * scaled;
        red.block(1 + m * k, 1 + mp * k, k, k) += block;
        if (mp != m) red.block(1 + mp * k, 1 + m * k, k, k) += block.transpose();
      }
    }
    llt_.compute(red);
    if (llt_.info() != Eigen::Success) {
      use_ldlt_ = true;
      ldlt_.compute(red);
      if (ldlt_.info() != Eigen::Success) throw NumericalError("group_dantzig: singular KKT system");
    }
  }

  // Two steps of iterative refinement against the unreduced system recover
  // the accuracy lost to the elimination when the scaling is extreme.
  void solve(const VectorXd& bx, const VectorXd& bz, VectorXd& dx, VectorXd& dz) const {
    solve_once(bx, bz, dx, dz);
    for (int step = 0; step < 2; ++step) {
      const VectorXd r1 = bx - apply_GT(R_, dz);
      const VectorXd r2 = bz - (apply_G(R_, dx) - apply_phi_inverse(dz));
      VectorXd cx, cz;
      solve_once(r1, r2, cx, cz);
      dx += cx;
      dz += cz;
    }
  }

 private:
  void solve_once(const VectorXd& bx, const VectorXd& bz, VectorXd& dx, VectorXd& dz) const {
    const Restricted& R = R_;
    const int M = R.M, k = R.k, w = R.w;
    const VectorXd phibz = apply_phi(bz);
    const VectorXd rhs = bx + apply_GT(R, phibz);

    VectorXd red(1 + M * k);
    red[0] = rhs[0];
    for (int m = 0; m < M; ++m) {
      const auto ra = rhs.segment(R.a_off(m), k);
      const double fra = f_[m].dot(ra);
      red[0] += rho_[m] * fra;
      VectorXd ainv = f_[m].cwiseProduct(ra) - rho_[m] * fra * f_[m];
      red.segment(1 + m * k, k) = rhs.segment(R.u_off(m), k) - c_[m].cwiseProduct(ainv);
    }
    VectorXd re(w);
    for (int r = 0; r < w; ++r) re[r] = rhs[R.e_off() + r] / e_[r];
    for (int m = 0; m < M; ++m) {
      VectorXd coef(w);
      for (int r = 0; r < w; ++r) coef[r] = soc_phi_[r](0, 1 + m) * re[r];
      red.segment(1 + m * k, k) += R.HWS[m].transpose() * coef;
    }
    const VectorXd sol = use_ldlt_ ? VectorXd(ldlt_.solve(red)) : VectorXd(llt_.solve(red));

    dx.resize(R.n_x());
    dx[0] = sol[0];
    VectorXd acc = rhs.segment(R.e_off(), w);
    for (int m = 0; m < M; ++m) {
      const auto du = sol.segment(1 + m * k, k);
      dx.segment(R.u_off(m), k) = du;
      const VectorXd v = rhs.segment(R.a_off(m), k) - c_[m].cwiseProduct(du) +
                         VectorXd::Constant(k, psi_[m] * sol[0]);
      dx.segment(R.a_off(m), k) = f_[m].cwiseProduct(v) - rho_[m] * f_[m].dot(v) * f_[m];
      const VectorXd hu = R.HWS[m] * du;
      for (int r = 0; r < w; ++r) acc[r] += soc_phi_[r](0, 1 + m) * hu[r];
    }
    for (int r = 0; r < w; ++r) dx[R.e_off() + r] = acc[r] / e_[r];
    dz = apply_phi(apply_G(R, dx) - bz);
  }

  VectorXd apply_phi_inverse(const VectorXd& v) const {
    VectorXd out(v.size());
    const int l = R_.n_orth();
    out.head(l) = v.head(l).cwiseQuotient(orth_phi_);
    const int dim = R_.M + 1;
    for (int r = 0; r < R_.w; ++r)
      out.segment(R_.soc_off(r), dim) = soc_phi_inv_[r] * v.segment(R_.soc_off(r), dim);
    return out;
  }

  VectorXd apply_phi(const VectorXd& v) const {
    VectorXd out(v.size());
    const int l = R_.n_orth();
    out.head(l) = orth_phi_.cwiseProduct(v.head(l));
    const int dim = R_.M + 1;
    for (int r = 0; r < R_.w; ++r)
      out.segment(R_.soc_off(r), dim) = soc_phi_[r] * v.segment(R_.soc_off(r), dim);
    return out;
  }

  const Restricted& R_;
  VectorXd orth_phi_;
  std::vector<MatrixXd> soc_phi_, soc_phi_inv_;
  std::vector<VectorXd> f_, c_;
  std::vector<double> rho_, psi_;
  VectorXd e_;
  Eigen::LLT<MatrixXd> llt_;
  Eigen::LDLT<MatrixXd> ldlt_;
  bool use_ldlt_ = false;
};

// Max step keeping v + alpha dv in the product cone.
double max_step(const Restricted& R, const VectorXd& v, const VectorXd& dv) {
  double best = std::numeric_limits<double>::infinity();
  const int l = R.n_orth();
  for (int i = 0; i < l; ++i)
    if (dv[i] < 0.0) best = std::min(best, -v[i] / dv[i]);
  const int dim = R.M + 1;
  for (int r = 0; r < R.w; ++r)
    best = std::min(best, soc_step(v.segment(R.soc_off(r), dim), dv.segment(R.soc_off(r), dim)));
  return best;
}

// Shifts v into the cone interior when needed.
void shift_interior(const Restricted& R, VectorXd& v) {
  const int l = R.n_orth();
  const int dim = R.M + 1;
  double worst = l > 0 ? -v.head(l).minCoeff() : -std::numeric_limits<double>::infinity();
  for (int r = 0; r < R.w; ++r) {
    const auto b = v.segment(R.soc_off(r), dim);
    worst = std::max(worst, b.tail(dim - 1).norm() - b[0]);
  }
  if (worst < -1e-8 * std::max(1.0, v.norm())) return;
  const double shift = 1.0 + std::max(worst, 0.0);
  v.head(l).array() += shift;
  for (int r = 0; r < R.w; ++r) v[R.soc_off(r)] += shift;
}

struct IpmResult {
  VectorXd x, z;
  int iterations = 0;
};

IpmResult solve_restricted(const Restricted& R, double gap_tol, int max_iter) {
  const VectorXd h = make_h(R);
  const VectorXd c = make_c(R);
  const int l = R.n_orth();
  const int dim = R.M + 1;

  VectorXd x, s, z;
  {
    const std::vector<MatrixXd> eye(R.w, MatrixXd::Identity(dim, dim));
    const KktSolver identity(R, VectorXd::Ones(l), eye, eye);
    VectorXd dz;
    identity.solve(VectorXd::Zero(R.n_x()), h, x, dz);
    s = -dz;
    VectorXd nu;
    identity.solve(-c, VectorXd::Zero(R.n_z()), nu, z);
  }
  shift_interior(R, s);
  shift_interior(R, z);

  const double c_scale = std::max(1.0, c.lpNorm<Eigen::Infinity>());
  const double h_scale = std::max(1.0, h.lpNorm<Eigen::Infinity>());
  IpmResult out;
  VectorXd best_x = x, best_z = z;
  double best_merit = std::numeric_limits<double>::infinity();
  int stalled = 0;
  for (int it = 0; it < max_iter; ++it) {
    const VectorXd rx = c + apply_GT(R, z);
    const VectorXd rz = s + apply_G(R, x) - h;
    const double gap = s.dot(z);
    const double pcost = c.dot(x);
    const double pres = rz.lpNorm<Eigen::Infinity>() / h_scale;
    const double dres = rx.lpNorm<Eigen::Infinity>() / c_scale;
    const double rel_gap = gap / std::max(1.0, std::abs(pcost));
    const double merit = std::max({pres, dres, rel_gap});
    if (merit < best_merit) {
      best_merit = merit;
      best_x = x;
      best_z = z;
      stalled = 0;
    } else if (++stalled >= 4) {
      break;
    }
    out.iterations = it;
    if (pres <= 1e-9 && dres <= 1e-9 && rel_gap <= gap_tol) break;

    const Scaling sc = nt_scaling(R, s, z);
    VectorXd orth_phi = sc.d.cwiseAbs2().cwiseInverse();
    std::vector<MatrixXd> soc_phi(R.w), soc_phi_inv(R.w);
    for (int r = 0; r < R.w; ++r) {
      soc_phi[r] = sc.Winv[r] * sc.Winv[r];
      soc_phi_inv[r] = sc.W[r] * sc.W[r];
    }
    const KktSolver kkt(R, orth_phi, soc_phi, soc_phi_inv);

    // Predictor.
    VectorXd dx_a, dz_a;
    kkt.solve(-rx, s - rz, dx_a, dz_a);
    const VectorXd ds_a = -rz - apply_G(R, dx_a);
    const double alpha_a = std::min({1.0, max_step(R, s, ds_a), max_step(R, z, dz_a)});
    const double mu = gap / R.degree();
    const double sigma = std::pow(1.0 - alpha_a, 3);

    // Corrector.
    const VectorXd wds = scale_by_W(R, sc, ds_a, true);
    const VectorXd wdz = scale_by_W(R, sc, dz_a, false);
    VectorXd kappa(R.n_z());
    const VectorXd& lam = sc.lambda;
    for (int i = 0; i < l; ++i) {
      const double rc = -lam[i] * lam[i] - wds[i] * wdz[i] + sigma * mu;
      kappa[i] = rc / lam[i];
    }
    for (int r = 0; r < R.w; ++r) {
      const int o = R.soc_off(r);
      VectorXd rc = -arrow_product(lam.segment(o, dim), lam.segment(o, dim)) -
                    arrow_product(wds.segment(o, dim), wdz.segment(o, dim));
      rc[0] += sigma * mu;
      kappa.segment(o, dim) = arrow_solve(lam.segment(o, dim), rc);
    }
    VectorXd dx, dz;
    kkt.solve(-rx, -rz - scale_by_W(R, sc, kappa, false), dx, dz);
    const VectorXd ds = -rz - apply_G(R, dx);
    const double alpha = std::min(1.0, 0.99 * std::min(max_step(R, s, ds), max_step(R, z, dz)));
    if (!(alpha > 1e-14)) break;
    x += alpha * dx;
    s += alpha * ds;
    z += alpha * dz;
  }
  {
    const VectorXd rx = c + apply_GT(R, z);
    const VectorXd rz = s + apply_G(R, x) - h;
    const double merit = std::max({rz.lpNorm<Eigen::Infinity>() / h_scale,
                                   rx.lpNorm<Eigen::Infinity>() / c_scale,
                                   s.dot(z) / std::max(1.0, std::abs(c.dot(x)))});
    if (merit < best_merit) {
      best_merit = merit;
      best_x = x;
      best_z = z;
    }
  }
  // The normal equations square the conditioning, so the last digits are
  // out of reach near the boundary; the best iterate is kept.
  if (best_merit > 1e-5)
    throw ConvergenceError("group_dantzig: interior-point method stalled", best_merit);
  out.x = std::move(best_x);
  out.z = std::move(best_z);
  return out;
}

void merge_sorted(std::vector<int>& into, const std::vector<int>& extra) {
  into.insert(into.end(), extra.begin(), extra.end());
  std::sort(into.begin(), into.end());
  into.erase(std::unique(into.begin(), into.end()), into.end());
}

}  // namespace

DantzigSolution group_dantzig_solve(const std::vector<MatrixXd>& H_blocks, int target, double tau,
                                    const DantzigOptions& options,
                                    DantzigActiveSet* working_set) {
  if (H_blocks.empty()) throw InputError("group_dantzig: no H blocks");
  if (!(tau > 0.0)) throw InputError("group_dantzig: tau must be positive");
  const int M = static_cast<int>(H_blocks.size());
  const int p = static_cast<int>(H_blocks.front().rows());
  for (const MatrixXd& H : H_blocks)
    if (H.rows() != p || H.cols() != p) throw InputError("group_dantzig: dimension mismatch");
  if (target < 0 || target >= p) throw InputError("group_dantzig: target index out of range");

  DantzigSolution sol;
  sol.u.assign(M, VectorXd::Zero(p));
  // u = 0 leaves only row `target` with norm sqrt(M); when that fits, zero
  // is the unique minimiser and the cone program would be degenerate.
  if (std::sqrt(static_cast<double>(M)) <= tau) {
    sol.status = DantzigStatus::kSolved;
    sol.violation = std::sqrt(static_cast<double>(M)) - tau;
    sol.rounds = 0;
    if (working_set != nullptr) *working_set = DantzigActiveSet{};
    return sol;
  }

  std::vector<int> cols{target};
  std::vector<int> rows{target};
  if (working_set != nullptr) {
    merge_sorted(cols, working_set->columns);
    merge_sorted(rows, working_set->rows);
  }
  // Keeping every working row among the columns makes H_{W,S} contain the
  // principal block H_{W,W}, so the restricted problem stays feasible
  // without slack whenever that block is nonsingular.
  merge_sorted(cols, rows);

  double penalty = options.penalty_start;
  const double row_tol = 1e-9 * std::max(1.0, tau);
  const double slack_tol = 1e-8 * std::max(1.0, tau);

  for (sol.rounds = 1; sol.rounds <= options.max_outer; ++sol.rounds) {
    Restricted R;
    R.M = M;
    R.k = static_cast<int>(cols.size());
    R.w = static_cast<int>(rows.size());
    R.tau = tau;
    R.penalty = penalty;
    R.target_rows = VectorXd::Zero(R.w);
    for (int r = 0; r < R.w; ++r) R.target_rows[r] = rows[r] == target ? 1.0 : 0.0;
    R.HWS.resize(M);
    for (int m = 0; m < M; ++m) R.HWS[m] = H_blocks[m](rows, cols);

    IpmResult ipm;
    try {
      ipm = solve_restricted(R, options.obj_tol * 0.1, options.max_ipm_iter);
    } catch (const Error&) {
      // Stalls and singular systems occur only at the edge of feasibility;
      // reported, not thrown.
      sol.status = DantzigStatus::kMaxIter;
      break;
    }
    sol.ipm_iterations += ipm.iterations;

    // Expand to full vectors and check every row.
    MatrixXd resid(p, M);
    for (int m = 0; m < M; ++m) {
      sol.u[m].setZero();
      for (int i = 0; i < R.k; ++i) sol.u[m][cols[i]] = ipm.x[R.u_off(m) + i];
      resid.col(m) = H_blocks[m](Eigen::all, cols) * ipm.x.segment(R.u_off(m), R.k);
      resid(target, m) -= 1.0;
    }
    const VectorXd row_norm = resid.rowwise().norm();
    std::vector<int> new_rows;
    std::vector<char> in_rows(p, 0);
    for (int r : rows) in_rows[r] = 1;
    for (int r = 0; r < p; ++r)
      if (!in_rows[r] && row_norm[r] > tau + row_tol) new_rows.push_back(r);

    // Reduced costs of columns outside S.
    MatrixXd zsoc(R.w, M);
    for (int r = 0; r < R.w; ++r)
      for (int m = 0; m < M; ++m) zsoc(r, m) = ipm.z[R.soc_off(r) + 1 + m];
    std::vector<int> new_cols;
    std::vector<char> in_cols(p, 0);
    for (int i : cols) in_cols[i] = 1;
    MatrixXd g(p, M);
    for (int m = 0; m < M; ++m) g.col(m) = H_blocks[m](Eigen::all, rows) * zsoc.col(m);
    const double price_tol = 1e-6 * std::max(1.0, g.lpNorm<Eigen::Infinity>());
    for (int i = 0; i < p; ++i) {
      if (in_cols[i]) continue;
      for (int m = 0; m < M; ++m) {
        if (std::abs(g(i, m)) > ipm.z[R.L_off() + m] + price_tol) {
          new_cols.push_back(i);
          break;
        }
      }
    }

    const double slack = R.w > 0 ? ipm.x.segment(R.e_off(), R.w).maxCoeff() : 0.0;
    sol.violation = row_norm.maxCoeff() - tau;
    sol.objective = 0.0;
    for (int m = 0; m < M; ++m) sol.objective = std::max(sol.objective, sol.u[m].lpNorm<1>());

    if (!new_rows.empty() || !new_cols.empty()) {
      merge_sorted(rows, new_rows);
      merge_sorted(cols, new_cols);
      merge_sorted(cols, new_rows);
      if (options.max_columns > 0 && static_cast<int>(cols.size()) > options.max_columns) {
        sol.status = DantzigStatus::kBudget;
        break;
      }
      continue;
    }
    if (slack > slack_tol) {
      if (penalty >= options.penalty_max) {
        sol.status = DantzigStatus::kInfeasible;
        break;
      }
      penalty = std::min(options.penalty_max, penalty * 10.0);
      continue;
    }
    sol.status = sol.violation <= options.feas_tol ? DantzigStatus::kSolved : DantzigStatus::kMaxIter;
    break;
  }
  if (sol.rounds > options.max_outer) sol.rounds = options.max_outer;
  if (working_set != nullptr) {
    working_set->columns = cols;
    working_set->rows = rows;
  }
  return sol;
}

std::vector<VectorXd> group_dantzig(const DantzigProblem& problem, const DantzigOptions& options) {
  DantzigSolution sol =
      group_dantzig_solve(problem.H_blocks, problem.target_index, problem.tau, options);
  if (sol.status == DantzigStatus::kInfeasible)
    throw InfeasibleTauError(problem.tau, problem.target_index);
  if (sol.status != DantzigStatus::kSolved)
    throw ConvergenceError("group_dantzig: working-set iterations exhausted", sol.violation);
  return std::move(sol.u);
}

DantzigBatchResult group_dantzig_batch(const std::vector<MatrixXd>& H_blocks,
                                       std::span<const int> targets, double tau,
                                       const DantzigOptions& options,
                                       std::vector<DantzigActiveSet>* working_sets) {
  const Eigen::Index M = static_cast<Eigen::Index>(H_blocks.size());
  if (M == 0) throw InputError("group_dantzig: no H blocks");
  const Eigen::Index p = H_blocks.front().rows();
  const int n = static_cast<int>(targets.size());
  if (working_sets != nullptr && static_cast<int>(working_sets->size()) != n)
    working_sets->assign(n, DantzigActiveSet{});

  DantzigBatchResult result;
  result.targets.assign(targets.begin(), targets.end());
  result.u.assign(M, MatrixXd::Zero(p, n));
  result.status.assign(n, DantzigStatus::kMaxIter);
  result.objective.assign(n, 0.0);
  result.violation.assign(n, 0.0);

  // Errors inside the parallel region are rethrown after it.
  std::vector<std::exception_ptr> errors(n);
#pragma omp parallel for schedule(dynamic)
  for (int c = 0; c < n; ++c) {
    try {
      DantzigActiveSet* ws = working_sets != nullptr ? &(*working_sets)[c] : nullptr;
      DantzigSolution sol = group_dantzig_solve(H_blocks, targets[c], tau, options, ws);
      result.status[c] = sol.status;
      result.objective[c] = sol.objective;
      result.violation[c] = sol.violation;
      for (Eigen::Index m = 0; m < M; ++m) result.u[m].col(c) = sol.u[m];
    } catch (...) {
      errors[c] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return result;
}

}  // namespace dsilt
