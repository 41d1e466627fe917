#include "dsilt/simgen.hpp"

#include <cmath>

#include "dsilt/errors.hpp"
#include "dsilt/rng.hpp"

namespace dsilt {

std::string to_string(DesignKind d) { return d == DesignKind::kAr1 ? "ar1" : "hmm"; }

DesignKind design_from_string(const std::string& s) {
  if (s == "ar1") return DesignKind::kAr1;
  if (s == "hmm") return DesignKind::kHmm;
  throw ConfigError("unknown design '" + s + "' (expected ar1 or hmm)");
}

void ScenarioSpec::validate() const {
  if (!(rho >= 0.0 && rho < 1.0)) throw ConfigError("rho must lie in [0, 1)");
  if (!(switch_prob > 0.0 && switch_prob < 1.0)) throw ConfigError("switch_prob must lie in (0, 1)");
  if (M < 1) throw ConfigError("M must be at least 1");
  if (n_m < 1) throw ConfigError("n_m must be at least 1");
  if (p < 2) throw ConfigError("p must be at least 2");
  if (s < 0 || s >= p) throw ConfigError("s must lie in [0, p)");
  if (!std::isfinite(mu) || mu < 0.0) throw ConfigError("mu must be finite and non-negative");
}

std::vector<int> GroundTruth::null_coordinates(int p) const {
  std::vector<int> out;
  std::size_t next = 0;
  for (int j = 1; j < p; ++j) {
    if (next < support.size() && support[next] == j) {
      ++next;
      continue;
    }
    out.push_back(j);
  }
  return out;
}

std::vector<MatrixXd> gen_design(const ScenarioSpec& spec) {
  spec.validate();
  std::vector<MatrixXd> out;
  const double innovation = std::sqrt(1.0 - spec.rho * spec.rho);
  for (int m = 0; m < spec.M; ++m) {
    CounterRng rng(derive_key(spec.seed, {static_cast<std::uint64_t>(StreamTag::kDesign),
                                          static_cast<std::uint64_t>(m)}));
    MatrixXd X(spec.n_m, spec.p);
    for (int i = 0; i < spec.n_m; ++i) {
      X(i, 0) = 1.0;
      if (spec.design == DesignKind::kAr1) {
        double prev = rng.normal();
        X(i, 1) = prev;
        for (int j = 2; j < spec.p; ++j) {
          prev = spec.rho * prev + innovation * rng.normal();
          X(i, j) = prev;
        }
      } else {
        bool hidden = rng.bernoulli(0.5);
        for (int j = 1; j < spec.p; ++j) {
          if (j > 1 && rng.bernoulli(spec.switch_prob)) hidden = !hidden;
          const bool flip = rng.bernoulli(spec.switch_prob);
          X(i, j) = (hidden != flip) ? 1.0 : 0.0;
        }
      }
    }
    out.push_back(std::move(X));
  }
  return out;
}

GroundTruth gen_coefficients(const ScenarioSpec& spec) {
  spec.validate();
  CounterRng rng(derive_key(spec.seed, {static_cast<std::uint64_t>(StreamTag::kCoefficients)}));
  GroundTruth t;
  t.psi.resize(spec.s);
  for (int j = 0; j < spec.s; ++j) t.psi[j] = rng.bernoulli(0.5) ? 1.0 : -1.0;
  t.nu.resize(spec.M, spec.s);
  for (int m = 0; m < spec.M; ++m)
    for (int j = 0; j < spec.s; ++j) t.nu(m, j) = 0.5 * spec.mu * rng.normal();
  for (int m = 0; m < spec.M; ++m) {
    VectorXd b = VectorXd::Zero(spec.p);
    for (int j = 0; j < spec.s; ++j) b[j + 1] = spec.mu * (t.nu(m, j) + 1.0) * t.psi[j];
    t.beta_true.push_back(std::move(b));
  }
  // The support is the set of nonzero groups, so mu = 0 gives a complete null.
  for (int j = 1; j <= spec.s; ++j) {
    bool nonzero = false;
    for (const VectorXd& b : t.beta_true) nonzero = nonzero || b[j] != 0.0;
    if (nonzero) t.support.push_back(j);
  }
  return t;
}

std::vector<VectorXd> gen_outcomes(const std::vector<MatrixXd>& X, const GroundTruth& truth,
                                   Family family, std::uint64_t seed) {
  if (X.size() != truth.beta_true.size()) throw InputError("gen_outcomes: study count mismatch");
  std::vector<VectorXd> out;
  for (std::size_t m = 0; m < X.size(); ++m) {
    if (X[m].cols() != truth.beta_true[m].size()) throw InputError("gen_outcomes: p mismatch");
    CounterRng rng(derive_key(seed, {static_cast<std::uint64_t>(StreamTag::kOutcomes),
                                     static_cast<std::uint64_t>(m)}));
    const VectorXd theta = X[m] * truth.beta_true[m];
    VectorXd y(theta.size());
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
      if (family == Family::kGaussian) {
        y[i] = theta[i] + rng.normal();
      } else {
        y[i] = rng.bernoulli(link_eval(family, theta[i]).dphi) ? 1.0 : 0.0;
      }
    }
    out.push_back(std::move(y));
  }
  return out;
}

SimulatedStudies simulate(const ScenarioSpec& spec) {
  SimulatedStudies sim;
  std::vector<MatrixXd> X = gen_design(spec);
  sim.truth = gen_coefficients(spec);
  std::vector<VectorXd> y = gen_outcomes(X, sim.truth, spec.family, spec.seed);
  for (int m = 0; m < spec.M; ++m) {
    Dataset d;
    d.X = std::move(X[m]);
    d.y = std::move(y[m]);
    d.study_id = m;
    sim.datasets.push_back(std::move(d));
  }
  return sim;
}

}  // namespace dsilt
