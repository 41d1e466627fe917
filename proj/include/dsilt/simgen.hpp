#pragma once

// Synthetic studies: an intercept column plus either a Gaussian AR(1) chain
// or a binary hidden-Markov chain across covariates, heterogeneous
// coefficients on a shared support, and GLM outcomes.
//
// Streams: study m of a scenario draws its design from
// derive_key(seed, {kDesign, m}) and its outcomes from
// derive_key(seed, {kOutcomes, m}); coefficients use
// derive_key(seed, {kCoefficients}).

#include <cstdint>
#include <string>
#include <vector>

#include "dsilt/glm.hpp"

namespace dsilt {

enum class DesignKind { kAr1, kHmm };

std::string to_string(DesignKind d);
DesignKind design_from_string(const std::string& s);  // "ar1" | "hmm"

struct ScenarioSpec {
  DesignKind design = DesignKind::kAr1;
  double rho = 0.5;          // AR(1) lag-one correlation, [0, 1)
  double switch_prob = 0.2;  // HMM transition and emission flip probability, (0, 1)
  int M = 3;
  int n_m = 300;
  int p = 200;  // including the intercept column
  int s = 10;   // signals, placed at coordinates 1..s (0-based)
  double mu = 0.3;
  Family family = Family::kLogistic;
  std::uint64_t seed = 1;

  // Throws ConfigError.
  void validate() const;
};

struct GroundTruth {
  std::vector<VectorXd> beta_true;  // M vectors of length p
  std::vector<int> support;         // nonzero groups, ascending; empty when mu = 0
  VectorXd psi;                     // s signs
  MatrixXd nu;                      // M x s perturbations

  // Hypotheses are the coordinates 1..p-1; these partition them.
  std::vector<int> null_coordinates(int p) const;
  std::vector<int> alt_coordinates() const { return support; }
};

std::vector<MatrixXd> gen_design(const ScenarioSpec& spec);
GroundTruth gen_coefficients(const ScenarioSpec& spec);
std::vector<VectorXd> gen_outcomes(const std::vector<MatrixXd>& X, const GroundTruth& truth,
                                   Family family, std::uint64_t seed);

struct SimulatedStudies {
  std::vector<Dataset> datasets;
  GroundTruth truth;
};

SimulatedStudies simulate(const ScenarioSpec& spec);

}  // namespace dsilt
