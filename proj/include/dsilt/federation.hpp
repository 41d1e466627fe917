#pragma once

// Algorithm roles. A DataComputer owns one study's rows and never hands
// them out; an AnalysisComputer sees only payload types. run_protocol wires
// M data computers and one analysis computer through a Transport:
//
//   R1 (every m, k) -> barrier -> lambda selection, integration per k
//   -> broadcast (every m, k) -> barrier -> R2 (every m, k) -> barrier

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "dsilt/glm.hpp"
#include "dsilt/payloads.hpp"
#include "dsilt/solvers.hpp"
#include "dsilt/transport.hpp"
#include "dsilt/tuning.hpp"

namespace dsilt {

// ---------------------------------------------------------------------------
// Moments. These are the per-node computations; the protocol calls them
// inside DataComputer and ILMA calls them directly on pooled data.

// Moments of the rows of X at beta: xi = mean(x (y - phi' + phi'' theta)),
// H = mean(phi'' x x'), and when requested J = mean(x x' (y - phi')^2).
struct RowMoments {
  VectorXd xi;
  MatrixXd H;
  MatrixXd J;
};
RowMoments row_moments(const MatrixXd& X, const VectorXd& y, const VectorXd& beta, Family family,
                       bool with_J);

// Cross-fitted moments of each inner cell k' of I_{-k}, evaluated at a
// LASSO fit on I_{-k} \ I_{-k,k'}. Fits are warm-started in cell order.
std::vector<RowMoments> dc_round1_cells(const Dataset& data, const FoldPartition& partition, int k,
                                        double lambda_m, Family family);

// Round-1 summary on D_{-k}: the average of the K' cell moments.
Round1Summary round1_from_cells(int study, int fold, std::int64_t n_used,
                                const std::vector<RowMoments>& cells);
Round1Summary dc_round1(const Dataset& data, const FoldPartition& partition, int k,
                        double lambda_m, Family family);

// Weighted moments on fold k at the broadcast estimate, plus J.
Round2Summary dc_round2(const Dataset& data, const FoldPartition& partition, int k,
                        const BroadcastCoefficients& broadcast, Family family);

// The integrative problem of one fold; weights |I_{-k}^(m)| / sum.
GroupQuadProblem assemble_problem(std::span<const Round1Summary> summaries, double lambda);

BroadcastCoefficients ac_integrate(std::span<const Round1Summary> summaries, double lambda,
                                   const CoefficientBlock* warm_start = nullptr);

// ---------------------------------------------------------------------------
class DataComputer {
 public:
  DataComputer(Dataset data, int K, int K_inner, std::uint64_t seed, Family family);

  int study() const { return data_.study_id; }
  std::int64_t n() const { return data_.n(); }
  Eigen::Index p() const { return data_.p(); }

  // Local cross-validation over this study's grid.
  double tune_lambda(const GridSettings& grid);
  void set_lambda(double lambda_m) { lambda_m_ = lambda_m; }
  double lambda() const { return lambda_m_; }

  Round1Summary round1(int k) const;
  Round2Summary round2(const BroadcastCoefficients& broadcast) const;

 private:
  Dataset data_;
  FoldPartition partition_;
  Family family_;
  std::uint64_t seed_;
  double lambda_m_ = 0.0;
};

class AnalysisComputer {
 public:
  explicit AnalysisComputer(int M, int K) : M_(M), K_(K) {}

  // Study sizes recovered from round-1 sizes: sum_k |I_{-k}| = (K-1) n_m.
  std::vector<std::int64_t> study_sizes(const std::vector<std::vector<Round1Summary>>& r1) const;

  GicSelection select_lambda(std::span<const Round1Summary> fold_summaries,
                             std::span<const double> grid) const;
  BroadcastCoefficients integrate(std::span<const Round1Summary> fold_summaries,
                                  double lambda) const;

 private:
  int M_;
  int K_;
};

// ---------------------------------------------------------------------------
struct ProtocolConfig {
  Family family = Family::kLogistic;
  int K = 2;
  int K_inner = 5;
  std::uint64_t seed = 0;
  GridSettings grid;
  std::vector<double> lambda_m;   // empty: each DC cross-validates
  std::optional<double> lambda;   // empty: GIC on fold 0
};

struct ProtocolResult {
  std::vector<double> lambda_m;
  double lambda = 0.0;
  GicReport gic;
  std::vector<std::int64_t> n_per_study;
  std::vector<CoefficientBlock> beta_tilde;            // per fold, p x M
  std::vector<std::vector<Round2Summary>> round2;      // [k][m]
};

ProtocolResult run_protocol(const std::vector<Dataset>& datasets, const ProtocolConfig& config,
                            Transport& transport);

// Seed of study m's fold partition and of its local cross-validation.
std::uint64_t partition_seed(std::uint64_t seed, int study);
std::uint64_t cv_seed(std::uint64_t seed, int study);

}  // namespace dsilt
