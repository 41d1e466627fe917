// Serial reference vs OpenMP kernels. Run with OMP_NUM_THREADS set to the
// thread count of interest; the serial variants ignore it.

#include <benchmark/benchmark.h>

#include <omp.h>

#include <random>
#include <vector>

#include "dsilt/kernels.hpp"
#include "dsilt/solvers.hpp"

using namespace dsilt;

namespace {

MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> z;
  MatrixXd A(r, c);
  for (Eigen::Index i = 0; i < A.size(); ++i) A.data()[i] = z(gen);
  return A;
}

VectorXd positive_weights(Eigen::Index n) { return random_matrix(n, 1, 3).col(0).cwiseAbs(); }

void BM_WeightedGramSerial(benchmark::State& state) {
  const MatrixXd X = random_matrix(state.range(0), state.range(1), 1);
  const VectorXd w = positive_weights(X.rows());
  for (auto _ : state) benchmark::DoNotOptimize(weighted_gram_serial(X, w, 1.0));
}

void BM_WeightedGramParallel(benchmark::State& state) {
  const MatrixXd X = random_matrix(state.range(0), state.range(1), 1);
  const VectorXd w = positive_weights(X.rows());
  for (auto _ : state) benchmark::DoNotOptimize(weighted_gram(X, w, 1.0));
}

void BM_QuadFormsSerial(benchmark::State& state) {
  const MatrixXd U = random_matrix(state.range(0), state.range(0), 2);
  const MatrixXd B = random_matrix(state.range(0), state.range(0), 4);
  const MatrixXd A = B * B.transpose();
  for (auto _ : state) benchmark::DoNotOptimize(column_quad_forms_serial(U, A));
}

void BM_QuadFormsParallel(benchmark::State& state) {
  const MatrixXd U = random_matrix(state.range(0), state.range(0), 2);
  const MatrixXd B = random_matrix(state.range(0), state.range(0), 4);
  const MatrixXd A = B * B.transpose();
  for (auto _ : state) benchmark::DoNotOptimize(column_quad_forms(U, A));
}

std::vector<MatrixXd> dantzig_blocks(Eigen::Index p) {
  std::vector<MatrixXd> H;
  for (int m = 0; m < 3; ++m) {
    const MatrixXd X = random_matrix(4 * p, p, 10 + m);
    H.push_back(X.transpose() * X / (4.0 * p));
  }
  return H;
}

// Targets one at a time on the calling thread.
void BM_DantzigTargetsSerial(benchmark::State& state) {
  const auto H = dantzig_blocks(state.range(0));
  std::vector<int> targets(16);
  for (int t = 0; t < 16; ++t) targets[t] = 1 + t;
  for (auto _ : state)
    for (int t : targets) benchmark::DoNotOptimize(group_dantzig_solve(H, t, 0.3));
}

// The same targets through the OpenMP batch.
void BM_DantzigTargetsParallel(benchmark::State& state) {
  const auto H = dantzig_blocks(state.range(0));
  std::vector<int> targets(16);
  for (int t = 0; t < 16; ++t) targets[t] = 1 + t;
  for (auto _ : state) benchmark::DoNotOptimize(group_dantzig_batch(H, targets, 0.3));
}

}  // namespace

BENCHMARK(BM_WeightedGramSerial)->Args({300, 200})->Args({2000, 200})->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_WeightedGramParallel)->Args({300, 200})->Args({2000, 200})->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_QuadFormsSerial)->Arg(200)->Arg(500)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_QuadFormsParallel)->Arg(200)->Arg(500)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_DantzigTargetsSerial)->Arg(60)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DantzigTargetsParallel)->Arg(60)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
