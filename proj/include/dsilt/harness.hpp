#pragma once

// Monte-Carlo experiment runner. Replication r draws everything from
// derive_key(scenario.seed, {r}); replications run on OpenMP threads and are
// reduced in index order, so outputs do not depend on the thread count.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dsilt/pipelines.hpp"
#include "dsilt/simgen.hpp"

namespace dsilt {

struct ExperimentConfig {
  ScenarioSpec scenario;
  std::vector<Method> methods = {Method::kDsilt};
  double alpha = 0.1;
  int replications = 1;
  int K = 2;
  int K_inner = 5;
  int H_points = 10;
  GridSettings grid;
  int tau_column_budget = -1;  // see PipelineConfig
  int threads = 0;             // 0: OpenMP default
  bool record_timing = true;   // false writes runtime 0 so outputs are byte-stable
  bool keep_statistics = false;  // keep per-hypothesis zeta in the records

  // Throws ConfigError.
  void validate() const;
};

std::uint64_t replication_seed(std::uint64_t seed, int replication);

struct ReplicationRecord {
  int replication = 0;
  Method method = Method::kDsilt;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double fdp = 0.0;
  double power = 0.0;
  int rejections = 0;
  double lambda = 0.0;
  std::vector<double> tau;
  double runtime_s = 0.0;
  std::vector<double> zeta;       // kept only on request
  std::vector<double> zeta_null;  // kept only on request
};

struct MetricsRow {
  std::string design;
  int p = 0;
  int s = 0;
  double mu = 0.0;
  int M = 0;
  int n_m = 0;
  std::string method;
  double alpha = 0.0;
  int reps = 0;  // successful replications
  double fdr = 0.0;
  double se_fdr = 0.0;
  double power = 0.0;
  double se_power = 0.0;
  double runtime_s = 0.0;

  friend bool operator==(const MetricsRow&, const MetricsRow&) = default;
};

struct ExperimentResult {
  std::vector<MetricsRow> rows;              // one per method
  std::vector<ReplicationRecord> records;    // replication-major, then method
  int failures() const;
};

ExperimentResult run_experiment(const ExperimentConfig& config);

// Mean and standard error of the mean (0 for fewer than two values).
struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};
MeanSe mean_and_se(const std::vector<double>& values);

// ---------------------------------------------------------------------------
// Outputs: metrics.csv, replications.csv, manifest.json, plot.gp. Files are
// rewritten, never appended. Throws InputError if the directory cannot be
// created or written.
inline constexpr const char* kMetricsHeader =
    "design,p,s,mu,M,n_m,method,alpha,reps,fdr,se_fdr,power,se_power,runtime_s";
inline constexpr const char* kCodeVersion = "dsilt 1.0.0";

void emit_outputs(const ExperimentResult& result, const ExperimentConfig& config,
                  const std::filesystem::path& dir);

std::string format_metrics_csv(const std::vector<MetricsRow>& rows);
std::vector<MetricsRow> parse_metrics_csv(const std::string& text);
std::string format_replications_csv(const std::vector<ReplicationRecord>& records);
std::string manifest_json(const ExperimentResult& result, const ExperimentConfig& config);
std::string plot_script();

// Reads the "scenario"/config part of a manifest.json document; missing keys
// keep their defaults. Throws ConfigError on unknown values or bad types.
ExperimentConfig experiment_from_json(const std::string& text);

}  // namespace dsilt
