#include "dsilt/harness.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>
#include <omp.h>

#include "dsilt/errors.hpp"
#include "dsilt/rng.hpp"

namespace dsilt {

void ExperimentConfig::validate() const {
  scenario.validate();
  if (methods.empty()) throw ConfigError("experiment: no methods");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("experiment: alpha must lie in (0, 1)");
  if (replications < 1) throw ConfigError("experiment: replications must be at least 1");
  if (K < 2 || K % 2 != 0) throw ConfigError("experiment: K must be even and at least 2");
  if (K_inner < 2) throw ConfigError("experiment: K' must be at least 2");
  if (H_points < 1) throw ConfigError("experiment: H must be at least 1");
  if (grid.points < 1 || !(grid.lo > 0.0) || !(grid.hi >= grid.lo))
    throw ConfigError("experiment: grid needs points >= 1 and 0 < lo <= hi");
  if (threads < 0) throw ConfigError("experiment: threads must be non-negative");
  if (scenario.p < 4) throw ConfigError("experiment: p must be at least 4 (q = p - 1 >= 3)");
  if (scenario.n_m < K * K_inner) throw ConfigError("experiment: n_m must be at least K * K'");
}

std::uint64_t replication_seed(std::uint64_t seed, int replication) {
  return derive_key(seed, {static_cast<std::uint64_t>(replication)});
}

int ExperimentResult::failures() const {
  int f = 0;
  for (const auto& r : records) f += r.ok ? 0 : 1;
  return f;
}

MeanSe mean_and_se(const std::vector<double>& values) {
  MeanSe out;
  if (values.empty()) return out;
  double sum = 0.0;
  for (double v : values) sum += v;
  out.mean = sum / static_cast<double>(values.size());
  if (values.size() < 2) return out;
  double ss = 0.0;
  for (double v : values) ss += (v - out.mean) * (v - out.mean);
  out.se = std::sqrt(ss / static_cast<double>(values.size() - 1) / static_cast<double>(values.size()));
  return out;
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  config.validate();
  const int R = config.replications;
  const int nm = static_cast<int>(config.methods.size());
  std::vector<ReplicationRecord> records(static_cast<std::size_t>(R * nm));

  const int threads = config.threads > 0 ? config.threads : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic) num_threads(threads)
  for (int r = 0; r < R; ++r) {
    ScenarioSpec spec = config.scenario;
    spec.seed = replication_seed(config.scenario.seed, r);
    for (int mi = 0; mi < nm; ++mi) {
      ReplicationRecord& rec = records[static_cast<std::size_t>(r * nm + mi)];
      rec.replication = r;
      rec.method = config.methods[mi];
      rec.seed = spec.seed;
    }
    SimulatedStudies sim;
    try {
      sim = simulate(spec);
    } catch (const std::exception& e) {
      for (int mi = 0; mi < nm; ++mi) records[static_cast<std::size_t>(r * nm + mi)].error = e.what();
      continue;
    }
    const std::vector<int> nulls = sim.truth.null_coordinates(spec.p);
    PipelineConfig pc;
    pc.family = spec.family;
    pc.K = config.K;
    pc.K_inner = config.K_inner;
    pc.seed = spec.seed;
    pc.grid = config.grid;
    pc.H_points = config.H_points;
    pc.alpha = config.alpha;
    pc.tau_column_budget = config.tau_column_budget;
    for (int mi = 0; mi < nm; ++mi) {
      ReplicationRecord& rec = records[static_cast<std::size_t>(r * nm + mi)];
      const auto t0 = std::chrono::steady_clock::now();
      try {
        const PipelineResult res = run_pipeline(rec.method, sim.datasets, pc);
        const ErrorMetrics em = fdp_fdr_metrics(res.rejected, nulls, sim.truth.support);
        rec.fdp = em.fdp;
        rec.power = em.power;
        rec.rejections = static_cast<int>(res.rejected.size());
        rec.lambda = res.lambda;
        rec.tau = res.tau;
        if (config.keep_statistics) {
          for (const auto& t : res.tests) rec.zeta.push_back(t.zeta);
          rec.zeta_null = res.zeta_null;
        }
        rec.ok = true;
      } catch (const std::exception& e) {
        rec.error = e.what();
      }
      if (config.record_timing)
        rec.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
  }

  ExperimentResult out;
  out.records = std::move(records);
  for (int mi = 0; mi < nm; ++mi) {
    std::vector<double> fdp, power, runtime;
    for (int r = 0; r < R; ++r) {
      const ReplicationRecord& rec = out.records[static_cast<std::size_t>(r * nm + mi)];
      if (!rec.ok) continue;
      fdp.push_back(rec.fdp);
      power.push_back(rec.power);
      runtime.push_back(rec.runtime_s);
    }
    const ScenarioSpec& s = config.scenario;
    MetricsRow row;
    row.design = to_string(s.design);
    row.p = s.p;
    row.s = s.s;
    row.mu = s.mu;
    row.M = s.M;
    row.n_m = s.n_m;
    row.method = to_string(config.methods[mi]);
    row.alpha = config.alpha;
    row.reps = static_cast<int>(fdp.size());
    const MeanSe f = mean_and_se(fdp), pw = mean_and_se(power);
    row.fdr = f.mean;
    row.se_fdr = f.se;
    row.power = pw.mean;
    row.se_power = pw.se;
    row.runtime_s = mean_and_se(runtime).mean;
    out.rows.push_back(row);
  }
  return out;
}

// ---------------------------------------------------------------------------
namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += (c == '\n' || c == '\r') ? ' ' : c;
  }
  return out + "\"";
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(line);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

double parse_double(const std::string& s) {
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size()) throw InputError("metrics.csv: bad number '" + s + "'");
  return v;
}

int parse_int(const std::string& s) {
  std::size_t used = 0;
  const int v = std::stoi(s, &used);
  if (used != s.size()) throw InputError("metrics.csv: bad integer '" + s + "'");
  return v;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write " + path.string());
  out << text;
  if (!out) throw InputError("cannot write " + path.string());
}

}  // namespace

std::string format_metrics_csv(const std::vector<MetricsRow>& rows) {
  std::string out = std::string(kMetricsHeader) + "\n";
  for (const MetricsRow& r : rows) {
    out += r.design + "," + std::to_string(r.p) + "," + std::to_string(r.s) + "," + num(r.mu) + "," +
           std::to_string(r.M) + "," + std::to_string(r.n_m) + "," + r.method + "," + num(r.alpha) +
           "," + std::to_string(r.reps) + "," + num(r.fdr) + "," + num(r.se_fdr) + "," + num(r.power) +
           "," + num(r.se_power) + "," + num(r.runtime_s) + "\n";
  }
  return out;
}

std::vector<MetricsRow> parse_metrics_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) throw InputError("metrics.csv: unexpected header");
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> f = split(line, ',');
    if (f.size() != 14) throw InputError("metrics.csv: expected 14 fields");
    MetricsRow r;
    r.design = f[0];
    r.p = parse_int(f[1]);
    r.s = parse_int(f[2]);
    r.mu = parse_double(f[3]);
    r.M = parse_int(f[4]);
    r.n_m = parse_int(f[5]);
    r.method = f[6];
    r.alpha = parse_double(f[7]);
    r.reps = parse_int(f[8]);
    r.fdr = parse_double(f[9]);
    r.se_fdr = parse_double(f[10]);
    r.power = parse_double(f[11]);
    r.se_power = parse_double(f[12]);
    r.runtime_s = parse_double(f[13]);
    rows.push_back(r);
  }
  return rows;
}

std::string format_replications_csv(const std::vector<ReplicationRecord>& records) {
  std::string out = "replication,method,seed,status,fdp,power,rejections,lambda,tau,runtime_s,error\n";
  for (const ReplicationRecord& r : records) {
    std::string tau;
    for (std::size_t i = 0; i < r.tau.size(); ++i) tau += (i ? ";" : "") + num(r.tau[i]);
    out += std::to_string(r.replication) + "," + to_string(r.method) + "," + std::to_string(r.seed) + "," +
           (r.ok ? "ok" : "failed") + "," + num(r.fdp) + "," + num(r.power) + "," +
           std::to_string(r.rejections) + "," + num(r.lambda) + "," + tau + "," + num(r.runtime_s) + "," +
           csv_quote(r.error) + "\n";
  }
  return out;
}

std::string manifest_json(const ExperimentResult& result, const ExperimentConfig& config) {
  using nlohmann::json;
  const ScenarioSpec& s = config.scenario;
  json j;
  j["code_version"] = kCodeVersion;
  j["seed"] = s.seed;
  j["scenario"] = {{"design", to_string(s.design)},
                   {"rho", s.rho},
                   {"switch_prob", s.switch_prob},
                   {"M", s.M},
                   {"n_m", s.n_m},
                   {"p", s.p},
                   {"s", s.s},
                   {"mu", s.mu},
                   {"family", to_string(s.family)},
                   {"seed", s.seed}};
  json methods = json::array();
  for (Method m : config.methods) methods.push_back(to_string(m));
  j["methods"] = methods;
  j["alpha"] = config.alpha;
  j["replications"] = config.replications;
  j["K"] = config.K;
  j["K_inner"] = config.K_inner;
  j["H_points"] = config.H_points;
  j["grid"] = {{"points", config.grid.points}, {"lo", config.grid.lo}, {"hi", config.grid.hi}};
  j["tau_column_budget"] = config.tau_column_budget;
  j["threads"] = config.threads;
  j["record_timing"] = config.record_timing;
  j["keep_statistics"] = config.keep_statistics;
  json failures = json::array();
  for (const auto& r : result.records)
    if (!r.ok)
      failures.push_back({{"replication", r.replication}, {"method", to_string(r.method)}, {"error", r.error}});
  j["failures"] = failures;
  return j.dump(2) + "\n";
}

std::string plot_script() {
  return R"(# gnuplot -e "outfile='metrics.png'" plot.gp
if (!exists("outfile")) outfile = 'metrics.png'
set datafile separator ','
set terminal pngcairo size 1000,420
set output outfile
set multiplot layout 1,2
set xlabel 'mu'
set ylabel 'empirical FDR'
set yrange [0:*]
plot for [m in "dsilt oneshot ilma"] 'metrics.csv' using 4:(strcol(7) eq m ? $10 : 1/0):11 \
     with yerrorlines title m
set ylabel 'empirical power'
set yrange [0:1]
plot for [m in "dsilt oneshot ilma"] 'metrics.csv' using 4:(strcol(7) eq m ? $12 : 1/0):13 \
     with yerrorlines title m
unset multiplot
)";
}

ExperimentConfig experiment_from_json(const std::string& text) {
  using nlohmann::json;
  ExperimentConfig c;
  try {
    const json j = json::parse(text);
    if (j.contains("scenario")) {
      const json& s = j.at("scenario");
      ScenarioSpec& sc = c.scenario;
      if (s.contains("design")) sc.design = design_from_string(s.at("design").get<std::string>());
      if (s.contains("rho")) sc.rho = s.at("rho").get<double>();
      if (s.contains("switch_prob")) sc.switch_prob = s.at("switch_prob").get<double>();
      if (s.contains("M")) sc.M = s.at("M").get<int>();
      if (s.contains("n_m")) sc.n_m = s.at("n_m").get<int>();
      if (s.contains("p")) sc.p = s.at("p").get<int>();
      if (s.contains("s")) sc.s = s.at("s").get<int>();
      if (s.contains("mu")) sc.mu = s.at("mu").get<double>();
      if (s.contains("family")) sc.family = family_from_string(s.at("family").get<std::string>());
      if (s.contains("seed")) sc.seed = s.at("seed").get<std::uint64_t>();
    }
    if (j.contains("methods")) {
      c.methods.clear();
      for (const auto& m : j.at("methods")) c.methods.push_back(method_from_string(m.get<std::string>()));
    }
    if (j.contains("alpha")) c.alpha = j.at("alpha").get<double>();
    if (j.contains("replications")) c.replications = j.at("replications").get<int>();
    if (j.contains("K")) c.K = j.at("K").get<int>();
    if (j.contains("K_inner")) c.K_inner = j.at("K_inner").get<int>();
    if (j.contains("H_points")) c.H_points = j.at("H_points").get<int>();
    if (j.contains("grid")) {
      const json& g = j.at("grid");
      if (g.contains("points")) c.grid.points = g.at("points").get<int>();
      if (g.contains("lo")) c.grid.lo = g.at("lo").get<double>();
      if (g.contains("hi")) c.grid.hi = g.at("hi").get<double>();
    }
    if (j.contains("tau_column_budget")) c.tau_column_budget = j.at("tau_column_budget").get<int>();
    if (j.contains("threads")) c.threads = j.at("threads").get<int>();
    if (j.contains("record_timing")) c.record_timing = j.at("record_timing").get<bool>();
    if (j.contains("keep_statistics")) c.keep_statistics = j.at("keep_statistics").get<bool>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("experiment file: ") + e.what());
  } catch (const Error& e) {
    throw ConfigError(std::string("experiment file: ") + e.what());
  }
  return c;
}

void emit_outputs(const ExperimentResult& result, const ExperimentConfig& config,
                  const std::filesystem::path& dir) {
  if (result.rows.empty()) throw InputError("emit_outputs: no rows");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw InputError("cannot create " + dir.string() + ": " + ec.message());
  write_file(dir / "metrics.csv", format_metrics_csv(result.rows));
  write_file(dir / "replications.csv", format_replications_csv(result.records));
  write_file(dir / "manifest.json", manifest_json(result, config));
  write_file(dir / "plot.gp", plot_script());
}

}  // namespace dsilt
