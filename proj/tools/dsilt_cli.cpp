// dsilt simulate       Monte-Carlo experiment -> metrics.csv, replications.csv,
//                      manifest.json, plot.gp
// dsilt protocol-demo  one protocol run over a chosen transport; every wire
//                      frame ends up under --dir
//
// Exit codes: 0 success, 1 configuration or runtime error, 2 when some
// replications failed (outputs are still written).

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "dsilt/errors.hpp"
#include "dsilt/federation.hpp"
#include "dsilt/harness.hpp"
#include "dsilt/simgen.hpp"
#include "dsilt/transport.hpp"

namespace {

using namespace dsilt;

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_frames(const std::filesystem::path& dir, const std::map<Slot, Bytes>& frames) {
  for (const auto& [slot, bytes] : frames) {
    const auto path = dir / slot_path(slot);
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw InputError("cannot write " + path.string());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributed simultaneous inference for integrative GLMs"};
  app.require_subcommand(1);

  // simulate
  ExperimentConfig cfg;
  std::string design = "ar1", family = "logistic", config_file, out_dir = "out";
  std::vector<std::string> methods = {"dsilt"};
  bool no_timing = false;
  auto* sim = app.add_subcommand("simulate", "run a Monte-Carlo experiment");
  sim->add_option("--config", config_file, "experiment JSON (manifest.json format); flags override it");
  auto* o_design = sim->add_option("--design", design, "ar1 | hmm");
  auto* o_p = sim->add_option("--p", cfg.scenario.p, "covariates including the intercept");
  auto* o_s = sim->add_option("--s", cfg.scenario.s, "signal count");
  auto* o_mu = sim->add_option("--mu", cfg.scenario.mu, "signal strength");
  auto* o_M = sim->add_option("--M", cfg.scenario.M, "studies");
  auto* o_n = sim->add_option("--n", cfg.scenario.n_m, "rows per study");
  auto* o_reps = sim->add_option("--reps", cfg.replications, "replications");
  auto* o_alpha = sim->add_option("--alpha", cfg.alpha, "FDR level");
  auto* o_method = sim->add_option("--method", methods, "dsilt | oneshot | ilma (comma-separated list allowed)")
                       ->delimiter(',');
  auto* o_K = sim->add_option("--K", cfg.K, "cross-fitting folds (even)");
  auto* o_Kp = sim->add_option("--Kp", cfg.K_inner, "inner folds");
  auto* o_H = sim->add_option("--H", cfg.H_points, "grid points of the tau criterion");
  auto* o_seed = sim->add_option("--seed", cfg.scenario.seed, "base seed");
  auto* o_threads = sim->add_option("--threads", cfg.threads, "worker threads (0: OpenMP default)");
  auto* o_family = sim->add_option("--family", family, "logistic | gaussian");
  auto* o_budget = sim->add_option("--tau-budget", cfg.tau_column_budget,
                                   "Dantzig working-set budget in the tau search (<0 auto, 0 none)");
  sim->add_option("--out", out_dir, "output directory");
  sim->add_flag("--no-timing", no_timing, "write runtime 0 so outputs are byte-stable");

  // protocol-demo
  std::string transport_kind = "memory", demo_dir = "protocol-demo";
  ScenarioSpec demo;
  demo.p = 20;
  demo.n_m = 100;
  demo.s = 3;
  demo.mu = 0.5;
  auto* pd = app.add_subcommand("protocol-demo", "run the two-round protocol and dump its frames");
  pd->add_option("--transport", transport_kind, "memory | files")->check(CLI::IsMember({"memory", "files"}));
  pd->add_option("--dir", demo_dir, "frame directory");
  pd->add_option("--p", demo.p, "covariates including the intercept");
  pd->add_option("--n", demo.n_m, "rows per study");
  pd->add_option("--M", demo.M, "studies");
  pd->add_option("--seed", demo.seed, "seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sim) {
      if (!config_file.empty()) {
        const ExperimentConfig file = experiment_from_json(read_text(config_file));
        // Options given on the command line win over the file.
        auto keep = [](CLI::Option* o, auto& field, const auto& from_file) {
          if (o->count() == 0) field = from_file;
        };
        keep(o_p, cfg.scenario.p, file.scenario.p);
        keep(o_s, cfg.scenario.s, file.scenario.s);
        keep(o_mu, cfg.scenario.mu, file.scenario.mu);
        keep(o_M, cfg.scenario.M, file.scenario.M);
        keep(o_n, cfg.scenario.n_m, file.scenario.n_m);
        keep(o_seed, cfg.scenario.seed, file.scenario.seed);
        keep(o_reps, cfg.replications, file.replications);
        keep(o_alpha, cfg.alpha, file.alpha);
        keep(o_K, cfg.K, file.K);
        keep(o_Kp, cfg.K_inner, file.K_inner);
        keep(o_H, cfg.H_points, file.H_points);
        keep(o_threads, cfg.threads, file.threads);
        keep(o_budget, cfg.tau_column_budget, file.tau_column_budget);
        if (o_design->count() == 0) design = to_string(file.scenario.design);
        if (o_family->count() == 0) family = to_string(file.scenario.family);
        if (o_method->count() == 0) {
          methods.clear();
          for (Method m : file.methods) methods.push_back(to_string(m));
        }
        cfg.scenario.rho = file.scenario.rho;
        cfg.scenario.switch_prob = file.scenario.switch_prob;
        cfg.grid = file.grid;
        cfg.record_timing = file.record_timing;
      }
      cfg.scenario.design = design_from_string(design);
      cfg.scenario.family = family_from_string(family);
      cfg.methods.clear();
      for (const auto& m : methods) cfg.methods.push_back(method_from_string(m));
      if (no_timing) cfg.record_timing = false;

      const ExperimentResult result = run_experiment(cfg);
      emit_outputs(result, cfg, out_dir);
      for (const MetricsRow& r : result.rows)
        std::printf("%-8s reps=%d fdr=%.4f (se %.4f) power=%.4f (se %.4f) runtime=%.2fs\n", r.method.c_str(),
                    r.reps, r.fdr, r.se_fdr, r.power, r.se_power, r.runtime_s);
      for (const ReplicationRecord& rec : result.records)
        if (!rec.ok)
          std::fprintf(stderr, "replication %d (%s) failed: %s\n", rec.replication,
                       to_string(rec.method).c_str(), rec.error.c_str());
      return result.failures() > 0 ? 2 : 0;
    }

    // protocol-demo
    const SimulatedStudies studies = simulate(demo);
    ProtocolConfig pc;
    pc.seed = demo.seed;
    const std::filesystem::path dir(demo_dir);
    std::filesystem::create_directories(dir);
    ProtocolResult res;
    std::map<Slot, Bytes> frames;
    if (transport_kind == "files") {
      FileTransport ft(dir);
      res = run_protocol(studies.datasets, pc, ft);
    } else {
      MemoryTransport mt;
      res = run_protocol(studies.datasets, pc, mt);
      write_frames(dir, mt.frames());
    }
    std::printf("transport=%s lambda=%.6g", transport_kind.c_str(), res.lambda);
    for (std::size_t m = 0; m < res.lambda_m.size(); ++m) std::printf(" lambda_%zu=%.6g", m, res.lambda_m[m]);
    std::printf("\n");
    for (const auto& entry : std::filesystem::recursive_directory_iterator(dir))
      if (entry.is_regular_file())
        std::printf("%-28s %8ju bytes\n", std::filesystem::relative(entry.path(), dir).string().c_str(),
                    static_cast<std::uintmax_t>(entry.file_size()));
    return 0;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
