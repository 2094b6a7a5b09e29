#include <cmath>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "flatmpc/errors.hpp"
#include "flatmpc/harness.hpp"

namespace flatmpc {

namespace {

struct CommonOptions {
  std::string config;
  std::string out;
  std::string refine = "both";  // on | off | both
  int bins = -1;
  double horizon = -1.0;
  long long seed = -1;
  double duration = -1.0;
  std::string timings;
  int samples = -1;
};

void add_common(CLI::App* cmd, CommonOptions& opt) {
  cmd->add_option("--config", opt.config, "configuration file (key = value sections)");
  cmd->add_option("--out", opt.out, "output directory");
  cmd->add_option("--refine", opt.refine, "time-mesh refinement: on, off or both")
      ->check(CLI::IsMember({"on", "off", "both"}));
  cmd->add_option("--n", opt.bins, "number of mesh intervals N");
  cmd->add_option("--horizon", opt.horizon, "prediction horizon t_f [s]");
  cmd->add_option("--seed", opt.seed, "random seed");
  cmd->add_option("--duration", opt.duration, "episode duration [s]");
  cmd->add_option("--timings", opt.timings, "write wall-clock columns: on or off")
      ->check(CLI::IsMember({"on", "off"}));
  cmd->add_option("--samples", opt.samples, "solves per sweep point (bench)");
}

ExperimentConfig resolve_config(const CommonOptions& opt, ExperimentConfig fallback) {
  ExperimentConfig cfg = opt.config.empty() ? std::move(fallback) : load_config_file(opt.config);
  if (!opt.out.empty()) cfg.out_dir = opt.out;
  if (opt.bins >= 0) {
    cfg.nmpc.bins = opt.bins;
    cfg.sweep_bins = {opt.bins};
  }
  if (opt.horizon > 0) cfg.nmpc.horizon = opt.horizon;
  if (opt.seed >= 0) cfg.seed = static_cast<std::uint64_t>(opt.seed);
  if (opt.duration > 0) cfg.duration = opt.duration;
  if (!opt.timings.empty()) cfg.timings = (opt.timings == "on");
  if (opt.samples > 0) cfg.sweep_samples = opt.samples;
  std::filesystem::create_directories(cfg.out_dir);
  return cfg;
}

std::string episode_name(int bins, bool refined) {
  return "reg_N" + std::to_string(bins) + (refined ? "_tm" : "_std") + ".csv";
}

int do_regulate(const CommonOptions& opt) {
  ExperimentConfig cfg = resolve_config(opt, default_regulation_config());
  if (opt.refine == "on") {
    cfg.nmpc.refine_enabled = true;
  } else if (opt.refine == "off") {
    cfg.nmpc.refine_enabled = false;
  }

  RegulationOutcome outcome = run_regulation_suite(cfg);
  if (opt.refine != "both") {
    const bool keep = (opt.refine == "on");
    std::erase_if(outcome.table.rows, [&](const ResultRow& r) { return r.refined != keep; });
  }

  const std::filesystem::path dir(cfg.out_dir);
  write_results_csv(outcome.table, (dir / "regulation_results.csv").string(), cfg.timings);
  write_episode_csv(outcome.reference, (dir / "reg_reference.csv").string(), cfg.timings);
  for (const auto& [key, log] : outcome.episodes) {
    if (opt.refine == "on" && !key.second) continue;
    if (opt.refine == "off" && key.second) continue;
    write_episode_csv(log, (dir / episode_name(key.first, key.second)).string(), cfg.timings);
  }

  std::cout << "N,refined,err_trans,err_rot,status\n";
  for (const auto& r : outcome.table.rows) {
    std::cout << r.bins << ',' << (r.refined ? 1 : 0) << ',' << csv_number(r.err_trans) << ','
              << csv_number(r.err_rot) << ',' << r.status << '\n';
  }
  std::cout << "results written to " << cfg.out_dir << '\n';
  return outcome.table.any_failed() ? 1 : 0;
}

int do_track(const CommonOptions& opt) {
  ExperimentConfig cfg = resolve_config(opt, default_lemniscate_config());
  const LemniscateOutcome outcome = run_lemniscate(cfg);

  const std::filesystem::path dir(cfg.out_dir);
  write_episode_csv(outcome.standard, (dir / "lemniscate_std.csv").string(), cfg.timings);
  write_episode_csv(outcome.refined, (dir / "lemniscate_tm.csv").string(), cfg.timings);
  write_metrics_csv({{"standard", outcome.metrics_standard}, {"refined", outcome.metrics_refined}},
                    (dir / "lemniscate_metrics.csv").string(), cfg.timings);

  std::cout << "standard: err_trans " << csv_number(outcome.metrics_standard.err_trans) << " m, err_rot "
            << csv_number(outcome.metrics_standard.err_rot) << " rad"
            << (outcome.standard.failed ? " (failed)" : "") << '\n';
  std::cout << "refined:  err_trans " << csv_number(outcome.metrics_refined.err_trans) << " m, err_rot "
            << csv_number(outcome.metrics_refined.err_rot) << " rad" << (outcome.refined.failed ? " (failed)" : "")
            << '\n';
  std::cout << "results written to " << cfg.out_dir << '\n';

  bool failed = outcome.refined.failed;
  if (opt.refine != "on") failed = failed || outcome.standard.failed;
  return failed ? 1 : 0;
}

int do_bench(const CommonOptions& opt) {
  ExperimentConfig cfg = resolve_config(opt, default_sweep_config());
  const SweepTable table = run_runtime_sweep(cfg);
  const std::filesystem::path dir(cfg.out_dir);
  write_sweep_csv(table, (dir / "runtime_sweep.csv").string(), cfg.timings);
  std::cout << "horizon,nodes,refined,mean_ms\n";
  for (const auto& r : table.rows) {
    std::cout << csv_number(r.horizon) << ',' << r.nodes << ',' << (r.refined ? 1 : 0) << ','
              << csv_number(r.mean_ms) << '\n';
  }
  std::cout << "results written to " << cfg.out_dir << '\n';
  return 0;
}

int do_validate(const CommonOptions& opt) {
  std::uint64_t seed = 0;
  if (!opt.config.empty()) seed = load_config_file(opt.config).seed;
  if (opt.seed >= 0) seed = static_cast<std::uint64_t>(opt.seed);
  const auto results = run_validation(seed);
  bool all_pass = true;
  for (const auto& r : results) {
    std::cout << (r.pass ? "[PASS] " : "[FAIL] ") << r.name << ": " << r.detail << '\n';
    all_pass = all_pass && r.pass;
  }
  return all_pass ? 0 : 1;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"Flat-output NMPC with adaptive time-mesh refinement"};
  app.require_subcommand(1);

  CommonOptions opt;
  CLI::App* regulate = app.add_subcommand("regulate", "pose-regulation suite against a dense-mesh reference");
  CLI::App* track = app.add_subcommand("track", "lemniscate tracking, standard and refined");
  CLI::App* bench = app.add_subcommand("bench", "runtime sweep over prediction horizons");
  CLI::App* validate = app.add_subcommand("validate", "run the invariant battery");
  for (CLI::App* cmd : {regulate, track, bench, validate}) add_common(cmd, opt);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (regulate->parsed()) return do_regulate(opt);
    if (track->parsed()) return do_track(opt);
    if (bench->parsed()) return do_bench(opt);
    if (validate->parsed()) return do_validate(opt);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace flatmpc
