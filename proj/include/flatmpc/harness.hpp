#pragma once

#include <iosfwd>
#include <map>
#include <random>
#include <utility>

#include "flatmpc/nmpc_runtime.hpp"

namespace flatmpc {

/// Experiment definition: controller setup plus the sweep lists and output
/// options of the three experiment drivers.
struct ExperimentConfig {
  enum class Kind { regulation, lemniscate, runtime_sweep };
  Kind kind = Kind::regulation;

  NmpcConfig nmpc;
  VehicleParams vehicle;

  std::string out_dir = "out";
  std::uint64_t seed = 0;
  double duration = 6.0;
  bool timings = true;  ///< when off, wall-clock columns are written as zero

  Vector3 goal_p = Vector3(2.0, 2.0, 1.0);
  double goal_yaw = 1.57;
  double settle_tolerance = 0.25;
  double fail_distance = 10.0;
  double noise_pos = 0.0, noise_vel = 0.0, noise_rate = 0.0;

  std::vector<int> sweep_bins = {100, 50, 20, 10, 5};
  int reference_bins = 200;
  std::vector<double> sweep_horizons = {0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0};
  int sweep_samples = 500;
};

ExperimentConfig default_regulation_config();
ExperimentConfig default_lemniscate_config();
ExperimentConfig default_sweep_config();

/// Parses the key = value / [section] configuration format. Errors carry the
/// line number and offending text.
ExperimentConfig load_config(std::istream& in, const std::string& name);
ExperimentConfig load_config_file(const std::string& path);

struct ResultRow {
  int bins = 0;
  bool refined = false;
  double runtime_ms = 0.0;
  double err_trans = 0.0;
  double err_rot = 0.0;
  double roll = 0.0, pitch = 0.0, yaw_rate = 0.0, thrust = 0.0;
  std::string status = "ok";
  std::uint64_t seed = 0;
};

struct ResultsTable {
  std::vector<ResultRow> rows;

  bool any_failed() const;
};

struct RegulationOutcome {
  ResultsTable table;
  EpisodeLog reference;
  std::map<std::pair<int, bool>, EpisodeLog> episodes;
};

/// Pose-regulation suite: one closed-loop episode per (bins, refined) pair,
/// errors measured against a dense-mesh reference episode.
RegulationOutcome run_regulation_suite(const ExperimentConfig& cfg);

struct LemniscateOutcome {
  EpisodeLog standard, refined;
  Metrics metrics_standard, metrics_refined;
};

/// Figure-eight tracking in standard and refined modes.
LemniscateOutcome run_lemniscate(const ExperimentConfig& cfg);

struct SweepRow {
  double horizon = 0.0;
  int nodes = 0;
  bool refined = false;
  double mean_ms = 0.0, p95_ms = 0.0;
  double jacobian_ms = 0.0, linear_ms = 0.0, refine_ms = 0.0, other_ms = 0.0;
  int samples = 0;
};

struct SweepTable {
  std::vector<SweepRow> rows;
};

/// Repeated cold solves of randomized regulation problems across horizons;
/// reports per-solve timing statistics and a phase breakdown.
SweepTable run_runtime_sweep(const ExperimentConfig& cfg);

/// Flat reference of the tracking experiment with analytic derivatives.
FlatState lemniscate_reference(double t);

// CSV output. Floats are written with 6 significant digits; wall-clock
// columns are zeroed when `timings` is off so outputs are byte-stable.
std::string csv_number(double v);
void write_episode_csv(const EpisodeLog& log, const std::string& path, bool timings);
void write_results_csv(const ResultsTable& table, const std::string& path, bool timings);
void write_sweep_csv(const SweepTable& table, const std::string& path, bool timings);
void write_metrics_csv(const std::vector<std::pair<std::string, Metrics>>& rows, const std::string& path,
                       bool timings);

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

/// Fast self-contained invariant battery used by the `validate` subcommand.
std::vector<CheckResult> run_validation(std::uint64_t seed);

/// Randomized smooth flat trajectory away from the thrust singularity;
/// shared by the validation battery and tests.
FlatTrajectory random_flat_trajectory(std::mt19937_64& rng, const TimeMesh& mesh);

int cli_main(int argc, const char* const* argv);

}  // namespace flatmpc
