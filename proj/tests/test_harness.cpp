#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "flatmpc/errors.hpp"
#include "flatmpc/harness.hpp"

using namespace flatmpc;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream f(path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

const char* kExampleConfig = R"(# pose regulation at desk scale
[experiment]
kind = regulation
seed = 7
duration = 4.5
timings = off

[vehicle]
mass = 1.4
inertia = 0.03 0.04 0.09

[nmpc]
horizon = 1.5
bins = 8
dt_ctrl = 0.1
refine = on

[weights]
position = 12
anchor = 5000

[solver]
max_iterations = 12

[refine]
err_threshold = 2e-5
initial_nodes = 4

[regulation]
goal = 1 1 0.5 0.8

[sweep]
bins = 8 4
reference_bins = 16
samples = 3
)";

}  // namespace

TEST_CASE("config files load with defaults and overrides") {
  std::istringstream in(kExampleConfig);
  const ExperimentConfig cfg = load_config(in, "example.cfg");
  CHECK(cfg.kind == ExperimentConfig::Kind::regulation);
  CHECK(cfg.seed == 7);
  CHECK(cfg.duration == doctest::Approx(4.5));
  CHECK_FALSE(cfg.timings);
  CHECK(cfg.vehicle.mass == doctest::Approx(1.4));
  CHECK(cfg.vehicle.inertia(2, 2) == doctest::Approx(0.09));
  CHECK(cfg.nmpc.horizon == doctest::Approx(1.5));
  CHECK(cfg.nmpc.bins == 8);
  CHECK(cfg.nmpc.weights.q(0, 0) == doctest::Approx(12.0));
  CHECK(cfg.nmpc.weights.q(3, 3) == doctest::Approx(1.0));  // untouched default
  CHECK(cfg.nmpc.weights.anchor == doctest::Approx(5000.0));
  CHECK(cfg.nmpc.solver.max_iterations == 12);
  CHECK(cfg.nmpc.refine.err_threshold == doctest::Approx(2e-5));
  CHECK(cfg.goal_p == Vector3(1.0, 1.0, 0.5));
  CHECK(cfg.goal_yaw == doctest::Approx(0.8));
  CHECK(cfg.sweep_bins == std::vector<int>{8, 4});
  CHECK(cfg.reference_bins == 16);
  CHECK(cfg.sweep_samples == 3);
}

TEST_CASE("config errors carry line context") {
  auto expect_error_at = [](const std::string& text, int line) {
    std::istringstream in(text);
    try {
      load_config(in, "bad.cfg");
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("bad.cfg:" + std::to_string(line)) != std::string::npos);
    }
  };
  expect_error_at("[nmpc\nbins = 4\n", 1);                       // unterminated section
  expect_error_at("[nmpc]\nbins == 4x\n", 2);                    // bad number
  expect_error_at("[nmpc]\nbinz = 4\n", 2);                      // unknown key
  expect_error_at("bins = 4\n", 1);                              // key outside a section
  expect_error_at("[nmpc]\n\n\nrefine = maybe\n", 4);            // bad flag
  expect_error_at("[experiment]\nkind = dance\n", 2);            // unknown kind
}

TEST_CASE("lemniscate reference values and derivatives") {
  const FlatState r0 = lemniscate_reference(0.0);
  CHECK((r0.p - Vector3(0.0, 0.0, std::sin(5.0) / 3.0)).norm() < 1e-15);
  CHECK(r0.gamma == 0.0);
  CHECK((r0.d1 - Vector3(1.0, 1.0, std::cos(5.0) / 3.0)).norm() < 1e-15);

  // derivatives are consistent with finite differences of the curve
  const double h = 1e-6;
  for (double t : {0.3, 2.1, 5.9}) {
    const FlatState a = lemniscate_reference(t - h);
    const FlatState b = lemniscate_reference(t + h);
    const FlatState c = lemniscate_reference(t);
    CHECK(((b.p - a.p) / (2 * h) - c.d1).norm() < 1e-6);
    CHECK(((b.d1 - a.d1) / (2 * h) - c.d2).norm() < 1e-6);
    CHECK(((b.d3 - a.d3) / (2 * h) - c.d4).norm() < 1e-6);
    CHECK((b.gamma - a.gamma) / (2 * h) == doctest::Approx(c.dgamma1).epsilon(1e-6));
  }
}

TEST_CASE("csv numbers use six significant digits") {
  CHECK(csv_number(0.123456789) == "0.123457");
  CHECK(csv_number(15.2449) == "15.2449");
  CHECK(csv_number(1.0) == "1");
  CHECK(csv_number(-3.5e-7) == "-3.5e-07");
}

TEST_CASE("episode CSVs are byte-stable and timings can be zeroed") {
  ControlTask task;
  task.goal = hover_state(Vector3(0.4, 0.2, 0.3), 0.1);
  NmpcConfig cfg;
  cfg.horizon = 1.0;
  cfg.bins = 4;
  cfg.dt_ctrl = 0.1;
  cfg.refine.initial_nodes = 2;
  EpisodeOptions opts;
  opts.duration = 0.5;
  opts.settle_tolerance.reset();
  const EpisodeLog log = run_closed_loop(task, cfg, VehicleParams{}, opts);

  const auto dir = std::filesystem::temp_directory_path() / "flatmpc_test_csv";
  std::filesystem::create_directories(dir);
  const std::string p1 = (dir / "a.csv").string();
  const std::string p2 = (dir / "b.csv").string();
  write_episode_csv(log, p1, false);
  write_episode_csv(log, p2, false);
  const std::string c1 = slurp(p1);
  CHECK(c1 == slurp(p2));
  CHECK(c1.find("solve_ms") != std::string::npos);
  // zeroed wall-clock column: every data row ends in ",0"
  std::istringstream rows(c1);
  std::string line;
  std::getline(rows, line);  // status
  std::getline(rows, line);  // header
  while (std::getline(rows, line)) {
    CHECK(line.substr(line.size() - 2) == ",0");
  }
}

TEST_CASE("results table CSV schema") {
  ResultsTable table;
  ResultRow row;
  row.bins = 20;
  row.refined = true;
  row.err_trans = 0.0703;
  row.status = "ok";
  table.rows.push_back(row);
  const auto dir = std::filesystem::temp_directory_path() / "flatmpc_test_csv";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "results.csv").string();
  write_results_csv(table, path, true);
  const std::string content = slurp(path);
  CHECK(content.find("N,refined,runtime_ms,err_trans,err_rot,roll_ref,pitch_ref,yaw_rate,thrust,status,seed") == 0);
  CHECK(content.find("20,1,") != std::string::npos);
  CHECK_FALSE(table.any_failed());
  table.rows.front().status = "fail";
  CHECK(table.any_failed());
}

TEST_CASE("cli reports usage and config errors with the documented codes") {
  const char* help[] = {"flatmpc", "--help"};
  CHECK(cli_main(2, help) == 0);

  const char* nocmd[] = {"flatmpc"};
  CHECK(cli_main(1, nocmd) == 2);

  const char* badflag[] = {"flatmpc", "regulate", "--frobnicate"};
  CHECK(cli_main(3, badflag) == 2);

  const auto dir = std::filesystem::temp_directory_path() / "flatmpc_test_cli";
  std::filesystem::create_directories(dir);
  const std::string bad_cfg = (dir / "bad.cfg").string();
  std::ofstream(bad_cfg) << "[nmpc]\nbins = soup\n";
  const std::string flag = "--config";
  const char* badcfg[] = {"flatmpc", "validate", flag.c_str(), bad_cfg.c_str()};
  CHECK(cli_main(4, badcfg) == 2);
}

TEST_CASE("random flat trajectories stay clear of the thrust singularity") {
  std::mt19937_64 rng(5);
  const VehicleParams params;
  for (int trial = 0; trial < 30; ++trial) {
    const FlatTrajectory traj = random_flat_trajectory(rng, TimeMesh::uniform(2.0, 6));
    for (const auto& node : traj.nodes) {
      CHECK_NOTHROW(recover(node, params));
    }
  }
}
