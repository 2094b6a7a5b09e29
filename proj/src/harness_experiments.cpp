#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "flatmpc/errors.hpp"
#include "flatmpc/harness.hpp"

namespace flatmpc {

namespace {

NmpcConfig config_for_bins(const ExperimentConfig& cfg, int bins, bool refined) {
  NmpcConfig nm = cfg.nmpc;
  nm.bins = bins;
  nm.refine_enabled = refined;
  nm.refine.initial_nodes = std::min(nm.refine.initial_nodes, bins - 1);
  // Dense meshes are offline-grade measurement runs; the per-cycle iteration
  // budget follows the mesh density (the real-time budget binds at N <= 20).
  nm.solver.max_iterations *= std::clamp(bins / 20, 1, 4);
  return nm;
}

EpisodeOptions episode_options(const ExperimentConfig& cfg, const RigidBodyState& x0) {
  EpisodeOptions opts;
  opts.duration = cfg.duration;
  opts.x0 = x0;
  opts.seed = cfg.seed;
  opts.noise_pos = cfg.noise_pos;
  opts.noise_vel = cfg.noise_vel;
  opts.noise_rate = cfg.noise_rate;
  opts.fail_distance = cfg.fail_distance;
  opts.settle_tolerance = cfg.settle_tolerance;
  return opts;
}

}  // namespace

bool ResultsTable::any_failed() const {
  return std::any_of(rows.begin(), rows.end(), [](const ResultRow& r) { return r.status != "ok"; });
}

RegulationOutcome run_regulation_suite(const ExperimentConfig& cfg) {
  RegulationOutcome out;

  ControlTask task;
  task.goal = hover_state(cfg.goal_p, cfg.goal_yaw);

  // The vehicle takes off from the plane z = 0; descending below it is the
  // crash the simulated environment would record.
  EpisodeOptions opts = episode_options(cfg, RigidBodyState{});
  opts.ground_z = -0.1;

  // Dense-mesh unrefined run used as the error reference for every row.
  out.reference = run_closed_loop(task, config_for_bins(cfg, cfg.reference_bins, false), cfg.vehicle, opts);

  for (int bins : cfg.sweep_bins) {
    for (bool refined : {false, true}) {
      const EpisodeLog log = run_closed_loop(task, config_for_bins(cfg, bins, refined), cfg.vehicle, opts);
      const Metrics m = compute_metrics(log, out.reference);
      ResultRow row;
      row.bins = bins;
      row.refined = refined;
      row.runtime_ms = m.mean_runtime_ms;
      row.err_trans = m.err_trans;
      row.err_rot = m.err_rot;
      row.roll = m.mean_roll;
      row.pitch = m.mean_pitch;
      row.yaw_rate = m.mean_yaw_rate;
      row.thrust = m.mean_thrust;
      row.status = log.failed ? "fail" : "ok";
      row.seed = cfg.seed;
      out.table.rows.push_back(row);
      out.episodes.emplace(std::make_pair(bins, refined), log);
    }
  }
  return out;
}

FlatState lemniscate_reference(double t) {
  FlatState f;
  const double s2 = std::sin(t / 2), c2 = std::cos(t / 2);
  const double st = std::sin(t), ct = std::cos(t);
  const double s5 = std::sin(t + 5), c5 = std::cos(t + 5);
  f.p = Vector3(2 * s2, st, s5 / 3);
  f.d1 = Vector3(c2, ct, c5 / 3);
  f.d2 = Vector3(-s2 / 2, -st, -s5 / 3);
  f.d3 = Vector3(-c2 / 4, -ct, -c5 / 3);
  f.d4 = Vector3(s2 / 8, st, s5 / 3);
  f.gamma = std::sin(t / 8);
  f.dgamma1 = std::cos(t / 8) / 8;
  f.dgamma2 = -std::sin(t / 8) / 64;
  return f;
}

LemniscateOutcome run_lemniscate(const ExperimentConfig& cfg) {
  ControlTask task;
  task.reference = lemniscate_reference;

  const RigidBodyState x0 = recover_state(lemniscate_reference(0.0), cfg.vehicle);
  const EpisodeOptions opts = episode_options(cfg, x0);

  LemniscateOutcome out;
  out.standard = run_closed_loop(task, config_for_bins(cfg, cfg.nmpc.bins, false), cfg.vehicle, opts);
  out.refined = run_closed_loop(task, config_for_bins(cfg, cfg.nmpc.bins, true), cfg.vehicle, opts);
  out.metrics_standard = compute_metrics(out.standard);
  out.metrics_refined = compute_metrics(out.refined);
  return out;
}

SweepTable run_runtime_sweep(const ExperimentConfig& cfg) {
  SweepTable out;

  // Warm receding-horizon cycles: the controller runs in closed loop around a
  // moderate repositioning task and every re-plan after the initialization
  // solve is one timed sample.
  ControlTask task;
  task.goal = hover_state(Vector3(0.8, 0.6, 0.4), 0.6);

  for (size_t hi = 0; hi < cfg.sweep_horizons.size(); ++hi) {
    const double t_f = cfg.sweep_horizons[hi];
    const int bins = std::max<int>(2, static_cast<int>(std::llround(t_f / 0.2)));
    for (bool refined : {false, true}) {
      NmpcConfig nm = config_for_bins(cfg, bins, refined);
      nm.horizon = t_f;
      nm.solver.max_iterations = cfg.nmpc.solver.max_iterations;  // no density scaling here
      // Fixed per-cycle work: every sample spends the full real-time budget,
      // so the sweep isolates the per-iteration cost scaling.
      nm.solver.step_tol = 0.0;
      nm.solver.cost_tol = 0.0;
      nm.dt_ctrl = cfg.nmpc.dt_ctrl;
      NmpcController controller(task, nm, cfg.vehicle);

      std::mt19937_64 rng(cfg.seed * 1000003ull + hi * 1009ull + (refined ? 7ull : 0ull));
      std::normal_distribution<double> randn(0.0, 1.0);

      // Stationary operation: start on the goal and keep the re-plans alive
      // with small state excitation, so per-cycle difficulty is independent
      // of the horizon length.
      RigidBodyState x = recover_state(*task.goal, cfg.vehicle);
      std::vector<double> totals;
      SweepRow row;
      row.horizon = t_f;
      row.nodes = bins + 1;
      row.refined = refined;

      const int cycles = cfg.sweep_samples + 1;
      for (int i = 0; i < cycles; ++i) {
        const double t = i * nm.dt_ctrl;
        try {
          const CycleResult res = controller.cycle(x, t);
          if (i > 0) {  // skip the boosted initialization solve
            totals.push_back(res.solve_ms);
            row.jacobian_ms += res.optimize.jacobian_ms;
            row.linear_ms += res.optimize.linear_solve_ms;
            row.refine_ms += res.refine.total_ms;
          }
          x = step_fine(x, res.applied, nm.dt_ctrl, cfg.vehicle);
        } catch (const SolveFailure&) {
          controller.reset();
        }
        for (int a = 0; a < 3; ++a) {
          x.p[a] += 0.005 * randn(rng);
          x.v[a] += 0.02 * randn(rng);
          x.omega[a] += 0.02 * randn(rng);
        }
      }
      row.samples = static_cast<int>(totals.size());
      if (row.samples > 0) {
        const double n = static_cast<double>(row.samples);
        double sum = 0;
        for (double v : totals) sum += v;
        row.mean_ms = sum / n;
        row.jacobian_ms /= n;
        row.linear_ms /= n;
        row.refine_ms /= n;
        row.other_ms = row.mean_ms - row.jacobian_ms - row.linear_ms - row.refine_ms;
        std::sort(totals.begin(), totals.end());
        row.p95_ms = totals[static_cast<size_t>(0.95 * (totals.size() - 1))];
      }
      out.rows.push_back(row);
    }
  }
  return out;
}

std::string csv_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

void write_episode_csv(const EpisodeLog& log, const std::string& path, bool timings) {
  std::ofstream f(path);
  if (!f) throw ConfigError(path + ": cannot open for writing");
  f << "# status=" << (log.failed ? "fail" : "ok");
  if (log.failed) f << " reason=\"" << log.failure_reason << "\"";
  f << "\n";
  f << "t,px,py,pz,vx,vy,vz,yaw,wx,wy,wz,ref_px,ref_py,ref_pz,ref_yaw,"
       "thrust,tau_x,tau_y,tau_z,roll_ref,pitch_ref,yaw_rate_ref,cost,ls_iters,nodes_added,solved,new_solve,solve_ms\n";
  for (const auto& r : log.records) {
    const double yaw = yaw_from_rotation(r.state.R);
    f << csv_number(r.t) << ',' << csv_number(r.state.p.x()) << ',' << csv_number(r.state.p.y()) << ','
      << csv_number(r.state.p.z()) << ',' << csv_number(r.state.v.x()) << ',' << csv_number(r.state.v.y()) << ','
      << csv_number(r.state.v.z()) << ',' << csv_number(yaw) << ',' << csv_number(r.state.omega.x()) << ','
      << csv_number(r.state.omega.y()) << ',' << csv_number(r.state.omega.z()) << ',' << csv_number(r.ref_p.x())
      << ',' << csv_number(r.ref_p.y()) << ',' << csv_number(r.ref_p.z()) << ',' << csv_number(r.ref_yaw) << ','
      << csv_number(r.input.thrust) << ',' << csv_number(r.input.tau.x()) << ',' << csv_number(r.input.tau.y()) << ','
      << csv_number(r.input.tau.z()) << ',' << csv_number(r.roll_ref) << ',' << csv_number(r.pitch_ref) << ','
      << csv_number(r.yaw_rate_ref) << ',' << csv_number(r.cost) << ',' << r.ls_iterations << ',' << r.nodes_added
      << ',' << (r.solved ? 1 : 0) << ',' << (r.new_solve ? 1 : 0) << ','
      << csv_number(timings ? r.solve_ms : 0.0) << '\n';
  }
}

void write_results_csv(const ResultsTable& table, const std::string& path, bool timings) {
  std::ofstream f(path);
  if (!f) throw ConfigError(path + ": cannot open for writing");
  f << "N,refined,runtime_ms,err_trans,err_rot,roll_ref,pitch_ref,yaw_rate,thrust,status,seed\n";
  for (const auto& r : table.rows) {
    f << r.bins << ',' << (r.refined ? 1 : 0) << ',' << csv_number(timings ? r.runtime_ms : 0.0) << ','
      << csv_number(r.err_trans) << ',' << csv_number(r.err_rot) << ',' << csv_number(r.roll) << ','
      << csv_number(r.pitch) << ',' << csv_number(r.yaw_rate) << ',' << csv_number(r.thrust) << ',' << r.status << ','
      << r.seed << '\n';
  }
}

void write_sweep_csv(const SweepTable& table, const std::string& path, bool timings) {
  std::ofstream f(path);
  if (!f) throw ConfigError(path + ": cannot open for writing");
  f << "horizon,nodes,refined,samples,mean_ms,p95_ms,jacobian_ms,linear_ms,refine_ms,other_ms\n";
  for (const auto& r : table.rows) {
    auto t = [&](double v) { return csv_number(timings ? v : 0.0); };
    f << csv_number(r.horizon) << ',' << r.nodes << ',' << (r.refined ? 1 : 0) << ',' << r.samples << ','
      << t(r.mean_ms) << ',' << t(r.p95_ms) << ',' << t(r.jacobian_ms) << ',' << t(r.linear_ms) << ','
      << t(r.refine_ms) << ',' << t(r.other_ms) << '\n';
  }
}

void write_metrics_csv(const std::vector<std::pair<std::string, Metrics>>& rows, const std::string& path,
                       bool timings) {
  std::ofstream f(path);
  if (!f) throw ConfigError(path + ": cannot open for writing");
  f << "run,cycles,err_trans,err_rot,roll_ref,pitch_ref,yaw_rate,thrust,runtime_ms\n";
  for (const auto& [name, m] : rows) {
    f << name << ',' << m.cycles << ',' << csv_number(m.err_trans) << ',' << csv_number(m.err_rot) << ','
      << csv_number(m.mean_roll) << ',' << csv_number(m.mean_pitch) << ',' << csv_number(m.mean_yaw_rate) << ','
      << csv_number(m.mean_thrust) << ',' << csv_number(timings ? m.mean_runtime_ms : 0.0) << '\n';
  }
}

}  // namespace flatmpc
