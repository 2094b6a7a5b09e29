#include "flatmpc/nmpc_runtime.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

#include "flatmpc/errors.hpp"

namespace flatmpc {

namespace {

double now_ms() {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

}  // namespace

void ControlTask::validate() const {
  if (static_cast<bool>(goal) == tracking()) {
    throw ConfigError("ControlTask: exactly one of goal and reference must be set");
  }
}

void NmpcConfig::validate() const {
  if (horizon <= 0) throw ConfigError("NmpcConfig: horizon must be positive");
  if (bins < 2) throw ConfigError("NmpcConfig: need at least two intervals");
  if (dt_ctrl <= 0) throw ConfigError("NmpcConfig: control period must be positive");
  if (refine_enabled) refine.validate(bins);
}

NmpcController::NmpcController(ControlTask task, NmpcConfig cfg, VehicleParams params)
    : task_(std::move(task)), cfg_(std::move(cfg)), params_(params) {
  task_.validate();
  cfg_.validate();
}

OcpProblem NmpcController::make_problem(const RigidBodyState& measured, double t_now) const {
  OcpProblem problem;
  problem.mesh = TimeMesh::uniform(cfg_.horizon, cfg_.bins);
  problem.weights = cfg_.weights;
  problem.params = params_;
  problem.initial_state = measured;
  if (task_.tracking()) {
    problem.reference = [ref = task_.reference, t_now](double s) { return ref(t_now + s); };
  } else {
    problem.goal = recover_state(*task_.goal, params_);
  }
  return problem;
}

CycleResult NmpcController::cycle(const RigidBodyState& measured, double t_now) {
  const double t_start = now_ms();
  const OcpProblem problem = make_problem(measured, t_now);

  LsConfig solver = cfg_.solver;
  if (!prev_) {
    solver.max_iterations *= std::max(1, cfg_.cold_start_factor);
  } else if (last_lambda_ > 0) {
    // Damping carried over from the previous cycle; re-learning it from
    // lambda0 costs several rejected steps per cycle. Clamped so a fully
    // converged cycle does not park the next one on a degenerate step.
    solver.lambda0 = std::clamp(last_lambda_, 1e-4, 1e2);
  }

  FlatTrajectory guess =
      prev_ ? resample(warm_start(*prev_, t_now - prev_time_), problem.mesh) : initial_guess(problem);
  // The plan starts at the measurement: directly measured flat coordinates
  // are written into node 0 (and stay out of the decision vector).
  guess.nodes[0].p = measured.p;
  guess.nodes[0].d1 = measured.v;
  guess.nodes[0].gamma = yaw_from_rotation(measured.R);

  CycleResult out;
  try {
    Transcription full(problem, std::move(guess));
    OptimizeResult res = optimize(full, full.pack(), solver);
    out.optimize = std::move(res.stats);
    out.plan = full.unpack(res.z);
    if (cfg_.refine_enabled) {
      // Refinement re-solves start from the converged coarse solution; they
      // use the base iteration budget even on a cold cycle.
      LsConfig refine_solver = solver;
      refine_solver.max_iterations = cfg_.solver.max_iterations;
      RefineResult rr = refine(out.plan, problem, cfg_.refine, refine_solver);
      out.plan = std::move(rr.traj);
      out.refine = rr.stats;
      out.refined = true;
    }
    if (cfg_.input_at_dt_ctrl) {
      const FlatRecovery rec = recover(sample_trajectory(out.plan, cfg_.dt_ctrl), params_);
      out.applied = rec.input;
      out.attitude_ref = rec.state.R;
      out.yaw_rate_ref = rec.state.omega.z();
    } else {
      // The plan commits one zero-order-hold input per interval; the applied
      // input is that schedule averaged over the upcoming hold window. When
      // the first interval covers the hold this is exactly the first input.
      const double hold = cfg_.hold_first_interval ? out.plan.mesh.dt(0) : cfg_.dt_ctrl;
      const FlatRecovery rec0 = recover(out.plan.nodes[0], params_);
      out.attitude_ref = rec0.state.R;
      out.yaw_rate_ref = rec0.state.omega.z();
      double thrust = 0.0;
      Vector3 tau = Vector3::Zero();
      double covered = 0.0;
      for (int k = 0; k < out.plan.mesh.intervals() && covered < hold - 1e-12; ++k) {
        const double w = std::min(out.plan.mesh.dt(k), hold - covered);
        const ControlInput u = k == 0 ? rec0.input : recover_input(out.plan.nodes[k], params_);
        thrust += w * u.thrust;
        tau += w * u.tau;
        covered += w;
      }
      if (covered < hold) {  // plan shorter than the hold: extend the last input
        const ControlInput u = recover_input(out.plan.nodes[out.plan.size() - 2], params_);
        thrust += (hold - covered) * u.thrust;
        tau += (hold - covered) * u.tau;
        covered = hold;
      }
      out.applied.thrust = thrust / covered;
      out.applied.tau = tau / covered;
    }
  } catch (const DivergenceError& e) {
    prev_.reset();  // poisoned warm start; next cycle restarts cold
    throw SolveFailure(std::string("nmpc_cycle: ") + e.what(), e.cost_history);
  } catch (const SingularFlatState& e) {
    prev_.reset();
    throw SolveFailure(std::string("nmpc_cycle: ") + e.what(), {});
  } catch (const FactorizationFailure& e) {
    prev_.reset();
    throw SolveFailure(std::string("nmpc_cycle: ") + e.what(), {});
  }
  prev_ = out.plan;
  prev_time_ = t_now;
  last_lambda_ = out.optimize.final_lambda;
  out.solve_ms = now_ms() - t_start;
  return out;
}

EpisodeLog run_closed_loop(const ControlTask& task, const NmpcConfig& cfg, const VehicleParams& params,
                           const EpisodeOptions& opts) {
  task.validate();
  if (opts.duration < 0) throw ConfigError("run_closed_loop: duration must be non-negative");

  EpisodeLog log;
  log.dt_ctrl = cfg.dt_ctrl;

  NmpcController controller(task, cfg, params);
  RigidBodyState x = opts.x0;
  ControlInput fallback;
  fallback.thrust = params.mass * params.gravity;

  std::mt19937_64 rng(opts.seed);
  std::normal_distribution<double> randn(0.0, 1.0);
  const bool noisy = opts.noise_pos > 0 || opts.noise_vel > 0 || opts.noise_rate > 0;

  auto reference_at = [&](double t) -> std::pair<Vector3, double> {
    if (task.tracking()) {
      const FlatState r = task.reference(t);
      return {r.p, r.gamma};
    }
    return {task.goal->p, task.goal->gamma};
  };

  const int steps = static_cast<int>(std::llround(opts.duration / cfg.dt_ctrl));
  int consecutive_failures = 0;
  int hold_steps = 0;
  CycleRecord held;
  for (int i = 0; i < steps; ++i) {
    const double t = i * cfg.dt_ctrl;
    CycleRecord rec;
    if (hold_steps > 0) {
      rec = held;  // input still committed from the previous solve
      rec.new_solve = false;
      rec.solve_ms = 0.0;
      rec.ls_iterations = 0;
      rec.nodes_added = 0;
      --hold_steps;
    } else {
      try {
        CycleResult res = controller.cycle(x, t);
        rec.input = res.applied;
        const Vector3 rpy = euler_zyx(res.attitude_ref);
        rec.roll_ref = rpy[0];
        rec.pitch_ref = rpy[1];
        rec.yaw_rate_ref = res.yaw_rate_ref;
        rec.solve_ms = res.solve_ms;
        rec.ls_iterations = res.optimize.iterations;
        rec.nodes_added = res.refine.nodes_added;
        rec.cost = res.optimize.cost_history.empty() ? 0.0 : res.optimize.cost_history.back();
        rec.new_solve = true;
        consecutive_failures = 0;
        fallback = rec.input;
        if (cfg.hold_first_interval) {
          // The first input is the zero-order hold the plan committed to for
          // its first interval; it stays applied until that interval ends.
          hold_steps = static_cast<int>(std::llround(res.plan.mesh.dt(0) / cfg.dt_ctrl)) - 1;
          hold_steps = std::max(0, hold_steps);
        }
        held = rec;
      } catch (const SolveFailure&) {
        rec.solved = false;
        rec.input = fallback;
        ++consecutive_failures;
      }
    }
    rec.t = t;
    rec.state = x;
    std::tie(rec.ref_p, rec.ref_yaw) = reference_at(t);
    log.records.push_back(rec);

    if (consecutive_failures > opts.max_consecutive_failures) {
      log.failed = true;
      log.failure_reason = "repeated solve failures";
      break;
    }

    x = step_fine(x, rec.input, cfg.dt_ctrl, params, cfg.plant_rule);
    if (noisy) {
      for (int a = 0; a < 3; ++a) {
        x.p[a] += opts.noise_pos * randn(rng);
        x.v[a] += opts.noise_vel * randn(rng);
        x.omega[a] += opts.noise_rate * randn(rng);
      }
    }

    const auto [ref_p_next, ref_yaw_next] = reference_at((i + 1) * cfg.dt_ctrl);
    (void)ref_yaw_next;
    if (!x.p.allFinite() || !x.v.allFinite() || (x.p - ref_p_next).norm() > opts.fail_distance) {
      log.failed = true;
      log.failure_reason = "state diverged";
      break;
    }
    if (opts.ground_z && x.p.z() < *opts.ground_z) {
      log.failed = true;
      log.failure_reason = "hit the ground";
      break;
    }
  }

  if (!log.failed && !task.tracking() && opts.settle_tolerance && !log.records.empty()) {
    const auto [goal_p, goal_yaw] = reference_at(opts.duration);
    (void)goal_yaw;
    if ((x.p - goal_p).norm() > *opts.settle_tolerance) {
      log.failed = true;
      log.failure_reason = "did not settle at the goal";
    }
  }
  return log;
}

namespace {

Metrics metrics_impl(const EpisodeLog& log, const std::vector<Vector3>& ref_p, const std::vector<double>& ref_yaw) {
  Metrics m;
  m.cycles = static_cast<int>(log.records.size());
  if (m.cycles == 0) return m;
  int solves = 0;
  double se_trans = 0, se_rot = 0;
  for (size_t i = 0; i < log.records.size(); ++i) {
    const CycleRecord& r = log.records[i];
    se_trans += (r.state.p - ref_p[i]).squaredNorm();
    const double dyaw = wrap_angle(yaw_from_rotation(r.state.R) - ref_yaw[i]);
    se_rot += dyaw * dyaw;
    m.mean_roll += std::abs(r.roll_ref);
    m.mean_pitch += std::abs(r.pitch_ref);
    m.mean_yaw_rate += std::abs(r.yaw_rate_ref);
    m.mean_thrust += r.input.thrust;
    if (r.new_solve) {
      m.mean_runtime_ms += r.solve_ms;
      ++solves;
    }
  }
  const double n = static_cast<double>(m.cycles);
  m.err_trans = std::sqrt(se_trans / n);
  m.err_rot = std::sqrt(se_rot / n);
  m.mean_roll /= n;
  m.mean_pitch /= n;
  m.mean_yaw_rate /= n;
  m.mean_thrust /= n;
  m.mean_runtime_ms /= std::max(1, solves);
  return m;
}

}  // namespace

Metrics compute_metrics(const EpisodeLog& log) {
  std::vector<Vector3> ref_p;
  std::vector<double> ref_yaw;
  ref_p.reserve(log.records.size());
  for (const auto& r : log.records) {
    ref_p.push_back(r.ref_p);
    ref_yaw.push_back(r.ref_yaw);
  }
  return metrics_impl(log, ref_p, ref_yaw);
}

Metrics compute_metrics(const EpisodeLog& log, const EpisodeLog& reference) {
  std::vector<Vector3> ref_p;
  std::vector<double> ref_yaw;
  const size_t n = std::min(log.records.size(), reference.records.size());
  EpisodeLog clipped = log;
  clipped.records.resize(n);
  for (size_t i = 0; i < n; ++i) {
    ref_p.push_back(reference.records[i].state.p);
    ref_yaw.push_back(yaw_from_rotation(reference.records[i].state.R));
  }
  return metrics_impl(clipped, ref_p, ref_yaw);
}

}  // namespace flatmpc
