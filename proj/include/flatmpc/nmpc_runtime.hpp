#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "flatmpc/mesh_refine.hpp"

namespace flatmpc {

/// Steering task: hover at a fixed flat goal, or track an absolute-time flat
/// reference. Exactly one must be set.
struct ControlTask {
  std::optional<FlatState> goal;
  std::function<FlatState(double)> reference;

  bool tracking() const { return static_cast<bool>(reference); }
  void validate() const;
};

struct NmpcConfig {
  double horizon = 2.0;   ///< t_f [s]
  int bins = 20;          ///< N intervals on the initial uniform mesh
  double dt_ctrl = 0.05;  ///< control period [s]
  bool refine_enabled = true;
  /// Iteration-budget multiplier for the initialization solve (no previous
  /// plan to warm-start from).
  int cold_start_factor = 4;
  /// Apply each input for its plan's first-interval duration (rounded to the
  /// dt_ctrl grid) before re-solving; by default a new solve runs every
  /// dt_ctrl.
  bool hold_first_interval = false;
  /// When set, the applied input is re-sampled from the plan at dt_ctrl
  /// instead of taken at the plan start.
  bool input_at_dt_ctrl = false;
  OcpWeights weights = OcpWeights::defaults();
  LsConfig solver;
  RefineConfig refine;
  StepRule plant_rule;  ///< fine integrator used for the simulated plant

  void validate() const;
};

struct CycleResult {
  FlatTrajectory plan;
  ControlInput applied;
  Matrix3 attitude_ref = Matrix3::Identity();  ///< recovered attitude at the applied node
  double yaw_rate_ref = 0.0;
  double solve_ms = 0.0;
  OptimizeStats optimize;
  RefineStats refine;
  bool refined = false;
};

/// Receding-horizon controller: per cycle it pins the plan start to the
/// measurement, warm-starts from the shifted previous solution, solves the
/// coarse problem, optionally refines the initial segment, and extracts the
/// input to apply.
class NmpcController {
 public:
  NmpcController(ControlTask task, NmpcConfig cfg, VehicleParams params);

  CycleResult cycle(const RigidBodyState& measured, double t_now);
  void reset() {
    prev_.reset();
    last_lambda_ = 0.0;
  }

  const NmpcConfig& config() const { return cfg_; }

 private:
  OcpProblem make_problem(const RigidBodyState& measured, double t_now) const;

  ControlTask task_;
  NmpcConfig cfg_;
  VehicleParams params_;
  std::optional<FlatTrajectory> prev_;
  double prev_time_ = 0.0;
  double last_lambda_ = 0.0;
};

struct CycleRecord {
  double t = 0.0;
  RigidBodyState state;
  Vector3 ref_p = Vector3::Zero();
  double ref_yaw = 0.0;
  ControlInput input;
  double roll_ref = 0.0, pitch_ref = 0.0, yaw_rate_ref = 0.0;
  double solve_ms = 0.0;
  int ls_iterations = 0;
  int nodes_added = 0;
  double cost = 0.0;
  bool solved = true;    ///< false when a solve failed and the input fell back
  bool new_solve = false;  ///< a fresh plan was computed at this step
};

struct EpisodeLog {
  std::vector<CycleRecord> records;
  bool failed = false;
  std::string failure_reason;
  double dt_ctrl = 0.0;
};

struct EpisodeOptions {
  double duration = 6.0;
  RigidBodyState x0;
  std::uint64_t seed = 0;
  double noise_pos = 0.0, noise_vel = 0.0, noise_rate = 0.0;  ///< additive plant noise std-dev
  double fail_distance = 10.0;          ///< reference distance treated as divergence
  /// Crash plane: the episode fails if the vehicle descends below this
  /// altitude (disabled when unset; tracking tasks may legitimately cross 0).
  std::optional<double> ground_z;
  int max_consecutive_failures = 3;
  /// Regulation settle requirement: terminal translational error bound; an
  /// episode that never reaches the goal is recorded as failed.
  std::optional<double> settle_tolerance = 0.25;
};

/// Alternates controller cycles with fine plant steps under zero-order-hold
/// inputs. Failed cycles fall back to the previous input; the episode is
/// marked failed on repeated solve failures, divergence, or (for regulation)
/// a missed settle criterion.
EpisodeLog run_closed_loop(const ControlTask& task, const NmpcConfig& cfg, const VehicleParams& params,
                           const EpisodeOptions& opts);

struct Metrics {
  double err_trans = 0.0;     ///< RMSE of ||p - p_ref|| [m]
  double err_rot = 0.0;       ///< RMSE of the yaw residual [rad]
  double mean_roll = 0.0;     ///< mean |roll_ref| [rad]
  double mean_pitch = 0.0;    ///< mean |pitch_ref| [rad]
  double mean_yaw_rate = 0.0; ///< mean |yaw rate ref| [rad/s]
  double mean_thrust = 0.0;   ///< mean commanded thrust [N]
  double mean_runtime_ms = 0.0;
  int cycles = 0;
};

/// Metrics against the log's own reference columns.
Metrics compute_metrics(const EpisodeLog& log);
/// Metrics against another episode's recorded states (index-aligned).
Metrics compute_metrics(const EpisodeLog& log, const EpisodeLog& reference);

}  // namespace flatmpc
