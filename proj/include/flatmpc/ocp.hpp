#pragma once

#include <array>
#include <functional>
#include <optional>

#include "flatmpc/ls_solver.hpp"
#include "flatmpc/time_mesh.hpp"

namespace flatmpc {

struct OcpWeights {
  Eigen::Matrix<double, 12, 12> q;    ///< state-vs-goal weight (PSD)
  Eigen::Matrix4d r_w;                ///< input weight (PD)
  Eigen::Matrix<double, 12, 12> a_l;  ///< continuity weight (PD)
  double anchor = 1e4;             ///< initial attitude/rate anchor weight

  /// Position 10, velocity 1, rotation 5, body rate 0.1; thrust 0.1, torque 1;
  /// continuity 100. Tunables, not calibrated constants.
  static OcpWeights defaults();
};

/// Finite-horizon problem over a time mesh: steer to a fixed goal state or
/// track a flat reference (exactly one of the two).
struct OcpProblem {
  std::optional<RigidBodyState> goal;
  std::function<FlatState(double)> reference;  ///< horizon-local time [0, t_f]
  OcpWeights weights = OcpWeights::defaults();
  VehicleParams params;
  TimeMesh mesh;
  /// Measured state the plan must start from. When set, node 0's directly
  /// measured flat coordinates (position, velocity, yaw) are removed from the
  /// decision vector and the remaining attitude/rate agreement is enforced by
  /// an anchor residual.
  std::optional<RigidBodyState> initial_state;

  bool tracking() const { return static_cast<bool>(reference); }
  RigidBodyState target_at(double t) const;
  void validate() const;
};

/// Least-squares view of the problem: residual blocks nu_k (state vs target,
/// weight Q), phi_k (recovered input, weight R), gamma_k (one-interval
/// continuity defect, weight A_l) for steps k in [emit_first, emit_last],
/// with decision columns only for nodes in [active_first, active_last].
class Transcription final : public LsProblem {
 public:
  Transcription(const OcpProblem& problem, FlatTrajectory base, int emit_first, int emit_last, int active_first,
                int active_last);
  Transcription(const OcpProblem& problem, FlatTrajectory base);

  const DecisionLayout& layout() const override { return layout_; }
  const std::vector<BlockInfo>& blocks() const override { return blocks_; }
  void eval_block(int block, const Eigen::VectorXd& z, Eigen::Ref<Eigen::VectorXd> out) const override;

  /// Decision vector holding the base trajectory's active coordinates. The
  /// decision variables are the flat coordinates divided by per-order scales
  /// so the damped step treats heterogeneous units evenly.
  Eigen::VectorXd pack() const;
  /// Base trajectory with the active coordinates replaced from z.
  FlatTrajectory unpack(const Eigen::VectorXd& z) const;

  /// Characteristic magnitude of each packed flat coordinate; the yaw entry
  /// is 1 so that angle wrapping stays valid in scaled coordinates.
  static const std::array<double, FlatState::kDim>& coordinate_scales();

  const FlatTrajectory& base() const { return base_; }

 private:
  enum class Kind { anchor, nu, phi, gamma };
  struct Entry {
    Kind kind;
    int k;
  };

  FlatState node_from(const Eigen::VectorXd& z, int i) const;

  const OcpProblem* problem_;
  FlatTrajectory base_;
  std::vector<Entry> entries_;
  std::vector<BlockInfo> blocks_;
  DecisionLayout layout_;
  std::vector<RigidBodyState> targets_;
};

/// Residual blocks of the (sub-)problem evaluated at the given trajectory.
std::vector<ResidualBlock> transcribe(const OcpProblem& problem, const FlatTrajectory& traj, int emit_first,
                                      int emit_last);
std::vector<ResidualBlock> transcribe(const OcpProblem& problem, const FlatTrajectory& traj);

/// Cold-start trajectory: linear interpolation from the current state to the
/// goal, or the sampled reference in tracking mode.
FlatTrajectory initial_guess(const OcpProblem& problem);

/// Time-shifts a previous solution over its own mesh, holding the last node
/// beyond the horizon end.
FlatTrajectory warm_start(const FlatTrajectory& prev, double dt_shift);

/// Evaluates a trajectory onto a different mesh by piecewise interpolation.
FlatTrajectory resample(const FlatTrajectory& traj, const TimeMesh& mesh);

}  // namespace flatmpc
