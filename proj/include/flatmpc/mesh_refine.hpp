#pragma once

#include "flatmpc/ocp.hpp"

namespace flatmpc {

struct RefineConfig {
  double err_threshold = 1e-5;  ///< on the squared-norm node error
  int max_passes = 2;
  int initial_nodes = 5;        ///< N_i: index of the last node of the refined segment
  int max_added = -1;           ///< cap on inserted nodes per call; -1 = interval count
  int compare_order = 2;  ///< 0: position/yaw; 1: + first derivatives; 2: + acceleration

  void validate(int mesh_intervals) const;
};

/// Per-node discretization errors over an inspected segment; entry 0 (the
/// segment start) is zero by convention.
struct ErrorProfile {
  std::vector<double> eps;

  double max() const;
};

/// Squared-norm gap between each node and a finer re-integration from its
/// predecessor under the held recovered input. Compared over position/yaw
/// (and first derivatives when compare_order >= 1).
ErrorProfile discretization_error(const FlatTrajectory& traj, const VehicleParams& params, int first, int last,
                                  const StepRule& rule = StepRule{}, int compare_order = 2);

/// Cubic Hermite interpolation between two adjacent nodes on the unit
/// interval; tangents are the stored first derivatives scaled by dt_ij.
/// Derivative fields follow from differentiating the interpolant; the orders
/// the cubic cannot represent (snap) are linearly interpolated.
FlatState hermite_interpolate(const FlatState& zi, const FlatState& zj, double dt_ij, double t);

/// Piecewise Hermite evaluation of a trajectory at an arbitrary time,
/// clamped to the end nodes outside the mesh.
FlatState sample_trajectory(const FlatTrajectory& traj, double t);

struct RefineStats {
  int nodes_added = 0;
  int passes = 0;
  double max_error_before = 0.0;
  double max_error_after = 0.0;
  bool budget_exhausted = false;
  bool reverted = false;  ///< refinement did not reduce the segment error; input returned
  double total_ms = 0.0;
};

struct RefineResult {
  FlatTrajectory traj;
  RefineStats stats;
};

/// Adaptive refinement of the initial horizon segment: repeatedly inserts a
/// Hermite midpoint into every interval whose end-node error exceeds the
/// threshold, then re-optimizes the scaled sub-problem with the tail frozen.
RefineResult refine(const FlatTrajectory& traj, const OcpProblem& problem, const RefineConfig& cfg,
                    const LsConfig& solver_cfg);

}  // namespace flatmpc
