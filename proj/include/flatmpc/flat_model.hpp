#pragma once

#include <Eigen/Dense>

#include "flatmpc/rigid_body.hpp"

namespace flatmpc {

/// Wraps an angle to (-pi, pi].
double wrap_angle(double a);

/// Flat outputs of the vehicle at one lattice node: position and yaw together
/// with the derivative orders needed to recover the full state and input
/// (snap for position, second derivative for yaw).
struct FlatState {
  Vector3 p = Vector3::Zero();
  Vector3 d1 = Vector3::Zero();
  Vector3 d2 = Vector3::Zero();
  Vector3 d3 = Vector3::Zero();
  Vector3 d4 = Vector3::Zero();
  double gamma = 0.0;
  double dgamma1 = 0.0;
  double dgamma2 = 0.0;

  /// Number of packed coordinates per node.
  static constexpr int kDim = 18;
  /// Index of the yaw coordinate in the packed layout (the one angular entry).
  static constexpr int kYawIndex = 15;

  /// Packed layout: [p, d1, d2, d3, d4, gamma, dgamma1, dgamma2].
  Eigen::Matrix<double, kDim, 1> to_vector() const;
  static FlatState from_vector(const Eigen::Matrix<double, kDim, 1>& z);

  bool is_finite() const;
};

/// Hover node at a given position and yaw (all derivatives zero).
FlatState hover_state(const Vector3& p, double yaw);

/// Everything the flat maps produce for one node. recover_state/recover_input
/// are thin views over this.
struct FlatRecovery {
  RigidBodyState state;
  ControlInput input;
  double dthrust = 0.0;     // thrust rate, used by the angular-acceleration solve
  Vector3 domega = Vector3::Zero();
};

/// Full state-and-input recovery from a flat node. Throws SingularFlatState
/// near free fall (thrust ~ 0) or when the thrust axis aligns with the yaw
/// heading vector.
FlatRecovery recover(const FlatState& fs, const VehicleParams& params);

RigidBodyState recover_state(const FlatState& fs, const VehicleParams& params);
ControlInput recover_input(const FlatState& fs, const VehicleParams& params);

/// Yaw angle of a rotation produced by the flat construction; inverse of the
/// heading used to build the body y-axis.
double yaw_from_rotation(const Matrix3& R);

/// ZYX Euler angles (roll, pitch, yaw) for reporting.
Vector3 euler_zyx(const Matrix3& R);

/// Per-step error terms of the transcription: nu (state vs. goal), phi
/// (recovered input, 4-vector), gamma (continuity defect over one interval of
/// length dt under the coarse step rule).
struct ErrorTerms {
  Vector12 nu;
  Eigen::Vector4d phi;
  Vector12 gamma;
};

ErrorTerms flat_error_terms(const FlatState& fs_k, const FlatState& fs_next, const RigidBodyState& x_goal,
                            const VehicleParams& params, double dt);

}  // namespace flatmpc
