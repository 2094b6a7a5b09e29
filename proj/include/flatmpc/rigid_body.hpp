#pragma once

#include <Eigen/Dense>

namespace flatmpc {

using Vector3 = Eigen::Vector3d;
using Matrix3 = Eigen::Matrix3d;
using Vector12 = Eigen::Matrix<double, 12, 1>;

/// Full rigid-body state: world position/velocity, body-to-world rotation,
/// body-frame angular velocity.
struct RigidBodyState {
  Vector3 p = Vector3::Zero();
  Vector3 v = Vector3::Zero();
  Matrix3 R = Matrix3::Identity();
  Vector3 omega = Vector3::Zero();
};

/// Collective thrust along the body z-axis plus body torques.
struct ControlInput {
  double thrust = 0.0;
  Vector3 tau = Vector3::Zero();
};

struct VehicleParams {
  double mass = 1.55;                                                  // [kg]
  Matrix3 inertia = Vector3(0.0347, 0.0459, 0.0977).asDiagonal();      // [kg m^2]
  double gravity = 9.81;                                               // [m/s^2]

  Vector3 gravity_vec() const { return Vector3(0.0, 0.0, -gravity); }
  Matrix3 inertia_inv() const { return inertia.inverse(); }
};

struct StateDerivative {
  Vector3 dp = Vector3::Zero();
  Vector3 dv = Vector3::Zero();
  Matrix3 dR = Matrix3::Zero();
  Vector3 domega = Vector3::Zero();
};

/// Integration scheme selector: the coarse rule is one RK4 step per interval,
/// the fine rule subdivides the interval. fine_substeps must be >= 2.
struct StepRule {
  int fine_substeps = 10;
};

Matrix3 hat(const Vector3& w);
Vector3 vee(const Matrix3& m);

/// Rotation about the world z-axis.
Matrix3 rotation_z(double angle);

/// Logarithm map of SO(3), returned as a rotation vector. Robust near the
/// identity and near pi.
Vector3 so3_log(const Matrix3& R);

/// Re-orthonormalizes a near-rotation matrix (Gram-Schmidt on columns,
/// right-handed result).
Matrix3 project_to_so3(const Matrix3& R);

bool is_rotation(const Matrix3& R, double tol = 1e-9);

/// Minimal 12-vector difference a (-) b: position, velocity, rotation
/// expressed as log(R_b^T R_a), angular velocity.
Vector12 state_difference(const RigidBodyState& a, const RigidBodyState& b);

StateDerivative continuous_dynamics(const RigidBodyState& x, const ControlInput& u, const VehicleParams& params);

/// Single RK4 step with zero-order-hold input; rotation re-orthonormalized
/// afterwards.
RigidBodyState step_coarse(const RigidBodyState& x, const ControlInput& u, double dt, const VehicleParams& params);

/// Same rule with dt subdivided into `substeps` RK4 steps.
RigidBodyState step_substeps(const RigidBodyState& x, const ControlInput& u, double dt, const VehicleParams& params,
                             int substeps);

RigidBodyState step_fine(const RigidBodyState& x, const ControlInput& u, double dt, const VehicleParams& params,
                         const StepRule& rule = StepRule{});

}  // namespace flatmpc
