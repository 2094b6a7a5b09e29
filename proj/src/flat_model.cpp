#include "flatmpc/flat_model.hpp"

#include <cmath>

#include "flatmpc/errors.hpp"

namespace flatmpc {

namespace {
constexpr double kThrustEps = 1e-6;  // [N] singularity guard for divisions by F_t
}

double wrap_angle(double a) {
  double w = std::remainder(a, 2.0 * M_PI);
  if (w <= -M_PI) w += 2.0 * M_PI;
  return w;
}

Eigen::Matrix<double, FlatState::kDim, 1> FlatState::to_vector() const {
  Eigen::Matrix<double, kDim, 1> z;
  z.segment<3>(0) = p;
  z.segment<3>(3) = d1;
  z.segment<3>(6) = d2;
  z.segment<3>(9) = d3;
  z.segment<3>(12) = d4;
  z[15] = gamma;
  z[16] = dgamma1;
  z[17] = dgamma2;
  return z;
}

FlatState FlatState::from_vector(const Eigen::Matrix<double, kDim, 1>& z) {
  FlatState fs;
  fs.p = z.segment<3>(0);
  fs.d1 = z.segment<3>(3);
  fs.d2 = z.segment<3>(6);
  fs.d3 = z.segment<3>(9);
  fs.d4 = z.segment<3>(12);
  fs.gamma = wrap_angle(z[15]);
  fs.dgamma1 = z[16];
  fs.dgamma2 = z[17];
  return fs;
}

bool FlatState::is_finite() const { return to_vector().allFinite(); }

FlatState hover_state(const Vector3& p, double yaw) {
  FlatState fs;
  fs.p = p;
  fs.gamma = wrap_angle(yaw);
  return fs;
}

FlatRecovery recover(const FlatState& fs, const VehicleParams& params) {
  const double m = params.mass;

  // Thrust vector and body z-axis from the acceleration demand.
  const Vector3 f_vec = m * (fs.d2 - params.gravity_vec());
  const double thrust = f_vec.norm();
  if (thrust < kThrustEps) {
    throw SingularFlatState("recover: thrust magnitude below singularity threshold (free fall)");
  }
  const Vector3 rz = f_vec / thrust;

  // Heading vector and body y-axis; degenerate when rz is parallel to the
  // heading.
  const Vector3 xc(std::cos(fs.gamma), std::sin(fs.gamma), 0.0);
  const Vector3 yc(-std::sin(fs.gamma), std::cos(fs.gamma), 0.0);
  const Vector3 w = rz.cross(xc);
  const double n = w.norm();
  if (n < kThrustEps) {
    throw SingularFlatState("recover: thrust axis parallel to heading vector");
  }
  const Vector3 ry = w / n;
  const Vector3 rx = ry.cross(rz);

  FlatRecovery out;
  out.state.p = fs.p;
  out.state.v = fs.d1;
  out.state.R.col(0) = rx;
  out.state.R.col(1) = ry;
  out.state.R.col(2) = rz;

  // Body rates: x/y from the jerk projections, z from the time derivative of
  // the frame construction.
  const double wx = -m * ry.dot(fs.d3) / thrust;
  const double wy = m * rx.dot(fs.d3) / thrust;
  const double a_term = wx * xc.dot(rz);
  const double b_term = fs.dgamma1 * yc.dot(ry);
  const double wz = (a_term + b_term) / n;
  out.state.omega = Vector3(wx, wy, wz);

  // Angular accelerations from the snap relation
  //   m p'''' = (R w^2 + R dw^) F_t e_z + 2 R w^ F_t' e_z + R F_t'' e_z
  // projected on the body x/y axes; F_t'' only enters the z-row.
  out.input.thrust = thrust;
  out.dthrust = m * rz.dot(fs.d3);
  const double dwx = (-m * ry.dot(fs.d4) + wy * wz * thrust - 2.0 * wx * out.dthrust) / thrust;
  const double dwy = (m * rx.dot(fs.d4) - wx * wz * thrust - 2.0 * wy * out.dthrust) / thrust;

  // Exact derivative of wz = (a_term + b_term)/n.
  const Vector3 d_rz = wy * rx - wx * ry;
  const Vector3 d_ry = -wz * rx + wx * rz;
  const double da = dwx * xc.dot(rz) + wx * (fs.dgamma1 * yc.dot(rz) + xc.dot(d_rz));
  const double db = fs.dgamma2 * yc.dot(ry) + fs.dgamma1 * (-fs.dgamma1 * xc.dot(ry) + yc.dot(d_ry));
  const double dn = -wy * xc.dot(rz) + fs.dgamma1 * yc.dot(rx);
  const double dwz = (da + db - wz * dn) / n;
  out.domega = Vector3(dwx, dwy, dwz);

  out.input.tau = params.inertia * out.domega + out.state.omega.cross(params.inertia * out.state.omega);
  return out;
}

RigidBodyState recover_state(const FlatState& fs, const VehicleParams& params) { return recover(fs, params).state; }

ControlInput recover_input(const FlatState& fs, const VehicleParams& params) { return recover(fs, params).input; }

double yaw_from_rotation(const Matrix3& R) { return std::atan2(-R(0, 1), R(1, 1)); }

Vector3 euler_zyx(const Matrix3& R) {
  const double pitch = -std::asin(std::clamp(R(2, 0), -1.0, 1.0));
  const double roll = std::atan2(R(2, 1), R(2, 2));
  const double yaw = std::atan2(R(1, 0), R(0, 0));
  return Vector3(roll, pitch, yaw);
}

ErrorTerms flat_error_terms(const FlatState& fs_k, const FlatState& fs_next, const RigidBodyState& x_goal,
                            const VehicleParams& params, double dt) {
  const FlatRecovery rec_k = recover(fs_k, params);
  const RigidBodyState state_next = recover_state(fs_next, params);

  ErrorTerms out;
  out.nu = state_difference(rec_k.state, x_goal);
  out.phi << rec_k.input.thrust, rec_k.input.tau;
  const RigidBodyState predicted = step_coarse(rec_k.state, rec_k.input, dt, params);
  out.gamma = state_difference(state_next, predicted);
  return out;
}

}  // namespace flatmpc
