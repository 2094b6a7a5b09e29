#include "flatmpc/rigid_body.hpp"

#include <cmath>

namespace flatmpc {

Matrix3 hat(const Vector3& w) {
  Matrix3 m;
  m << 0.0, -w.z(), w.y(),  //
      w.z(), 0.0, -w.x(),   //
      -w.y(), w.x(), 0.0;
  return m;
}

Vector3 vee(const Matrix3& m) { return Vector3(m(2, 1), m(0, 2), m(1, 0)); }

Matrix3 rotation_z(double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  Matrix3 r;
  r << c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0;
  return r;
}

Vector3 so3_log(const Matrix3& R) {
  const double trace = R.trace();
  const double c = std::clamp((trace - 1.0) * 0.5, -1.0, 1.0);
  const double theta = std::acos(c);
  const Vector3 axis_raw = vee(R - R.transpose()) * 0.5;  // = sin(theta) * axis
  if (theta < 1e-9) {
    return axis_raw;  // first-order: log(R) ~ (R - R^T)/2
  }
  if (theta > M_PI - 1e-6) {
    // Near pi the antisymmetric part vanishes; recover the axis from the
    // symmetric part R = I + (1 - cos) * (aa^T - I) + ...
    Matrix3 S = 0.5 * (R + Matrix3::Identity());
    Vector3 axis = S.diagonal().cwiseMax(0.0).cwiseSqrt();
    // Fix signs from the off-diagonal products.
    int k = 0;
    axis.maxCoeff(&k);
    if (axis[k] > 0) {
      for (int i = 0; i < 3; ++i) {
        if (i == k) continue;
        double sij = 0.5 * (R(k, i) + R(i, k));
        axis[i] = sij / axis[k] * 0.5;
      }
      axis.normalize();
    }
    // Resolve the overall sign with the antisymmetric remainder when nonzero.
    if (axis_raw.dot(axis) < 0) axis = -axis;
    return theta * axis;
  }
  return axis_raw * (theta / std::sin(theta));
}

Matrix3 project_to_so3(const Matrix3& R) {
  Matrix3 out;
  out.col(0) = R.col(0).normalized();
  out.col(1) = (R.col(1) - R.col(1).dot(out.col(0)) * out.col(0)).normalized();
  out.col(2) = out.col(0).cross(out.col(1));
  return out;
}

bool is_rotation(const Matrix3& R, double tol) {
  const double ortho = (R.transpose() * R - Matrix3::Identity()).norm();
  return ortho <= tol && std::abs(R.determinant() - 1.0) <= tol;
}

Vector12 state_difference(const RigidBodyState& a, const RigidBodyState& b) {
  Vector12 d;
  d.segment<3>(0) = a.p - b.p;
  d.segment<3>(3) = a.v - b.v;
  d.segment<3>(6) = so3_log(b.R.transpose() * a.R);
  d.segment<3>(9) = a.omega - b.omega;
  return d;
}

StateDerivative continuous_dynamics(const RigidBodyState& x, const ControlInput& u, const VehicleParams& params) {
  StateDerivative d;
  d.dp = x.v;
  d.dv = params.gravity_vec() + x.R.col(2) * (u.thrust / params.mass);
  d.dR = x.R * hat(x.omega);
  d.domega = params.inertia_inv() * (-x.omega.cross(params.inertia * x.omega) + u.tau);
  return d;
}

namespace {

RigidBodyState rk4_step(const RigidBodyState& x, const ControlInput& u, double dt, const VehicleParams& params,
                        const Matrix3& inertia_inv) {
  auto deriv = [&](const RigidBodyState& s) {
    StateDerivative d;
    d.dp = s.v;
    d.dv = params.gravity_vec() + s.R.col(2) * (u.thrust / params.mass);
    d.dR = s.R * hat(s.omega);
    d.domega = inertia_inv * (-s.omega.cross(params.inertia * s.omega) + u.tau);
    return d;
  };
  auto advance = [](const RigidBodyState& s, const StateDerivative& d, double h) {
    RigidBodyState out;
    out.p = s.p + h * d.dp;
    out.v = s.v + h * d.dv;
    out.R = s.R + h * d.dR;
    out.omega = s.omega + h * d.domega;
    return out;
  };
  const StateDerivative k1 = deriv(x);
  const StateDerivative k2 = deriv(advance(x, k1, 0.5 * dt));
  const StateDerivative k3 = deriv(advance(x, k2, 0.5 * dt));
  const StateDerivative k4 = deriv(advance(x, k3, dt));
  RigidBodyState out;
  const double w = dt / 6.0;
  out.p = x.p + w * (k1.dp + 2.0 * k2.dp + 2.0 * k3.dp + k4.dp);
  out.v = x.v + w * (k1.dv + 2.0 * k2.dv + 2.0 * k3.dv + k4.dv);
  out.R = project_to_so3(x.R + w * (k1.dR + 2.0 * k2.dR + 2.0 * k3.dR + k4.dR));
  out.omega = x.omega + w * (k1.domega + 2.0 * k2.domega + 2.0 * k3.domega + k4.domega);
  return out;
}

}  // namespace

RigidBodyState step_coarse(const RigidBodyState& x, const ControlInput& u, double dt, const VehicleParams& params) {
  return rk4_step(x, u, dt, params, params.inertia_inv());
}

RigidBodyState step_substeps(const RigidBodyState& x, const ControlInput& u, double dt, const VehicleParams& params,
                             int substeps) {
  const Matrix3 inertia_inv = params.inertia_inv();
  RigidBodyState s = x;
  const double h = dt / substeps;
  for (int i = 0; i < substeps; ++i) {
    s = rk4_step(s, u, h, params, inertia_inv);
  }
  return s;
}

RigidBodyState step_fine(const RigidBodyState& x, const ControlInput& u, double dt, const VehicleParams& params,
                         const StepRule& rule) {
  return step_substeps(x, u, dt, params, rule.fine_substeps);
}

}  // namespace flatmpc
