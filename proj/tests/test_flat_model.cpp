#include <doctest.h>

#include "flatmpc/errors.hpp"
#include "flatmpc/flat_model.hpp"
#include "oracles.hpp"

using namespace flatmpc;

TEST_CASE("wrap_angle maps into (-pi, pi]") {
  CHECK(wrap_angle(0.0) == 0.0);
  CHECK(wrap_angle(M_PI) == doctest::Approx(M_PI));
  CHECK(wrap_angle(3.0 + 0.5) == doctest::Approx(-2.7831853071795862));
  CHECK(wrap_angle(-M_PI) == doctest::Approx(M_PI));
  CHECK(wrap_angle(7.0) == doctest::Approx(7.0 - 2 * M_PI));
}

TEST_CASE("hover recovers the identity attitude at rest") {
  VehicleParams params;
  params.mass = 1.0;
  FlatState fs = hover_state(Vector3(0.5, -0.2, 1.0), 0.0);
  fs.d1 = Vector3(0.3, 0.1, -0.2);
  const RigidBodyState x = recover_state(fs, params);
  CHECK((x.R - Matrix3::Identity()).norm() < 1e-12);
  CHECK((x.v - fs.d1).norm() == 0.0);
  CHECK(x.omega.norm() < 1e-12);
  CHECK(is_rotation(x.R));
}

TEST_CASE("pure yaw at hover") {
  VehicleParams params;
  params.mass = 1.0;
  FlatState fs = hover_state(Vector3::Zero(), M_PI / 4);
  fs.dgamma1 = 0.1;
  const RigidBodyState x = recover_state(fs, params);
  CHECK((x.R - rotation_z(M_PI / 4)).norm() < 1e-12);
  CHECK((x.omega - Vector3(0, 0, 0.1)).norm() < 1e-12);
}

TEST_CASE("accelerating flat state: thrust axis and full recovery vs oracle") {
  VehicleParams params;
  params.mass = 1.0;
  FlatState fs;
  fs.d2 = Vector3(1, 0, 0);
  const RigidBodyState x = recover_state(fs, params);
  const Vector3 rz_expected = Vector3(1, 0, 9.81).normalized();
  CHECK((x.R.col(2) - rz_expected).norm() < 1e-12);

  // generic node against the independent scalar evaluation
  fs = oracles::poly_trajectory(0.37);
  const FlatRecovery rec = recover(fs, params);
  const auto oracle = oracles::recover_oracle(fs, params.mass, params.inertia, params.gravity);
  CHECK((rec.state.R - oracle.R).norm() < 1e-12);
  CHECK((rec.state.omega - oracle.omega).norm() < 1e-12);
  CHECK(rec.input.thrust == doctest::Approx(oracle.thrust).epsilon(1e-12));
  CHECK((rec.input.tau - oracle.tau).norm() < 1e-12);
  CHECK((rec.domega - oracle.domega).norm() < 1e-12);
}

TEST_CASE("hover input is weight with zero torque") {
  VehicleParams params;
  params.mass = 1.0;
  const ControlInput u = recover_input(hover_state(Vector3::Zero(), 0.0), params);
  CHECK(u.thrust == doctest::Approx(9.81));
  CHECK(u.tau.norm() < 1e-14);
}

TEST_CASE("yaw acceleration at hover maps through the inertia") {
  VehicleParams params;
  params.mass = 1.0;
  params.inertia = Vector3(0.01, 0.01, 0.02).asDiagonal();
  FlatState fs = hover_state(Vector3::Zero(), 0.0);
  fs.dgamma2 = 0.2;
  const ControlInput u = recover_input(fs, params);
  CHECK((u.tau - Vector3(0, 0, 0.004)).norm() < 1e-12);
}

TEST_CASE("recovered inputs reproduce the trajectory when integrated") {
  // round-trip over 0.1 s at 1 kHz
  const VehicleParams params;
  RigidBodyState x = recover_state(oracles::poly_trajectory(0.0), params);
  const double dt = 1e-3;
  for (int k = 0; k < 100; ++k) {
    const ControlInput u = recover_input(oracles::poly_trajectory(k * dt), params);
    x = step_fine(x, u, dt, params);
  }
  CHECK((x.p - oracles::poly_trajectory(0.1).p).norm() < 1e-4);
}

TEST_CASE("thrust is invariant under yaw") {
  const VehicleParams params;
  FlatState fs = oracles::poly_trajectory(0.6);
  const double t0 = recover_input(fs, params).thrust;
  for (const double yaw : {-2.0, -0.3, 0.9, 2.8}) {
    fs.gamma = yaw;
    CHECK(recover_input(fs, params).thrust == doctest::Approx(t0).epsilon(1e-12));
  }
}

TEST_CASE("recovered angular velocity is consistent with the rotation rate") {
  const VehicleParams params;
  const double h = 1e-6;
  for (double t = 0.1; t < 1.0; t += 0.17) {
    const RigidBodyState a = recover_state(oracles::poly_trajectory(t - h), params);
    const RigidBodyState b = recover_state(oracles::poly_trajectory(t + h), params);
    const RigidBodyState c = recover_state(oracles::poly_trajectory(t), params);
    const Matrix3 dR_fd = (b.R - a.R) / (2 * h);
    CHECK((dR_fd - c.R * hat(c.omega)).norm() < 1e-4);
  }
}

TEST_CASE("error terms vanish at an equilibrium fixed point") {
  VehicleParams params;
  const FlatState hover = hover_state(Vector3(2, 2, 1), 1.57);
  const RigidBodyState goal = recover_state(hover, params);
  const ErrorTerms terms = flat_error_terms(hover, hover, goal, params, 0.25);
  CHECK(terms.nu.norm() < 1e-9);
  CHECK(terms.gamma.norm() < 1e-9);
  CHECK(terms.phi[0] == doctest::Approx(params.mass * params.gravity));
  CHECK(terms.phi.tail<3>().norm() < 1e-12);
}

TEST_CASE("a displaced next node shows up in the continuity term") {
  VehicleParams params;
  const FlatState at_goal = hover_state(Vector3(2, 2, 1), 0.0);
  FlatState displaced = at_goal;
  displaced.p += Vector3(0.1, 0, 0);
  const RigidBodyState goal = recover_state(at_goal, params);
  const ErrorTerms terms = flat_error_terms(at_goal, displaced, goal, params, 0.3);
  CHECK((terms.gamma.segment<3>(0) - Vector3(0.1, 0, 0)).norm() < 1e-10);
  CHECK(terms.gamma.segment<9>(3).norm() < 1e-10);
}

TEST_CASE("generic error terms match a brute-force recomputation") {
  const VehicleParams params;
  const FlatState a = oracles::poly_trajectory(0.2);
  const FlatState b = oracles::poly_trajectory(0.45);
  const RigidBodyState goal = recover_state(hover_state(Vector3(1, 1, 1), 0.3), params);
  const double dt = 0.25;
  const ErrorTerms terms = flat_error_terms(a, b, goal, params, dt);

  const auto oa = oracles::recover_oracle(a, params.mass, params.inertia, params.gravity);
  const auto ob = oracles::recover_oracle(b, params.mass, params.inertia, params.gravity);
  CHECK((terms.nu.segment<3>(0) - (oa.p - goal.p)).norm() < 1e-12);
  CHECK((terms.nu.segment<3>(3) - (oa.v - goal.v)).norm() < 1e-12);
  CHECK(terms.phi[0] == doctest::Approx(oa.thrust).epsilon(1e-12));

  const oracles::OracleState prop = oracles::rk4_oracle({oa.p, oa.v, oa.R, oa.omega}, oa.thrust, oa.tau, dt,
                                                        params.mass, params.inertia, params.gravity, 1);
  CHECK((terms.gamma.segment<3>(0) - (ob.p - prop.p)).norm() < 1e-10);
  CHECK((terms.gamma.segment<3>(3) - (ob.v - prop.v)).norm() < 1e-10);
  CHECK((terms.gamma.segment<3>(9) - (ob.omega - prop.omega)).norm() < 1e-10);
}

TEST_CASE("free fall and degenerate heading are singular") {
  const VehicleParams params;
  FlatState free_fall;
  free_fall.d2 = params.gravity_vec();
  CHECK_THROWS_AS(recover_state(free_fall, params), SingularFlatState);

  FlatState sideways;  // thrust axis along the heading
  sideways.d2 = Vector3(30.0, 0.0, -params.gravity);
  sideways.gamma = 0.0;
  CHECK_THROWS_AS(recover_state(sideways, params), SingularFlatState);
}

TEST_CASE("from_vector normalizes yaw") {
  FlatState fs;
  auto v = fs.to_vector();
  v[FlatState::kYawIndex] = 5.0;
  CHECK(FlatState::from_vector(v).gamma == doctest::Approx(5.0 - 2 * M_PI));
}

TEST_CASE("yaw readback inverts the frame construction") {
  const VehicleParams params;
  for (double t = 0.0; t < 1.0; t += 0.21) {
    const FlatState fs = oracles::poly_trajectory(t);
    const RigidBodyState x = recover_state(fs, params);
    CHECK(wrap_angle(yaw_from_rotation(x.R) - fs.gamma) == doctest::Approx(0.0).epsilon(1e-12));
  }
}
