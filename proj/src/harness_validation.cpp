#include <cmath>
#include <sstream>

#include "flatmpc/errors.hpp"
#include "flatmpc/harness.hpp"

namespace flatmpc {

namespace {

// Smooth quintic flat trajectory used by the consistency checks.
FlatState poly_flat(double t) {
  FlatState f;
  const double cx[6] = {0.0, 0.3, 0.8, -0.4, 0.05, 0.01};
  const double cy[6] = {0.1, -0.2, 0.5, 0.3, -0.08, 0.005};
  const double cz[6] = {1.0, 0.1, -0.3, 0.2, 0.02, -0.01};
  auto fill = [&](const double* c, int axis) {
    f.p[axis] = c[0] + t * (c[1] + t * (c[2] + t * (c[3] + t * (c[4] + t * c[5]))));
    f.d1[axis] = c[1] + t * (2 * c[2] + t * (3 * c[3] + t * (4 * c[4] + t * 5 * c[5])));
    f.d2[axis] = 2 * c[2] + t * (6 * c[3] + t * (12 * c[4] + t * 20 * c[5]));
    f.d3[axis] = 6 * c[3] + t * (24 * c[4] + t * 60 * c[5]);
    f.d4[axis] = 24 * c[4] + t * 120 * c[5];
  };
  fill(cx, 0);
  fill(cy, 1);
  fill(cz, 2);
  f.gamma = 0.3 * std::sin(1.7 * t) + 0.2 * t;
  f.dgamma1 = 0.51 * std::cos(1.7 * t) + 0.2;
  f.dgamma2 = -0.867 * std::sin(1.7 * t);
  return f;
}

std::string fmt(double v) {
  std::ostringstream ss;
  ss << v;
  return ss.str();
}

CheckResult check_round_trip(const VehicleParams& params) {
  const double dt = 1e-3;
  RigidBodyState x = recover_state(poly_flat(0.0), params);
  double max_err = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const ControlInput u = recover_input(poly_flat(k * dt), params);
    x = step_fine(x, u, dt, params);
    max_err = std::max(max_err, (x.p - poly_flat((k + 1) * dt).p).norm());
  }
  return {"flat_round_trip", max_err < 1e-3, "max position error " + fmt(max_err) + " m over 1 s"};
}

CheckResult check_rotation_rate(const VehicleParams& params) {
  const double h = 1e-6;
  double max_err = 0.0;
  for (double t = 0.05; t < 1.0; t += 0.05) {
    const RigidBodyState a = recover_state(poly_flat(t - h), params);
    const RigidBodyState b = recover_state(poly_flat(t + h), params);
    const RigidBodyState c = recover_state(poly_flat(t), params);
    const Matrix3 dR_fd = (b.R - a.R) / (2 * h);
    max_err = std::max(max_err, (dR_fd - c.R * hat(c.omega)).norm());
  }
  return {"rotation_rate_consistency", max_err < 1e-4, "max |dR - R w^| " + fmt(max_err)};
}

CheckResult check_so3_invariance(const VehicleParams& params) {
  RigidBodyState x;
  x.R = rotation_z(0.3);
  x.omega = Vector3(0.4, -0.2, 0.6);
  ControlInput u;
  u.thrust = params.mass * params.gravity;
  u.tau = Vector3(1e-4, -2e-4, 5e-5);
  double worst = 0.0;
  for (int i = 0; i < 1000000; ++i) {
    x = step_coarse(x, u, 1e-3, params);
  }
  worst = (x.R.transpose() * x.R - Matrix3::Identity()).norm();
  const double det_err = std::abs(x.R.determinant() - 1.0);
  const bool ok = worst <= 1e-9 && det_err <= 1e-9;
  return {"so3_invariance", ok, "orthogonality " + fmt(worst) + ", det error " + fmt(det_err) + " after 1e6 steps"};
}

CheckResult check_gradient(std::mt19937_64& rng, const VehicleParams& params) {
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const TimeMesh mesh = TimeMesh::uniform(1.5, 6);
    const FlatTrajectory traj = random_flat_trajectory(rng, mesh);
    OcpProblem problem;
    problem.mesh = mesh;
    problem.params = params;
    problem.goal = recover_state(hover_state(Vector3(1, -1, 0.5), 0.4), params);
    Transcription tr(problem, traj);
    const Eigen::VectorXd z = tr.pack();

    const Eigen::VectorXd e = tr.eval_all(z);
    const SparseJacobian J = numerical_jacobian(tr, z, 1e-6);
    const Eigen::MatrixXd Jd = to_dense(tr, J);
    Eigen::VectorXd we(e.size());
    for (size_t b = 0; b < tr.blocks().size(); ++b) {
      const auto& info = tr.blocks()[b];
      we.segment(info.row_offset, info.rows) = info.weight * e.segment(info.row_offset, info.rows);
    }
    const Eigen::VectorXd grad = Jd.transpose() * we;

    Eigen::VectorXd grad_fd(z.size());
    Eigen::VectorXd zp = z;
    const double h = 1e-5;
    for (int c = 0; c < z.size(); ++c) {
      zp[c] = z[c] + h;
      const double cp = tr.cost(zp);
      zp[c] = z[c] - h;
      const double cm = tr.cost(zp);
      zp[c] = z[c];
      grad_fd[c] = (cp - cm) / (2 * h);
    }
    worst = std::max(worst, (grad - grad_fd).norm() / std::max(grad_fd.norm(), 1e-12));
  }
  return {"gradient_check", worst < 1e-3, "max relative gradient error " + fmt(worst) + " over 20 trajectories"};
}

CheckResult check_hermite(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    FlatState a, b;
    for (int i = 0; i < 3; ++i) {
      a.p[i] = u(rng);
      a.d1[i] = u(rng);
      b.p[i] = u(rng);
      b.d1[i] = u(rng);
    }
    a.gamma = u(rng);
    b.gamma = u(rng);
    const double dt = 0.7;
    const FlatState at = hermite_interpolate(a, b, dt, 0.0);
    const FlatState bt = hermite_interpolate(a, b, dt, 1.0);
    worst = std::max(worst, (at.p - a.p).norm());
    worst = std::max(worst, (bt.p - b.p).norm());
    worst = std::max(worst, std::abs(wrap_angle(at.gamma - a.gamma)));
    worst = std::max(worst, std::abs(wrap_angle(bt.gamma - b.gamma)));

    // cubic reproduction, endpoints carrying the consistent derivative stack
    Eigen::Vector4d c(u(rng), u(rng), u(rng), u(rng));
    auto cubic = [&](double t) { return c[0] + t * (c[1] + t * (c[2] + t * c[3])); };
    auto dcubic = [&](double t) { return c[1] + t * (2 * c[2] + t * 3 * c[3]); };
    auto ddcubic = [&](double t) { return 2 * c[2] + 6 * c[3] * t; };
    FlatState zi, zj;
    zi.p.setConstant(cubic(0));
    zi.d1.setConstant(dcubic(0));
    zi.d2.setConstant(ddcubic(0));
    zi.d3.setConstant(6 * c[3]);
    zj.p.setConstant(cubic(dt));
    zj.d1.setConstant(dcubic(dt));
    zj.d2.setConstant(ddcubic(dt));
    zj.d3.setConstant(6 * c[3]);
    const double s = 0.05 + 0.9 * (u(rng) * 0.5 + 0.5);
    const FlatState mid = hermite_interpolate(zi, zj, dt, s);
    worst = std::max(worst, std::abs(mid.p[0] - cubic(s * dt)));
    worst = std::max(worst, std::abs(mid.d1[0] - dcubic(s * dt)));
    worst = std::max(worst, std::abs(mid.d2[0] - ddcubic(s * dt)));
  }
  return {"hermite_interpolation", worst < 1e-12, "max endpoint/cubic error " + fmt(worst)};
}

CheckResult check_damped_solve(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::MatrixXd J(20, 12);
    Eigen::VectorXd e(20);
    for (int i = 0; i < J.size(); ++i) J.data()[i] = u(rng);
    for (int i = 0; i < 20; ++i) e[i] = u(rng);
    const Eigen::MatrixXd W = Eigen::MatrixXd::Identity(20, 20);
    const double lambda = 0.1;
    const Eigen::VectorXd dz = solve_damped(J, W, e, lambda);
    const Eigen::MatrixXd H = J.transpose() * J + lambda * Eigen::MatrixXd::Identity(12, 12);
    const Eigen::VectorXd b = J.transpose() * e;
    worst = std::max(worst, (H * dz - b).norm() / b.norm());
  }
  return {"damped_solve_residual", worst <= 1e-10, "max relative residual " + fmt(worst)};
}

CheckResult check_boxplus(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-20.0, 20.0);
  bool ok = true;
  for (int trial = 0; trial < 200; ++trial) {
    Eigen::VectorXd z(3), dz(3);
    for (int i = 0; i < 3; ++i) {
      z[i] = u(rng);
      dz[i] = u(rng);
    }
    const Eigen::VectorXd out = boxplus(z, dz, {1});
    if (!(out[1] > -M_PI && out[1] <= M_PI)) ok = false;
    if (std::abs(out[0] - (z[0] + dz[0])) > 1e-12) ok = false;
  }
  return {"boxplus_wrap", ok, "yaw stays in (-pi, pi], linear coordinates add"};
}

OcpProblem random_regulation_problem(std::mt19937_64& rng, const VehicleParams& params, int bins) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  OcpProblem problem;
  problem.mesh = TimeMesh::uniform(1.5 + 0.5 * (u(rng) + 1.0), bins);
  problem.params = params;
  problem.goal = recover_state(hover_state(Vector3(u(rng), u(rng), 0.5 * u(rng)), 0.8 * u(rng)), params);
  RigidBodyState start;
  start.p = Vector3(u(rng), u(rng), 0.5 * u(rng)) + Vector3(0, 0, 2.0);
  start.R = rotation_z(0.8 * u(rng));
  problem.initial_state = start;
  return problem;
}

CheckResult check_refine_invariants(std::mt19937_64& rng, const VehicleParams& params) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  LsConfig solver;
  int violations = 0;
  std::string first;
  for (int trial = 0; trial < 20; ++trial) {
    const int bins = 4 + static_cast<int>(u(rng) * 4.99);
    OcpProblem problem = random_regulation_problem(rng, params, bins);
    FlatTrajectory guess = initial_guess(problem);
    guess.nodes[0].p = problem.initial_state->p;
    guess.nodes[0].d1 = problem.initial_state->v;
    guess.nodes[0].gamma = yaw_from_rotation(problem.initial_state->R);

    FlatTrajectory coarse;
    try {
      Transcription tr(problem, guess);
      coarse = tr.unpack(optimize(tr, tr.pack(), solver).z);
    } catch (const std::exception&) {
      continue;  // rare unlucky instance; invariants are about refine()
    }

    RefineConfig cfg;
    cfg.err_threshold = std::pow(10.0, -6.0 + 2.0 * u(rng));
    cfg.max_passes = 1 + static_cast<int>(u(rng) * 2.99);
    cfg.initial_nodes = 1 + static_cast<int>(u(rng) * (bins - 1));
    const double segment_end = coarse.mesh.time(cfg.initial_nodes);

    RefineResult rr;
    try {
      rr = refine(coarse, problem, cfg, solver);
    } catch (const std::exception&) {
      continue;
    }

    auto fail = [&](const std::string& what) {
      ++violations;
      if (first.empty()) first = what;
    };
    if (!rr.traj.mesh.contains_all(coarse.mesh)) fail("node conservation");
    for (double t : rr.traj.mesh.times()) {
      bool inserted = true;
      for (double t0 : coarse.mesh.times()) {
        if (std::abs(t0 - t) < 1e-12) inserted = false;
      }
      if (inserted && t > segment_end + 1e-12) fail("locality");
    }
    for (int i = 0; i < coarse.size(); ++i) {
      if (coarse.mesh.time(i) <= segment_end + 1e-12) continue;
      // tail node: find it in the refined mesh and require bitwise equality
      bool found = false;
      for (int j = 0; j < rr.traj.size(); ++j) {
        if (rr.traj.mesh.time(j) == coarse.mesh.time(i)) {
          found = true;
          if (rr.traj.nodes[j].to_vector() != coarse.nodes[i].to_vector()) fail("tail immutability");
        }
      }
      if (!found) fail("tail node missing");
    }
    if (rr.stats.max_error_after > rr.stats.max_error_before) fail("error non-increase");
    const int cap = coarse.mesh.intervals();
    if (rr.stats.nodes_added > std::min(cap, (cfg.initial_nodes + rr.stats.nodes_added) * cfg.max_passes)) {
      fail("bounded growth");
    }
  }
  return {"refine_invariants", violations == 0,
          violations == 0 ? "node conservation, locality, tail immutability, error non-increase"
                          : fmt(violations) + " violations, first: " + first};
}

CheckResult check_warm_start() {
  const TimeMesh mesh = TimeMesh::uniform(2.0, 4);
  FlatTrajectory traj;
  traj.mesh = mesh;
  for (int k = 0; k <= 4; ++k) {
    FlatState fs = poly_flat(mesh.time(k));
    traj.nodes.push_back(fs);
  }
  const FlatTrajectory same = warm_start(traj, 0.0);
  const FlatTrajectory shifted = warm_start(traj, mesh.dt(0));
  double worst = 0.0;
  for (int k = 0; k <= 4; ++k) {
    worst = std::max(worst, (same.nodes[k].to_vector() - traj.nodes[k].to_vector()).norm());
  }
  for (int k = 0; k + 1 <= 4; ++k) {
    worst = std::max(worst, (shifted.nodes[k].to_vector() - traj.nodes[k + 1].to_vector()).norm());
  }
  worst = std::max(worst, (shifted.nodes[4].to_vector() - traj.nodes[4].to_vector()).norm());
  return {"warm_start_shift", worst < 1e-12, "identity at zero shift, index shift at one interval"};
}

CheckResult check_determinism(const VehicleParams& params) {
  ControlTask task;
  task.goal = hover_state(Vector3(0.5, -0.3, 0.2), 0.3);
  NmpcConfig cfg;
  cfg.horizon = 1.0;
  cfg.bins = 5;
  cfg.dt_ctrl = 0.1;
  cfg.refine.initial_nodes = 3;
  EpisodeOptions opts;
  opts.duration = 1.0;
  opts.settle_tolerance.reset();
  const EpisodeLog a = run_closed_loop(task, cfg, params, opts);
  const EpisodeLog b = run_closed_loop(task, cfg, params, opts);
  bool same = a.records.size() == b.records.size() && a.failed == b.failed;
  if (same) {
    for (size_t i = 0; i < a.records.size(); ++i) {
      const auto& ra = a.records[i];
      const auto& rb = b.records[i];
      same = same && ra.state.p == rb.state.p && ra.state.v == rb.state.v && ra.state.R == rb.state.R &&
             ra.state.omega == rb.state.omega && ra.input.thrust == rb.input.thrust && ra.input.tau == rb.input.tau &&
             ra.cost == rb.cost && ra.ls_iterations == rb.ls_iterations;
    }
  }
  return {"determinism", same, "two identical closed-loop runs produce bit-identical logs"};
}

}  // namespace

FlatTrajectory random_flat_trajectory(std::mt19937_64& rng, const TimeMesh& mesh) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  // Bounded-acceleration polynomials keep every node away from the thrust
  // singularity.
  double c[3][5];
  for (int axis = 0; axis < 3; ++axis) {
    c[axis][0] = 2.0 * u(rng);
    c[axis][1] = 1.0 * u(rng);
    c[axis][2] = 0.3 * u(rng);
    c[axis][3] = 0.1 * u(rng);
    c[axis][4] = 0.03 * u(rng);
  }
  const double a0 = 1.5 * u(rng), a1 = 0.5 * u(rng), a2 = 0.2 * u(rng);

  FlatTrajectory out;
  out.mesh = mesh;
  out.nodes.resize(mesh.size());
  for (int k = 0; k < mesh.size(); ++k) {
    const double t = mesh.time(k);
    FlatState fs;
    for (int axis = 0; axis < 3; ++axis) {
      const double* a = c[axis];
      fs.p[axis] = a[0] + t * (a[1] + t * (a[2] + t * (a[3] + t * a[4])));
      fs.d1[axis] = a[1] + t * (2 * a[2] + t * (3 * a[3] + t * 4 * a[4]));
      fs.d2[axis] = 2 * a[2] + t * (6 * a[3] + t * 12 * a[4]);
      fs.d3[axis] = 6 * a[3] + t * 24 * a[4];
      fs.d4[axis] = 24 * a[4];
    }
    fs.gamma = wrap_angle(a0 + t * (a1 + t * a2));
    fs.dgamma1 = a1 + 2 * a2 * t;
    fs.dgamma2 = 2 * a2;
    out.nodes[k] = fs;
  }
  return out;
}

std::vector<CheckResult> run_validation(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const VehicleParams params;
  std::vector<CheckResult> out;
  out.push_back(check_round_trip(params));
  out.push_back(check_rotation_rate(params));
  out.push_back(check_so3_invariance(params));
  out.push_back(check_gradient(rng, params));
  out.push_back(check_hermite(rng));
  out.push_back(check_damped_solve(rng));
  out.push_back(check_boxplus(rng));
  out.push_back(check_refine_invariants(rng, params));
  out.push_back(check_warm_start());
  out.push_back(check_determinism(params));
  return out;
}

}  // namespace flatmpc
