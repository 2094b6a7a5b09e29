#include "flatmpc/mesh_refine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "flatmpc/errors.hpp"

namespace flatmpc {

namespace {

double now_ms() {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

// Yaw rate consistent with the flat frame construction, recovered from a
// propagated rigid-body state.
double yaw_rate_from_state(const RigidBodyState& s) {
  const double yaw = yaw_from_rotation(s.R);
  const Vector3 xc(std::cos(yaw), std::sin(yaw), 0.0);
  const Vector3 yc(-std::sin(yaw), std::cos(yaw), 0.0);
  const Vector3 rz = s.R.col(2);
  const double n = rz.cross(xc).norm();
  const double denom = yc.dot(s.R.col(1));
  if (std::abs(denom) < 1e-9) {
    throw SingularFlatState("yaw_rate_from_state: degenerate heading projection");
  }
  return (s.omega.z() * n - s.omega.x() * xc.dot(rz)) / denom;
}

}  // namespace

void RefineConfig::validate(int mesh_intervals) const {
  if (err_threshold <= 0) throw ConfigError("RefineConfig: err_threshold must be positive");
  if (max_passes < 1) throw ConfigError("RefineConfig: max_passes must be at least 1");
  if (initial_nodes < 1 || initial_nodes >= mesh_intervals) {
    throw ConfigError("RefineConfig: initial_nodes must satisfy 1 <= N_i < interval count");
  }
}

double ErrorProfile::max() const {
  double m = 0.0;
  for (double e : eps) m = std::max(m, e);
  return m;
}

ErrorProfile discretization_error(const FlatTrajectory& traj, const VehicleParams& params, int first, int last,
                                  const StepRule& rule, int compare_order) {
  ErrorProfile out;
  out.eps.assign(last - first + 1, 0.0);
  for (int k = first + 1; k <= last; ++k) {
    const FlatRecovery rec = recover(traj.nodes[k - 1], params);
    const RigidBodyState prop = step_fine(rec.state, rec.input, traj.mesh.dt(k - 1), params, rule);

    const FlatState& node = traj.nodes[k];
    Eigen::Matrix<double, 11, 1> diff = Eigen::Matrix<double, 11, 1>::Zero();
    diff.segment<3>(0) = prop.p - node.p;
    diff[3] = wrap_angle(yaw_from_rotation(prop.R) - node.gamma);
    if (compare_order >= 1) {
      diff.segment<3>(4) = prop.v - node.d1;
      diff[7] = yaw_rate_from_state(prop) - node.dgamma1;
    }
    if (compare_order >= 2) {
      // Acceleration implied by the propagated attitude under the held
      // thrust; this is where the zero-order-hold error shows first.
      const Vector3 acc = params.gravity_vec() + prop.R.col(2) * (rec.input.thrust / params.mass);
      diff.segment<3>(8) = acc - node.d2;
    }
    out.eps[k - first] = diff.squaredNorm();
  }
  return out;
}

FlatState hermite_interpolate(const FlatState& zi, const FlatState& zj, double dt_ij, double t) {
  // Cubic Hermite basis on the unit interval.
  const double t2 = t * t, t3 = t2 * t;
  const double h00 = 2 * t3 - 3 * t2 + 1;
  const double h10 = t3 - 2 * t2 + t;
  const double h01 = 3 * t2 - 2 * t3;
  const double h11 = t3 - t2;

  // Each stored order is interpolated with its own next derivative as the
  // tangent (scaled by dt for the unit-interval parametrization); the highest
  // orders have no tangent and fall back to linear interpolation.
  auto cubic = [&](double vi, double di, double vj, double dj) {
    return h00 * vi + h10 * di * dt_ij + h01 * vj + h11 * dj * dt_ij;
  };

  FlatState out;
  for (int a = 0; a < 3; ++a) {
    out.p[a] = cubic(zi.p[a], zi.d1[a], zj.p[a], zj.d1[a]);
    out.d1[a] = cubic(zi.d1[a], zi.d2[a], zj.d1[a], zj.d2[a]);
    out.d2[a] = cubic(zi.d2[a], zi.d3[a], zj.d2[a], zj.d3[a]);
    out.d3[a] = cubic(zi.d3[a], zi.d4[a], zj.d3[a], zj.d4[a]);
    out.d4[a] = (1.0 - t) * zi.d4[a] + t * zj.d4[a];
  }
  const double gj = zi.gamma + wrap_angle(zj.gamma - zi.gamma);
  out.gamma = wrap_angle(cubic(zi.gamma, zi.dgamma1, gj, zj.dgamma1));
  out.dgamma1 = cubic(zi.dgamma1, zi.dgamma2, zj.dgamma1, zj.dgamma2);
  out.dgamma2 = (1.0 - t) * zi.dgamma2 + t * zj.dgamma2;
  return out;
}

FlatState sample_trajectory(const FlatTrajectory& traj, double t) {
  if (t <= traj.mesh.time(0)) return traj.nodes.front();
  if (t >= traj.mesh.horizon()) return traj.nodes.back();
  const auto& times = traj.mesh.times();
  const int i = static_cast<int>(std::upper_bound(times.begin(), times.end(), t) - times.begin()) - 1;
  // Exact node hits return the node verbatim, including the derivative fields
  // the interpolating cubic cannot reproduce.
  constexpr double kNodeTol = 1e-9;
  if (t - times[i] < kNodeTol) return traj.nodes[i];
  if (times[i + 1] - t < kNodeTol) return traj.nodes[i + 1];
  const double dt = traj.mesh.dt(i);
  return hermite_interpolate(traj.nodes[i], traj.nodes[i + 1], dt, (t - times[i]) / dt);
}

RefineResult refine(const FlatTrajectory& traj, const OcpProblem& problem, const RefineConfig& cfg,
                    const LsConfig& solver_cfg) {
  const double t_start = now_ms();
  cfg.validate(traj.mesh.intervals());

  RefineResult out;
  out.traj = traj;
  FlatTrajectory& work = out.traj;

  int n_tm = cfg.initial_nodes;
  const int cap = cfg.max_added >= 0 ? cfg.max_added : traj.mesh.intervals();

  ErrorProfile eps = discretization_error(work, problem.params, 0, n_tm, StepRule{}, cfg.compare_order);
  out.stats.max_error_before = eps.max();

  for (int pass = 0; pass < cfg.max_passes; ++pass) {
    // Snapshot of the offending nodes for this pass; each gets one midpoint
    // in its preceding interval. Descending order keeps indices valid.
    std::vector<int> offenders;
    for (int k = 1; k <= n_tm; ++k) {
      if (eps.eps[k] > cfg.err_threshold) offenders.push_back(k);
    }
    if (offenders.empty()) break;

    int inserted = 0;
    for (auto it = offenders.rbegin(); it != offenders.rend(); ++it) {
      if (out.stats.nodes_added >= cap) {
        out.stats.budget_exhausted = true;
        break;
      }
      const int k = *it;
      const double t_mid = 0.5 * (work.mesh.time(k - 1) + work.mesh.time(k));
      const FlatState mid = hermite_interpolate(work.nodes[k - 1], work.nodes[k], work.mesh.dt(k - 1), 0.5);
      work.mesh.insert(t_mid);
      work.nodes.insert(work.nodes.begin() + k, mid);
      ++n_tm;
      ++inserted;
      ++out.stats.nodes_added;
    }
    if (inserted == 0) break;
    out.stats.passes = pass + 1;

    // Re-optimize the scaled sub-problem over [0, n_tm]; the tail stays
    // frozen and couples only through the final continuity block.
    Transcription sub(problem, work, 0, n_tm, 0, n_tm);
    OptimizeResult res = optimize(sub, sub.pack(), solver_cfg);
    work = sub.unpack(res.z);

    eps = discretization_error(work, problem.params, 0, n_tm, StepRule{}, cfg.compare_order);
  }

  out.stats.max_error_after = eps.max();
  if (out.stats.max_error_after > out.stats.max_error_before) {
    // Best-effort guarantee: never return a segment worse than the input.
    out.traj = traj;
    out.stats.reverted = true;
    out.stats.max_error_after = out.stats.max_error_before;
    out.stats.nodes_added = 0;
  }
  out.stats.total_ms = now_ms() - t_start;
  return out;
}

}  // namespace flatmpc
