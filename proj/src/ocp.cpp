#include "flatmpc/ocp.hpp"

#include <array>
#include <cmath>

#include "flatmpc/errors.hpp"
#include "flatmpc/mesh_refine.hpp"

namespace flatmpc {

namespace {

// Node-0 coordinates that stay free when the start of the plan is pinned to a
// measurement: acceleration and higher derivatives plus the yaw rates. The
// pinned ones (p, d1, gamma) are exactly the directly measured flat outputs.
const std::vector<int> kFreeWhenPinned = {6, 7, 8, 9, 10, 11, 12, 13, 14, 16, 17};

// Typical magnitudes per derivative order; equalizes Jacobian column norms.
constexpr std::array<double, FlatState::kDim> kScales = {
    1.0, 1.0, 1.0,        // p
    2.0, 2.0, 2.0,        // d1
    5.0, 5.0, 5.0,        // d2
    25.0, 25.0, 25.0,     // d3
    100.0, 100.0, 100.0,  // d4
    1.0,                  // gamma (unscaled: wraps)
    2.0, 10.0};           // yaw rates

std::vector<int> all_coords() {
  std::vector<int> v(FlatState::kDim);
  for (int i = 0; i < FlatState::kDim; ++i) v[i] = i;
  return v;
}

}  // namespace

OcpWeights OcpWeights::defaults() {
  OcpWeights w;
  Eigen::Matrix<double, 12, 1> qd;
  qd << 10, 10, 10, 1, 1, 1, 5, 5, 5, 0.1, 0.1, 0.1;
  w.q = qd.asDiagonal();
  w.r_w = Eigen::Vector4d(0.001, 1, 1, 1).asDiagonal();
  w.a_l = 100.0 * Eigen::Matrix<double, 12, 12>::Identity();
  return w;
}

RigidBodyState OcpProblem::target_at(double t) const {
  if (tracking()) return recover_state(reference(t), params);
  return *goal;
}

void OcpProblem::validate() const {
  if (static_cast<bool>(goal) == tracking()) {
    throw ConfigError("OcpProblem: exactly one of goal and reference must be set");
  }
  if (mesh.size() < 2) throw ConfigError("OcpProblem: mesh needs at least two nodes");
}

Transcription::Transcription(const OcpProblem& problem, FlatTrajectory base)
    : Transcription(problem, std::move(base), 0, -1, 0, -1) {}

Transcription::Transcription(const OcpProblem& problem, FlatTrajectory base_in, int emit_first, int emit_last,
                             int active_first, int active_last)
    : problem_(&problem), base_(std::move(base_in)) {
  problem.validate();
  if (!base_.consistent()) throw DimensionMismatch("Transcription: trajectory does not match its mesh");
  const int nodes = base_.size();
  if (emit_last < 0) emit_last = nodes - 1;
  if (active_last < 0) active_last = nodes - 1;

  // Decision layout: listed nodes active, node 0 partially pinned when the
  // problem starts from a measurement.
  layout_.node_dim = FlatState::kDim;
  layout_.angle_coords = {FlatState::kYawIndex};
  layout_.active.assign(nodes, {});
  for (int i = active_first; i <= active_last; ++i) {
    if (i == 0 && problem.initial_state) {
      layout_.active[i] = kFreeWhenPinned;
    } else {
      layout_.active[i] = all_coords();
    }
  }
  layout_.finalize();

  // Residual blocks. nu/phi/gamma all exist for steps 0..nodes-2; the last
  // node enters only through the final continuity block.
  const int last_step = std::min(emit_last, nodes - 2);
  targets_.resize(nodes);
  for (int k = emit_first; k <= last_step; ++k) targets_[k] = problem.target_at(base_.mesh.time(k));

  int rows = 0;
  auto push = [&](Kind kind, int k, int r, Eigen::MatrixXd weight, std::array<int, 2> nds, int count) {
    entries_.push_back({kind, k});
    BlockInfo info;
    info.rows = r;
    info.weight = std::move(weight);
    info.nodes = nds;
    info.node_count = count;
    info.row_offset = rows;
    rows += r;
    blocks_.push_back(std::move(info));
  };

  if (active_first == 0 && problem.initial_state) {
    push(Kind::anchor, 0, 6, problem.weights.anchor * Eigen::MatrixXd::Identity(6, 6), {0, -1}, 1);
  }
  for (int k = emit_first; k <= last_step; ++k) {
    push(Kind::nu, k, 12, problem.weights.q, {k, -1}, 1);
    push(Kind::phi, k, 4, problem.weights.r_w, {k, -1}, 1);
    // The continuity penalty integrates over the actual interval: the defect
    // magnitude scales with dt, so the weight scales with 1/dt to keep the
    // cost mesh-consistent under refinement.
    push(Kind::gamma, k, 12, problem.weights.a_l / base_.mesh.dt(k), {k, k + 1}, 2);
  }
}

const std::array<double, FlatState::kDim>& Transcription::coordinate_scales() { return kScales; }

FlatState Transcription::node_from(const Eigen::VectorXd& z, int i) const {
  const auto& act = layout_.active[i];
  if (act.empty()) return base_.nodes[i];
  Eigen::Matrix<double, FlatState::kDim, 1> v = base_.nodes[i].to_vector();
  const int off = layout_.offsets[i];
  for (size_t c = 0; c < act.size(); ++c) v[act[c]] = z[off + static_cast<int>(c)] * kScales[act[c]];
  return FlatState::from_vector(v);
}

void Transcription::eval_block(int block, const Eigen::VectorXd& z, Eigen::Ref<Eigen::VectorXd> out) const {
  const Entry& entry = entries_[block];
  const VehicleParams& params = problem_->params;
  switch (entry.kind) {
    case Kind::anchor: {
      const RigidBodyState s = recover_state(node_from(z, 0), params);
      const RigidBodyState& meas = *problem_->initial_state;
      out.segment<3>(0) = so3_log(meas.R.transpose() * s.R);
      out.segment<3>(3) = s.omega - meas.omega;
      break;
    }
    case Kind::nu: {
      out = state_difference(recover_state(node_from(z, entry.k), params), targets_[entry.k]);
      break;
    }
    case Kind::phi: {
      const ControlInput u = recover_input(node_from(z, entry.k), params);
      out[0] = u.thrust;
      out.segment<3>(1) = u.tau;
      break;
    }
    case Kind::gamma: {
      const FlatRecovery rec = recover(node_from(z, entry.k), params);
      const RigidBodyState next = recover_state(node_from(z, entry.k + 1), params);
      const RigidBodyState pred = step_coarse(rec.state, rec.input, base_.mesh.dt(entry.k), params);
      out = state_difference(next, pred);
      break;
    }
  }
}

Eigen::VectorXd Transcription::pack() const {
  Eigen::VectorXd z(layout_.dim);
  for (int i = 0; i < layout_.node_count(); ++i) {
    const auto& act = layout_.active[i];
    if (act.empty()) continue;
    const auto v = base_.nodes[i].to_vector();
    for (size_t c = 0; c < act.size(); ++c) z[layout_.offsets[i] + static_cast<int>(c)] = v[act[c]] / kScales[act[c]];
  }
  return z;
}

FlatTrajectory Transcription::unpack(const Eigen::VectorXd& z) const {
  FlatTrajectory out = base_;
  for (int i = 0; i < layout_.node_count(); ++i) {
    if (!layout_.active[i].empty()) out.nodes[i] = node_from(z, i);
  }
  return out;
}

std::vector<ResidualBlock> transcribe(const OcpProblem& problem, const FlatTrajectory& traj, int emit_first,
                                      int emit_last) {
  Transcription t(problem, traj, emit_first, emit_last, emit_first, emit_last);
  const Eigen::VectorXd z = t.pack();
  std::vector<ResidualBlock> out;
  out.reserve(t.blocks().size());
  for (size_t b = 0; b < t.blocks().size(); ++b) {
    const BlockInfo& info = t.blocks()[b];
    ResidualBlock rb;
    rb.r.resize(info.rows);
    t.eval_block(static_cast<int>(b), z, rb.r);
    rb.weight = info.weight;
    for (int s = 0; s < info.node_count; ++s) rb.nodes.push_back(info.nodes[s]);
    out.push_back(std::move(rb));
  }
  return out;
}

std::vector<ResidualBlock> transcribe(const OcpProblem& problem, const FlatTrajectory& traj) {
  return transcribe(problem, traj, 0, traj.size() - 1);
}

FlatTrajectory initial_guess(const OcpProblem& problem) {
  problem.validate();
  FlatTrajectory out;
  out.mesh = problem.mesh;
  const int nodes = out.mesh.size();
  out.nodes.resize(nodes);

  if (problem.tracking()) {
    for (int k = 0; k < nodes; ++k) out.nodes[k] = problem.reference(out.mesh.time(k));
    return out;
  }

  const Vector3 goal_p = problem.goal->p;
  const double goal_yaw = yaw_from_rotation(problem.goal->R);
  const Vector3 start_p = problem.initial_state ? problem.initial_state->p : goal_p;
  const double start_yaw = problem.initial_state ? yaw_from_rotation(problem.initial_state->R) : goal_yaw;
  const double t_f = out.mesh.horizon();
  const double dyaw = wrap_angle(goal_yaw - start_yaw);
  for (int k = 0; k < nodes; ++k) {
    const double a = out.mesh.time(k) / t_f;
    FlatState fs;
    fs.p = start_p + a * (goal_p - start_p);
    fs.d1 = (goal_p - start_p) / t_f;
    fs.gamma = wrap_angle(start_yaw + a * dyaw);
    fs.dgamma1 = dyaw / t_f;
    out.nodes[k] = fs;
  }
  return out;
}

FlatTrajectory warm_start(const FlatTrajectory& prev, double dt_shift) {
  FlatTrajectory out;
  out.mesh = prev.mesh;
  out.nodes.resize(prev.size());
  for (int k = 0; k < prev.size(); ++k) {
    out.nodes[k] = sample_trajectory(prev, prev.mesh.time(k) + dt_shift);
  }
  return out;
}

FlatTrajectory resample(const FlatTrajectory& traj, const TimeMesh& mesh) {
  FlatTrajectory out;
  out.mesh = mesh;
  out.nodes.resize(mesh.size());
  for (int k = 0; k < mesh.size(); ++k) out.nodes[k] = sample_trajectory(traj, mesh.time(k));
  return out;
}

}  // namespace flatmpc
