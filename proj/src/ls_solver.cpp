#include "flatmpc/ls_solver.hpp"

#include <chrono>
#include <cmath>
#include <limits>

#include "flatmpc/errors.hpp"
#include "flatmpc/flat_model.hpp"

namespace flatmpc {

namespace {

double now_ms() {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

}  // namespace

StackedError stack_error(const std::vector<ResidualBlock>& blocks) {
  if (blocks.empty()) throw DimensionMismatch("stack_error: empty block list");
  int total = 0;
  for (const auto& b : blocks) {
    if (b.weight.rows() != b.r.size() || b.weight.cols() != b.r.size()) {
      throw DimensionMismatch("stack_error: weight size disagrees with residual size");
    }
    total += static_cast<int>(b.r.size());
  }
  StackedError out;
  out.e.resize(total);
  out.weight = Eigen::MatrixXd::Zero(total, total);
  int at = 0;
  for (const auto& b : blocks) {
    const int n = static_cast<int>(b.r.size());
    out.e.segment(at, n) = b.r;
    out.weight.block(at, at, n, n) = b.weight;
    at += n;
  }
  return out;
}

Eigen::MatrixXd numerical_jacobian(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& fn,
                                   const Eigen::VectorXd& z, double h) {
  Eigen::VectorXd zp = z;
  zp[0] += h;
  const Eigen::VectorXd probe = fn(zp);
  zp[0] = z[0];
  Eigen::MatrixXd J(probe.size(), z.size());
  for (int c = 0; c < z.size(); ++c) {
    zp[c] = z[c] + h;
    const Eigen::VectorXd rp = fn(zp);
    zp[c] = z[c] - h;
    const Eigen::VectorXd rm = fn(zp);
    zp[c] = z[c];
    J.col(c) = (rp - rm) / (2.0 * h);
  }
  return J;
}

Eigen::VectorXd solve_damped(const Eigen::MatrixXd& J, const Eigen::MatrixXd& weight, const Eigen::VectorXd& e,
                             double lambda) {
  const Eigen::MatrixXd H = J.transpose() * weight * J + lambda * Eigen::MatrixXd::Identity(J.cols(), J.cols());
  const Eigen::VectorXd b = J.transpose() * weight * e;
  Eigen::LLT<Eigen::MatrixXd> llt(H);
  if (llt.info() != Eigen::Success) {
    throw FactorizationFailure("solve_damped: damped normal matrix is not positive definite");
  }
  const Eigen::VectorXd dz = llt.solve(b);
  if (!dz.allFinite()) {
    throw FactorizationFailure("solve_damped: factorization produced non-finite values");
  }
  return dz;
}

Eigen::VectorXd boxplus(const Eigen::VectorXd& z, const Eigen::VectorXd& dz, const std::vector<int>& angle_indices) {
  if (z.size() != dz.size()) throw DimensionMismatch("boxplus: dimension mismatch");
  Eigen::VectorXd out = z + dz;
  for (int i : angle_indices) out[i] = wrap_angle(out[i]);
  return out;
}

void DecisionLayout::finalize() {
  offsets.assign(active.size(), 0);
  angle_indices.clear();
  dim = 0;
  for (size_t i = 0; i < active.size(); ++i) {
    offsets[i] = dim;
    for (size_t c = 0; c < active[i].size(); ++c) {
      for (int a : angle_coords) {
        if (active[i][c] == a) angle_indices.push_back(dim + static_cast<int>(c));
      }
    }
    dim += static_cast<int>(active[i].size());
  }
}

int LsProblem::residual_dim() const {
  const auto& bs = blocks();
  if (bs.empty()) return 0;
  return bs.back().row_offset + bs.back().rows;
}

Eigen::VectorXd LsProblem::eval_all(const Eigen::VectorXd& z) const {
  Eigen::VectorXd e(residual_dim());
  for (size_t b = 0; b < blocks().size(); ++b) {
    const auto& info = blocks()[b];
    eval_block(static_cast<int>(b), z, e.segment(info.row_offset, info.rows));
  }
  return e;
}

double LsProblem::cost(const Eigen::VectorXd& z) const {
  double c = 0.0;
  Eigen::VectorXd r;
  for (size_t b = 0; b < blocks().size(); ++b) {
    const auto& info = blocks()[b];
    r.resize(info.rows);
    eval_block(static_cast<int>(b), z, r);
    c += r.dot(info.weight * r);
  }
  return 0.5 * c;
}

SparseJacobian numerical_jacobian(const LsProblem& problem, const Eigen::VectorXd& z, double h) {
  const DecisionLayout& layout = problem.layout();
  const auto& blocks = problem.blocks();

  SparseJacobian J;
  J.mats.resize(blocks.size());
  std::vector<std::vector<int>> node_blocks(layout.node_count());
  for (size_t b = 0; b < blocks.size(); ++b) {
    for (int s = 0; s < blocks[b].node_count; ++s) {
      const int node = blocks[b].nodes[s];
      const int cols = layout.node_size(node);
      J.mats[b][s] = Eigen::MatrixXd::Zero(blocks[b].rows, cols);
      if (cols > 0) node_blocks[node].push_back(static_cast<int>(b));
    }
  }

  Eigen::VectorXd zp = z;
  Eigen::VectorXd rp, rm;
  for (int node = 0; node < layout.node_count(); ++node) {
    const int cols = layout.node_size(node);
    for (int c = 0; c < cols; ++c) {
      const int g = layout.offsets[node] + c;
      for (int b : node_blocks[node]) {
        const auto& info = blocks[b];
        rp.resize(info.rows);
        rm.resize(info.rows);
        zp[g] = z[g] + h;
        problem.eval_block(b, zp, rp);
        zp[g] = z[g] - h;
        problem.eval_block(b, zp, rm);
        zp[g] = z[g];
        const int slot = (info.nodes[0] == node) ? 0 : 1;
        J.mats[b][slot].col(c) = (rp - rm) / (2.0 * h);
      }
      zp[g] = z[g];
    }
  }
  return J;
}

Eigen::MatrixXd to_dense(const LsProblem& problem, const SparseJacobian& J) {
  const DecisionLayout& layout = problem.layout();
  Eigen::MatrixXd dense = Eigen::MatrixXd::Zero(problem.residual_dim(), layout.dim);
  const auto& blocks = problem.blocks();
  for (size_t b = 0; b < blocks.size(); ++b) {
    const auto& info = blocks[b];
    for (int s = 0; s < info.node_count; ++s) {
      const int node = info.nodes[s];
      const int cols = layout.node_size(node);
      if (cols == 0) continue;
      dense.block(info.row_offset, layout.offsets[node], info.rows, cols) = J.mats[b][s];
    }
  }
  return dense;
}

namespace {

// Normal equations accumulated per active node. Residual blocks touch at most
// two adjacent nodes, so H is block tridiagonal.
struct NormalEquations {
  std::vector<int> nodes;  // active node indices, contiguous in the mesh
  std::vector<int> pos;    // node index -> position in `nodes`, or -1
  std::vector<Eigen::MatrixXd> diag;
  std::vector<Eigen::MatrixXd> sub;  // sub[i]: rows = nodes[i+1], cols = nodes[i]
  std::vector<Eigen::VectorXd> rhs;
};

NormalEquations assemble(const LsProblem& problem, const SparseJacobian& J, const Eigen::VectorXd& e) {
  const DecisionLayout& layout = problem.layout();
  NormalEquations ne;
  ne.pos.assign(layout.node_count(), -1);
  for (int i = 0; i < layout.node_count(); ++i) {
    if (layout.node_size(i) > 0) {
      ne.pos[i] = static_cast<int>(ne.nodes.size());
      ne.nodes.push_back(i);
    }
  }
  const int m = static_cast<int>(ne.nodes.size());
  ne.diag.resize(m);
  ne.rhs.resize(m);
  for (int i = 0; i < m; ++i) {
    const int n = layout.node_size(ne.nodes[i]);
    ne.diag[i] = Eigen::MatrixXd::Zero(n, n);
    ne.rhs[i] = Eigen::VectorXd::Zero(n);
  }
  ne.sub.resize(m > 0 ? m - 1 : 0);
  for (int i = 0; i + 1 < m; ++i) {
    ne.sub[i] = Eigen::MatrixXd::Zero(layout.node_size(ne.nodes[i + 1]), layout.node_size(ne.nodes[i]));
  }

  const auto& blocks = problem.blocks();
  for (size_t b = 0; b < blocks.size(); ++b) {
    const auto& info = blocks[b];
    const Eigen::VectorXd we = info.weight * e.segment(info.row_offset, info.rows);
    for (int s = 0; s < info.node_count; ++s) {
      const int ni = info.nodes[s];
      if (layout.node_size(ni) == 0) continue;
      const int pi = ne.pos[ni];
      const Eigen::MatrixXd wj = info.weight * J.mats[b][s];
      ne.diag[pi].noalias() += J.mats[b][s].transpose() * wj;
      ne.rhs[pi].noalias() += J.mats[b][s].transpose() * we;
      for (int t = s + 1; t < info.node_count; ++t) {
        const int nj = info.nodes[t];
        if (layout.node_size(nj) == 0) continue;
        ne.sub[pi].noalias() += J.mats[b][t].transpose() * wj;
      }
    }
  }
  return ne;
}

Eigen::VectorXd solve_dense(const NormalEquations& ne, const DecisionLayout& layout, double lambda) {
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(layout.dim, layout.dim);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(layout.dim);
  const int m = static_cast<int>(ne.nodes.size());
  for (int i = 0; i < m; ++i) {
    const int oi = layout.offsets[ne.nodes[i]];
    const int ni = layout.node_size(ne.nodes[i]);
    H.block(oi, oi, ni, ni) = ne.diag[i];
    b.segment(oi, ni) = ne.rhs[i];
    if (i + 1 < m) {
      const int oj = layout.offsets[ne.nodes[i + 1]];
      const int nj = layout.node_size(ne.nodes[i + 1]);
      H.block(oj, oi, nj, ni) = ne.sub[i];
      H.block(oi, oj, ni, nj) = ne.sub[i].transpose();
    }
  }
  H.diagonal().array() += lambda;
  Eigen::LLT<Eigen::MatrixXd> llt(H);
  if (llt.info() != Eigen::Success) {
    throw FactorizationFailure("optimize: dense factorization failed");
  }
  const Eigen::VectorXd dz = llt.solve(b);
  if (!dz.allFinite()) throw FactorizationFailure("optimize: dense solve produced non-finite values");
  return dz;
}

// Block-tridiagonal Cholesky: D~_i = D_i - B_{i-1} D~_{i-1}^{-1} B_{i-1}^T,
// forward then backward substitution.
Eigen::VectorXd solve_tridiag(const NormalEquations& ne, const DecisionLayout& layout, double lambda) {
  const int m = static_cast<int>(ne.nodes.size());
  std::vector<Eigen::LLT<Eigen::MatrixXd>> factors(m);
  for (int i = 0; i < m; ++i) {
    Eigen::MatrixXd d = ne.diag[i];
    d.diagonal().array() += lambda;
    if (i > 0) {
      d.noalias() -= ne.sub[i - 1] * factors[i - 1].solve(ne.sub[i - 1].transpose());
    }
    factors[i].compute(d);
    if (factors[i].info() != Eigen::Success) {
      throw FactorizationFailure("optimize: block-tridiagonal factorization failed");
    }
  }

  std::vector<Eigen::VectorXd> y(m);
  for (int i = 0; i < m; ++i) {
    y[i] = ne.rhs[i];
    if (i > 0) y[i].noalias() -= ne.sub[i - 1] * factors[i - 1].solve(y[i - 1]);
  }

  Eigen::VectorXd x(layout.dim);
  Eigen::VectorXd x_next;
  for (int i = m - 1; i >= 0; --i) {
    Eigen::VectorXd t = y[i];
    if (i + 1 < m) t.noalias() -= ne.sub[i].transpose() * x_next;
    x_next = factors[i].solve(t);
    x.segment(layout.offsets[ne.nodes[i]], layout.node_size(ne.nodes[i])) = x_next;
  }
  if (!x.allFinite()) throw FactorizationFailure("optimize: block-tridiagonal solve produced non-finite values");
  return x;
}

}  // namespace

OptimizeResult optimize(const LsProblem& problem, const Eigen::VectorXd& z0, const LsConfig& cfg) {
  const double t_start = now_ms();
  const DecisionLayout& layout = problem.layout();

  OptimizeResult out;
  out.z = z0;
  double cost = problem.cost(out.z);
  out.stats.cost_history.push_back(cost);

  double lambda = cfg.lambda0;
  bool any_accepted = false;
  for (int iter = 0; iter < cfg.max_iterations; ++iter) {
    out.stats.iterations = iter + 1;

    const double t_j = now_ms();
    const Eigen::VectorXd e = problem.eval_all(out.z);
    const SparseJacobian J = numerical_jacobian(problem, out.z, cfg.fd_step);
    out.stats.jacobian_ms += now_ms() - t_j;
    const NormalEquations ne = assemble(problem, J, e);

    bool accepted = false;
    bool tiny_step = false;
    while (!accepted) {
      Eigen::VectorXd dz;
      const double t_s = now_ms();
      try {
        dz = (layout.dim < cfg.dense_threshold) ? solve_dense(ne, layout, lambda) : solve_tridiag(ne, layout, lambda);
      } catch (const FactorizationFailure&) {
        out.stats.linear_solve_ms += now_ms() - t_s;
        lambda *= cfg.lambda_grow;
        if (lambda > cfg.lambda_max) {
          if (any_accepted) {
            out.stats.converged = true;
            out.stats.stop_reason = "lambda_max";
            tiny_step = true;
            break;
          }
          out.stats.total_ms = now_ms() - t_start;
          throw DivergenceError("optimize: factorization failed up to the damping cap", out.stats.cost_history);
        }
        continue;
      }
      out.stats.linear_solve_ms += now_ms() - t_s;

      if (dz.lpNorm<Eigen::Infinity>() < cfg.step_tol) {
        tiny_step = true;
        break;
      }

      const Eigen::VectorXd candidate = boxplus(out.z, -dz, layout.angle_indices);
      double cand_cost = std::numeric_limits<double>::infinity();
      try {
        cand_cost = problem.cost(candidate);
      } catch (const SingularFlatState&) {
        // candidate crossed a flat singularity: reject and raise the damping
      }
      if (cand_cost < cost) {
        out.z = candidate;
        const double prev = cost;
        cost = cand_cost;
        out.stats.cost_history.push_back(cost);
        lambda = std::max(lambda * cfg.lambda_shrink, cfg.lambda_min);
        accepted = true;
        any_accepted = true;
        if (prev - cost < cfg.cost_tol * std::max(prev, 1e-300)) {
          out.stats.converged = true;
          out.stats.stop_reason = "cost_tol";
        }
      } else {
        ++out.stats.rejected_steps;
        lambda *= cfg.lambda_grow;
        if (lambda > cfg.lambda_max) {
          if (any_accepted) {
            // Progress was made and the remaining proposals fall below the
            // cost's numerical resolution: converged, not diverged.
            out.stats.converged = true;
            out.stats.stop_reason = "lambda_max";
            tiny_step = true;
            break;
          }
          out.stats.total_ms = now_ms() - t_start;
          throw DivergenceError("optimize: cost failed to decrease below the damping cap", out.stats.cost_history);
        }
      }
    }

    if (tiny_step) {
      out.stats.converged = true;
      out.stats.stop_reason = "step_tol";
      break;
    }
    if (out.stats.converged) break;
  }
  if (!out.stats.converged && out.stats.stop_reason.empty()) out.stats.stop_reason = "max_iterations";
  out.stats.final_lambda = lambda;
  out.stats.total_ms = now_ms() - t_start;
  return out;
}

}  // namespace flatmpc
