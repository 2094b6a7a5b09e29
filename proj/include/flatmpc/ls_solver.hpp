#pragma once

#include <Eigen/Dense>
#include <array>
#include <functional>
#include <string>
#include <vector>

namespace flatmpc {

/// One weighted residual with the node indices it touches (at most two,
/// adjacent).
struct ResidualBlock {
  Eigen::VectorXd r;
  Eigen::MatrixXd weight;
  std::vector<int> nodes;
};

struct StackedError {
  Eigen::VectorXd e;
  Eigen::MatrixXd weight;  // block diagonal
};

/// Concatenates residual blocks in order into one error vector and the
/// matching block-diagonal weight.
StackedError stack_error(const std::vector<ResidualBlock>& blocks);

/// Dense central-difference Jacobian of an arbitrary residual function.
Eigen::MatrixXd numerical_jacobian(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& fn,
                                   const Eigen::VectorXd& z, double h);

/// Solves (J^T W J + lambda I) dz = J^T W e by Cholesky factorization.
/// The minimizing update is z ⊞ (-dz).
Eigen::VectorXd solve_damped(const Eigen::MatrixXd& J, const Eigen::MatrixXd& weight, const Eigen::VectorXd& e,
                             double lambda);

/// Per-coordinate addition with the listed coordinates re-wrapped to
/// (-pi, pi].
Eigen::VectorXd boxplus(const Eigen::VectorXd& z, const Eigen::VectorXd& dz, const std::vector<int>& angle_indices);

/// Active decision coordinates of a node-structured problem. Frozen nodes
/// have an empty active list and contribute no columns.
struct DecisionLayout {
  int node_dim = 0;                       ///< packed coordinates per node
  std::vector<int> angle_coords;          ///< per-node coordinate indices that wrap
  std::vector<std::vector<int>> active;   ///< per node: active coordinate indices

  // Derived by finalize():
  std::vector<int> offsets;
  int dim = 0;
  std::vector<int> angle_indices;         ///< global decision indices that wrap

  void finalize();
  int node_count() const { return static_cast<int>(active.size()); }
  int node_size(int i) const { return static_cast<int>(active[i].size()); }
};

/// Static description of one residual block of a structured problem.
struct BlockInfo {
  int rows = 0;
  Eigen::MatrixXd weight;
  std::array<int, 2> nodes{-1, -1};
  int node_count = 0;
  int row_offset = 0;
};

/// Node-structured least-squares problem: residual blocks touching at most
/// two adjacent nodes. Evaluation may throw SingularFlatState.
class LsProblem {
 public:
  virtual ~LsProblem() = default;
  virtual const DecisionLayout& layout() const = 0;
  virtual const std::vector<BlockInfo>& blocks() const = 0;
  virtual void eval_block(int block, const Eigen::VectorXd& z, Eigen::Ref<Eigen::VectorXd> out) const = 0;

  int residual_dim() const;
  /// Evaluates every block into a stacked residual vector.
  Eigen::VectorXd eval_all(const Eigen::VectorXd& z) const;
  /// 0.5 * e^T W e over all blocks.
  double cost(const Eigen::VectorXd& z) const;
};

/// Sparse Jacobian stored block-wise: for each residual block, one dense
/// sub-matrix per touched node (empty for frozen nodes).
struct SparseJacobian {
  std::vector<std::array<Eigen::MatrixXd, 2>> mats;
};

/// Central-difference Jacobian that re-evaluates only the blocks touching the
/// perturbed node.
SparseJacobian numerical_jacobian(const LsProblem& problem, const Eigen::VectorXd& z, double h);

/// Dense view of a sparse Jacobian (tests and small problems).
Eigen::MatrixXd to_dense(const LsProblem& problem, const SparseJacobian& J);

struct LsConfig {
  int max_iterations = 15;
  double lambda0 = 1e-3;
  double lambda_max = 1e8;
  double lambda_shrink = 0.5;
  double lambda_grow = 4.0;
  double lambda_min = 1e-12;
  double step_tol = 1e-8;
  double cost_tol = 1e-9;
  double fd_step = 1e-6;
  int dense_threshold = 40;  ///< below this many variables, solve densely
};

struct OptimizeStats {
  std::vector<double> cost_history;  ///< accepted costs, first entry = initial
  int iterations = 0;
  int rejected_steps = 0;
  double jacobian_ms = 0.0;
  double linear_solve_ms = 0.0;
  double total_ms = 0.0;
  bool converged = false;
  std::string stop_reason;
  double final_lambda = 0.0;
};

struct OptimizeResult {
  Eigen::VectorXd z;
  OptimizeStats stats;
};

/// Damped Gauss-Newton iteration with multiplicative damping adaptation.
/// Accepted steps never increase the cost; throws DivergenceError when no
/// decrease is possible below the damping cap.
OptimizeResult optimize(const LsProblem& problem, const Eigen::VectorXd& z0, const LsConfig& cfg);

}  // namespace flatmpc
