#pragma once

#include <vector>

#include "flatmpc/flat_model.hpp"

namespace flatmpc {

/// Strictly increasing node times over the horizon, t_0 = 0. Refinement only
/// inserts nodes; existing times are never moved or removed.
class TimeMesh {
 public:
  TimeMesh() = default;
  explicit TimeMesh(std::vector<double> times);

  /// Uniform mesh with `bins` intervals over [0, t_f] (bins + 1 nodes).
  static TimeMesh uniform(double t_f, int bins);

  int size() const { return static_cast<int>(times_.size()); }
  int intervals() const { return size() - 1; }
  double time(int k) const { return times_[k]; }
  double dt(int k) const { return times_[k + 1] - times_[k]; }
  double horizon() const { return times_.back(); }
  const std::vector<double>& times() const { return times_; }

  /// Inserts a node time, returns its index. The time must fall strictly
  /// inside an existing interval.
  int insert(double t);

  /// True when every node time of `other` is present in this mesh.
  bool contains_all(const TimeMesh& other, double tol = 1e-12) const;

 private:
  std::vector<double> times_;
};

/// Flat states attached to the nodes of a time mesh.
struct FlatTrajectory {
  TimeMesh mesh;
  std::vector<FlatState> nodes;

  int size() const { return static_cast<int>(nodes.size()); }
  bool consistent() const { return mesh.size() == size(); }
};

}  // namespace flatmpc
