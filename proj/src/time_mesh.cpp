#include "flatmpc/time_mesh.hpp"

#include <algorithm>
#include <cmath>

#include "flatmpc/errors.hpp"

namespace flatmpc {

TimeMesh::TimeMesh(std::vector<double> times) : times_(std::move(times)) {
  if (times_.size() < 2) throw DimensionMismatch("TimeMesh: need at least two node times");
  for (size_t i = 1; i < times_.size(); ++i) {
    if (!(times_[i] > times_[i - 1])) throw DimensionMismatch("TimeMesh: node times must be strictly increasing");
  }
}

TimeMesh TimeMesh::uniform(double t_f, int bins) {
  std::vector<double> t(bins + 1);
  for (int k = 0; k <= bins; ++k) t[k] = t_f * k / bins;
  return TimeMesh(std::move(t));
}

int TimeMesh::insert(double t) {
  auto it = std::lower_bound(times_.begin(), times_.end(), t);
  if (it == times_.end() || it == times_.begin() || std::abs(*it - t) < 1e-15) {
    throw DimensionMismatch("TimeMesh: insertion time must fall strictly inside the mesh");
  }
  const int idx = static_cast<int>(it - times_.begin());
  times_.insert(it, t);
  return idx;
}

bool TimeMesh::contains_all(const TimeMesh& other, double tol) const {
  for (double t : other.times()) {
    auto it = std::lower_bound(times_.begin(), times_.end(), t - tol);
    if (it == times_.end() || std::abs(*it - t) > tol) return false;
  }
  return true;
}

}  // namespace flatmpc
