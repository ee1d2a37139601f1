#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Core>

namespace risam {

using Key = std::size_t;

/// Whitened linear factor || A * delta - b ||^2 over the variables in `keys`.
/// Column block i of A (width dim) belongs to keys[i].
struct LinearFactor {
  std::vector<Key> keys;
  Eigen::MatrixXd A;
  Eigen::VectorXd b;

  Eigen::Index rows() const { return A.rows(); }
};

}  // namespace risam
