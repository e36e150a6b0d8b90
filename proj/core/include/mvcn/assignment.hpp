#pragma once

#include <cstddef>
#include <vector>

#include "mvcn/matrix.hpp"

namespace mvcn {

/// Largest square cost matrix accepted by the exact solver.
inline constexpr std::size_t kMaxAssignmentSize = 512;

struct Assignment {
  /// permutation[i] is the column assigned to row i.
  std::vector<std::size_t> permutation;
  /// Sum of cost(i, permutation[i]) accumulated in row order.
  double cost = 0.0;
};

/// Exact minimum-cost perfect matching on a square matrix (shortest
/// augmenting path with dual potentials, O(n^3)). Rows are inserted in index
/// order and the lowest column index wins ties, so results are deterministic.
///
/// Throws InvalidArgumentError for non-square or non-finite input and
/// CapacityError when n exceeds kMaxAssignmentSize.
Assignment assignment_solve(const Matrix& cost);

}  // namespace mvcn
