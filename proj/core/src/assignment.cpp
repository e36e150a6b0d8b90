#include "mvcn/assignment.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "mvcn/error.hpp"

namespace mvcn {

Assignment assignment_solve(const Matrix& cost) {
  if (cost.rows != cost.cols || cost.rows == 0)
    throw InvalidArgumentError("assignment_solve: cost matrix must be square and non-empty, got " +
                               std::to_string(cost.rows) + "x" + std::to_string(cost.cols));
  const std::size_t n = cost.rows;
  if (n > kMaxAssignmentSize)
    throw CapacityError("assignment_solve: size " + std::to_string(n) + " exceeds the exact-solver cap of " +
                        std::to_string(kMaxAssignmentSize) + "; subsample the inputs");
  for (double c : cost.data)
    if (!std::isfinite(c)) throw InvalidArgumentError("assignment_solve: cost matrix has non-finite entries");

  constexpr double kInf = std::numeric_limits<double>::infinity();
  // 1-based arrays; column 0 is the virtual source of each augmentation.
  std::vector<double> row_pot(n + 1, 0.0), col_pot(n + 1, 0.0), min_slack(n + 1);
  std::vector<std::size_t> col_match(n + 1, 0), prev_col(n + 1, 0);
  std::vector<char> used(n + 1);

  for (std::size_t row = 1; row <= n; ++row) {
    col_match[0] = row;
    std::size_t col0 = 0;
    std::fill(min_slack.begin(), min_slack.end(), kInf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[col0] = 1;
      const std::size_t r0 = col_match[col0];
      double delta = kInf;
      std::size_t col1 = 0;
      const double* crow = cost.data.data() + (r0 - 1) * n;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double reduced = crow[j - 1] - row_pot[r0] - col_pot[j];
        if (reduced < min_slack[j]) {
          min_slack[j] = reduced;
          prev_col[j] = col0;
        }
        if (min_slack[j] < delta) {
          delta = min_slack[j];
          col1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          row_pot[col_match[j]] += delta;
          col_pot[j] -= delta;
        } else {
          min_slack[j] -= delta;
        }
      }
      col0 = col1;
    } while (col_match[col0] != 0);
    do {
      const std::size_t col1 = prev_col[col0];
      col_match[col0] = col_match[col1];
      col0 = col1;
    } while (col0 != 0);
  }

  Assignment result;
  result.permutation.assign(n, 0);
  for (std::size_t j = 1; j <= n; ++j) result.permutation[col_match[j] - 1] = j - 1;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += cost(i, result.permutation[i]);
  result.cost = total;
  return result;
}

}  // namespace mvcn
