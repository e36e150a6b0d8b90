#include <limits>
#include <numeric>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "mvcn/assignment.hpp"
#include "mvcn/error.hpp"
#include "oracles.hpp"

namespace {

using mvcn::Matrix;

Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(rows.size(), rows.begin()->size());
  std::size_t i = 0;
  for (const auto& r : rows) {
    std::size_t j = 0;
    for (double v : r) m(i, j++) = v;
    ++i;
  }
  return m;
}

bool is_permutation(const std::vector<std::size_t>& perm) {
  std::set<std::size_t> seen(perm.begin(), perm.end());
  return seen.size() == perm.size() && (perm.empty() || *seen.rbegin() == perm.size() - 1);
}

TEST(Assignment, IdentityFavoring) {
  const auto a = mvcn::assignment_solve(from_rows({{0, 9}, {9, 0}}));
  EXPECT_EQ(a.permutation, (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(a.cost, 0.0);
}

TEST(Assignment, SmallBruteForceExample) {
  // id: 1 + 1 = 2, swap: 2 + 3 = 5.
  const auto a = mvcn::assignment_solve(from_rows({{1, 2}, {3, 1}}));
  EXPECT_EQ(a.permutation, (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(a.cost, 2.0);
}

TEST(Assignment, AntiDiagonal) {
  const auto a = mvcn::assignment_solve(from_rows({{5, 1, 5}, {5, 5, 1}, {1, 5, 5}}));
  EXPECT_EQ(a.permutation, (std::vector<std::size_t>{1, 2, 0}));
  EXPECT_EQ(a.cost, 3.0);
}

TEST(Assignment, OneByOne) {
  EXPECT_EQ(mvcn::assignment_solve(from_rows({{-2.5}})).cost, -2.5);
  EXPECT_EQ(mvcn::assignment_solve(from_rows({{7.25}})).permutation, (std::vector<std::size_t>{0}));
}

TEST(Assignment, MatchesExhaustiveSearchExactly) {
  std::mt19937_64 rng(314);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + trial % 6;
    Matrix c(n, n);
    for (double& v : c.data) v = u(rng);
    const auto a = mvcn::assignment_solve(c);
    ASSERT_TRUE(is_permutation(a.permutation));
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += c(i, a.permutation[i]);
    EXPECT_EQ(a.cost, s);
    EXPECT_EQ(a.cost, mvcn::oracle::brute_force_assignment(c)) << "trial " << trial;
  }
}

TEST(Assignment, IntegerCostsWithTies) {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> u(0, 3);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + trial % 5;
    Matrix c(n, n);
    for (double& v : c.data) v = u(rng);
    const auto a = mvcn::assignment_solve(c);
    EXPECT_EQ(a.cost, mvcn::oracle::brute_force_assignment(c));
    EXPECT_EQ(mvcn::assignment_solve(c).permutation, a.permutation);
  }
}

TEST(Assignment, NegativeAndShiftedCosts) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  for (int trial = 0; trial < 50; ++trial) {
    Matrix c(5, 5);
    for (double& v : c.data) v = u(rng);
    EXPECT_EQ(mvcn::assignment_solve(c).cost, mvcn::oracle::brute_force_assignment(c));
  }
}

TEST(Assignment, ConstantMatrixIsDeterministic) {
  const Matrix c(6, 6, 1.0);
  const auto a = mvcn::assignment_solve(c);
  EXPECT_TRUE(is_permutation(a.permutation));
  EXPECT_EQ(a.cost, 6.0);
  EXPECT_EQ(mvcn::assignment_solve(c).permutation, a.permutation);
}

TEST(Assignment, LargestAcceptedSize) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix c(mvcn::kMaxAssignmentSize, mvcn::kMaxAssignmentSize);
  for (double& v : c.data) v = u(rng);
  const auto a = mvcn::assignment_solve(c);
  EXPECT_TRUE(is_permutation(a.permutation));
  // Any other permutation is no better; spot-check against the identity.
  double identity = 0.0;
  for (std::size_t i = 0; i < c.rows; ++i) identity += c(i, i);
  EXPECT_LE(a.cost, identity);
}

TEST(Assignment, Errors) {
  EXPECT_THROW(mvcn::assignment_solve(Matrix(2, 3)), mvcn::InvalidArgumentError);
  EXPECT_THROW(mvcn::assignment_solve(Matrix()), mvcn::InvalidArgumentError);
  Matrix nan(2, 2);
  nan(1, 0) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(mvcn::assignment_solve(nan), mvcn::InvalidArgumentError);
  Matrix inf(2, 2);
  inf(0, 1) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(mvcn::assignment_solve(inf), mvcn::InvalidArgumentError);
  EXPECT_THROW(mvcn::assignment_solve(Matrix(mvcn::kMaxAssignmentSize + 1, mvcn::kMaxAssignmentSize + 1)),
               mvcn::CapacityError);
}

}  // namespace
