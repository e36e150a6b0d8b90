#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "mvcn/measure.hpp"

namespace mvcn::testing {

// Fresh directory under the gtest temp root, unique per test.
inline std::filesystem::path scratch_dir(const std::string& tag = {}) {
  const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
  std::string name = std::string(info->test_suite_name()) + "_" + info->name();
  if (!tag.empty()) name += "_" + tag;
  std::replace(name.begin(), name.end(), '/', '_');
  const auto dir = std::filesystem::path(::testing::TempDir()) / "mvcn_tests" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline EmpiricalMeasure random_measure(std::mt19937_64& rng, std::size_t n, std::size_t d, double scale = 3.0) {
  std::normal_distribution<double> normal(0.0, scale);
  std::vector<double> pts(n * d);
  for (double& v : pts) v = normal(rng);
  return EmpiricalMeasure(d, std::move(pts));
}

inline EmpiricalMeasure line(std::vector<double> xs) { return EmpiricalMeasure(1, std::move(xs)); }

}  // namespace mvcn::testing
