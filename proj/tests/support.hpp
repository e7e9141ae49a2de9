#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <string>

#include "jointssl/tensor.hpp"

namespace testing {

inline jointssl::Tensor random_tensor(int h, int w, int c, std::mt19937_64& rng, double lo = -1.0,
                                      double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  jointssl::Tensor t(h, w, c);
  for (double& v : t.data) v = u(rng);
  return t;
}

/// |a - b| / max(|a|, |b|, floor); the floor keeps near-zero entries from
/// turning round-off into large ratios.
inline double rel_error(double a, double b, double floor = 1e-7) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("jointssl_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testing
