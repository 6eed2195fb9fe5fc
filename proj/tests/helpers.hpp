#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "unisoma/tensor.hpp"

namespace test {

inline unisoma::Tensor random_tensor(unisoma::Shape shape, std::mt19937_64& rng, double lo = -1.0,
                                     double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(unisoma::numel(shape));
  for (auto& x : v) x = u(rng);
  return unisoma::Tensor(std::move(shape), std::move(v));
}

inline void check_close(const unisoma::Tensor& a, const unisoma::Tensor& b, double tol) {
  REQUIRE(a.shape() == b.shape());
  CHECK(unisoma::max_abs_diff(a, b) <= tol);
}

inline void check_close(const unisoma::Tensor& a, const std::vector<double>& expect, double tol) {
  REQUIRE(a.numel() == expect.size());
  for (std::size_t i = 0; i < expect.size(); ++i) CHECK(std::abs(a[i] - expect[i]) <= tol);
}

}  // namespace test
