#pragma once

#include <functional>
#include <string>

#include "unisoma/tensor.hpp"

namespace unisoma {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::size_t worst_index = 0;
  bool pass = false;
  std::string message;
};

using ScalarFn = std::function<Tensor(const Tensor&)>;

/// Compares reverse-mode gradients of a scalar function against central
/// differences with step h·max(1, |x_i|). Per coordinate the error is
/// |g_ad − g_fd| / max(|g_ad|, |g_fd|, 1e-8).
GradCheckReport grad_check(const ScalarFn& f, const Tensor& x, double h = 1e-5,
                           double tol = 1e-4);

}  // namespace unisoma
