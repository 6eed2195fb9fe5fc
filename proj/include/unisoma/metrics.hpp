#pragma once

#include <vector>

#include "unisoma/tensor.hpp"

namespace unisoma {

/// ‖u − û‖ / ‖u‖ over all entries. Throws ValidationError when ‖u‖ = 0.
double relative_l2(const Tensor& u, const Tensor& u_hat);

/// sqrt(1/N Σ_i ‖u_i − û_i‖²) with rows as the points.
double rmse(const Tensor& u, const Tensor& u_hat);

/// Columns [begin, end) of a matrix.
Tensor columns(const Tensor& t, std::size_t begin, std::size_t end);

/// Rows of several matrices with equal column counts stacked in order.
Tensor stack_rows(const std::vector<Tensor>& parts);

}  // namespace unisoma
