#include "unisoma/metrics.hpp"

#include <cmath>

namespace unisoma {

namespace {

void same_shape(const Tensor& u, const Tensor& u_hat, const char* what) {
  if (u.shape() != u_hat.shape()) {
    throw DimensionError(std::string(what) + ": reference " + shape_str(u.shape()) +
                         " vs prediction " + shape_str(u_hat.shape()));
  }
}

}  // namespace

double relative_l2(const Tensor& u, const Tensor& u_hat) {
  same_shape(u, u_hat, "relative_l2");
  double err = 0.0, ref = 0.0;
  for (std::size_t i = 0; i < u.numel(); ++i) {
    const double d = u[i] - u_hat[i];
    err += d * d;
    ref += u[i] * u[i];
  }
  if (ref == 0.0) throw ValidationError("relative_l2: reference has zero norm");
  return std::sqrt(err) / std::sqrt(ref);
}

double rmse(const Tensor& u, const Tensor& u_hat) {
  same_shape(u, u_hat, "rmse");
  if (u.rank() != 2 || u.dim(0) == 0) throw DimensionError("rmse: expects a non-empty N×C matrix");
  double err = 0.0;
  for (std::size_t i = 0; i < u.numel(); ++i) {
    const double d = u[i] - u_hat[i];
    err += d * d;
  }
  return std::sqrt(err / static_cast<double>(u.dim(0)));
}

Tensor columns(const Tensor& t, std::size_t begin, std::size_t end) {
  if (t.rank() != 2 || begin > end || end > t.dim(1)) {
    throw DimensionError("columns: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") invalid for " + shape_str(t.shape()));
  }
  const std::size_t n = t.dim(0), c = t.dim(1), w = end - begin;
  std::vector<double> out(n * w);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < w; ++k) out[i * w + k] = t[i * c + begin + k];
  }
  return Tensor({n, w}, std::move(out));
}

Tensor stack_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("stack_rows: nothing to stack");
  const std::size_t c = parts.front().dim(1);
  std::vector<double> out;
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (p.rank() != 2 || p.dim(1) != c) throw DimensionError("stack_rows: column counts differ");
    out.insert(out.end(), p.data().begin(), p.data().end());
    rows += p.dim(0);
  }
  return Tensor({rows, c}, std::move(out));
}

}  // namespace unisoma
