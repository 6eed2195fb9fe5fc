#include "unisoma/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace unisoma::kernels {

namespace {

// Work below this many multiply-adds is not worth a parallel region.
constexpr std::size_t kParallelGrain = 1 << 14;

inline double elem(const double* p, Trans t, std::size_t rows, std::size_t cols, std::size_t r,
                   std::size_t c) {
  // `rows`/`cols` are the logical (post-transpose) dimensions.
  return t == Trans::no ? p[r * cols + c] : p[c * rows + r];
}

// One output row of C, accumulated over k in ascending order like the
// serial triple loop.
inline void gemm_row(Trans ta, Trans tb, std::size_t i, std::size_t m, std::size_t n,
                     std::size_t k, const double* a, const double* b, double* crow,
                     bool accumulate) {
  if (!accumulate) std::fill(crow, crow + n, 0.0);
  for (std::size_t p = 0; p < k; ++p) {
    const double aip = elem(a, ta, m, k, i, p);
    if (tb == Trans::no) {
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    } else {
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * b[j * k + p];
    }
  }
}

inline void softmax_lane(const double* x, double* y, std::size_t len, std::size_t stride) {
  double mx = x[0];
  for (std::size_t l = 1; l < len; ++l) mx = std::max(mx, x[l * stride]);
  double sum = 0.0;
  for (std::size_t l = 0; l < len; ++l) {
    const double e = std::exp(x[l * stride] - mx);
    y[l * stride] = e;
    sum += e;
  }
  for (std::size_t l = 0; l < len; ++l) y[l * stride] /= sum;
}

}  // namespace

double gelu_scalar(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

double gelu_grad_scalar(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_threads(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

namespace serial {

void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, const double* a,
          const double* b, double* c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = accumulate ? c[i * n + j] : 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        s += elem(a, ta, m, k, i, p) * elem(b, tb, k, n, p, j);
      }
      c[i * n + j] = s;
    }
  }
}

void softmax(const double* x, double* y, std::size_t outer, std::size_t len, std::size_t inner) {
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      softmax_lane(x + base, y + base, len, inner);
    }
  }
}

void normalize_rows(const double* x, double* y, double* rstd, std::size_t rows, std::size_t cols,
                    double eps) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x + r * cols;
    double mean = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mean += xr[c];
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) var += (xr[c] - mean) * (xr[c] - mean);
    var /= static_cast<double>(cols);
    const double rs = 1.0 / std::sqrt(var + eps);
    rstd[r] = rs;
    for (std::size_t c = 0; c < cols; ++c) y[r * cols + c] = (xr[c] - mean) * rs;
  }
}

void gelu(const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = gelu_scalar(x[i]);
}

}  // namespace serial

namespace parallel {

void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, const double* a,
          const double* b, double* c, bool accumulate) {
  const auto rows = static_cast<long long>(m);
#pragma omp parallel for schedule(static) if (m * n * k > kParallelGrain)
  for (long long i = 0; i < rows; ++i) {
    gemm_row(ta, tb, static_cast<std::size_t>(i), m, n, k, a, b, c + i * n, accumulate);
  }
}

void softmax(const double* x, double* y, std::size_t outer, std::size_t len, std::size_t inner) {
  const auto lanes = static_cast<long long>(outer * inner);
#pragma omp parallel for schedule(static) if (outer * len * inner > kParallelGrain)
  for (long long lane = 0; lane < lanes; ++lane) {
    const std::size_t o = static_cast<std::size_t>(lane) / inner;
    const std::size_t in = static_cast<std::size_t>(lane) % inner;
    softmax_lane(x + o * len * inner + in, y + o * len * inner + in, len, inner);
  }
}

void normalize_rows(const double* x, double* y, double* rstd, std::size_t rows, std::size_t cols,
                    double eps) {
  const auto n = static_cast<long long>(rows);
#pragma omp parallel for schedule(static) if (rows * cols > kParallelGrain)
  for (long long r = 0; r < n; ++r) {
    serial::normalize_rows(x + r * cols, y + r * cols, rstd + r, 1, cols, eps);
  }
}

void gelu(const double* x, double* y, std::size_t n) {
  const auto len = static_cast<long long>(n);
#pragma omp parallel for schedule(static) if (n > kParallelGrain)
  for (long long i = 0; i < len; ++i) y[i] = gelu_scalar(x[i]);
}

}  // namespace parallel

}  // namespace unisoma::kernels
