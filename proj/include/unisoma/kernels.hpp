#pragma once

#include <cstddef>

// Raw compute kernels behind the differentiable ops.
//
// Every kernel exists twice: `serial::` is the straightforward reference kept
// for tests and benchmarks, `parallel::` is the OpenMP version used by the
// library. Both accumulate each output element in the same order, so their
// results are bitwise identical for any thread count.

namespace unisoma::kernels {

/// Storage layout of a gemm operand.
enum class Trans { no, yes };

namespace serial {

/// C (m×n) = op(A) (m×k) · op(B) (k×n), or C += … when `accumulate`.
void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, const double* a,
          const double* b, double* c, bool accumulate);

/// Softmax along the middle axis of an (outer, len, inner) view.
void softmax(const double* x, double* y, std::size_t outer, std::size_t len, std::size_t inner);

/// Row-wise normalisation; writes y = (x-mean)*rstd and the per-row rstd.
void normalize_rows(const double* x, double* y, double* rstd, std::size_t rows, std::size_t cols,
                    double eps);

void gelu(const double* x, double* y, std::size_t n);

}  // namespace serial

namespace parallel {

void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, const double* a,
          const double* b, double* c, bool accumulate);
void softmax(const double* x, double* y, std::size_t outer, std::size_t len, std::size_t inner);
void normalize_rows(const double* x, double* y, double* rstd, std::size_t rows, std::size_t cols,
                    double eps);
void gelu(const double* x, double* y, std::size_t n);

}  // namespace parallel

/// Number of OpenMP threads kernels may use (1 when built without OpenMP).
int max_threads();
void set_threads(int n);

double gelu_scalar(double x);
double gelu_grad_scalar(double x);

}  // namespace unisoma::kernels
