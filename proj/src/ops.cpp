#include "unisoma/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "unisoma/autograd.hpp"
#include "unisoma/kernels.hpp"

namespace unisoma {

namespace {

using kernels::Trans;
using GradIn = std::span<std::vector<double>* const>;
using GradOut = std::span<const double>;

// Row-major strides of `shape` aligned to the right of an `out_rank` shape,
// with broadcast dimensions given stride 0.
std::vector<std::size_t> aligned_strides(const Shape& shape, const Shape& out) {
  std::vector<std::size_t> strides(out.size(), 0);
  std::size_t stride = 1;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    const std::size_t src = shape.size() - 1 - i;
    const std::size_t dst = out.size() - 1 - i;
    strides[dst] = shape[src] == 1 ? 0 : stride;
    stride *= shape[src];
  }
  return strides;
}

Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank, 1);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t da = i < a.size() ? a[a.size() - 1 - i] : 1;
    const std::size_t db = i < b.size() ? b[b.size() - 1 - i] : 1;
    if (da != db && da != 1 && db != 1) {
      throw DimensionError(std::string(op) + ": cannot broadcast " + shape_str(a) + " with " +
                           shape_str(b));
    }
    out[rank - 1 - i] = da == 1 ? db : da;
  }
  return out;
}

// Flat source offsets for every element of `out` when reading a tensor of
// shape `in` under broadcasting.
std::vector<std::size_t> broadcast_offsets(const Shape& in, const Shape& out) {
  const auto strides = aligned_strides(in, out);
  const std::size_t n = numel(out);
  std::vector<std::size_t> offsets(n);
  std::vector<std::size_t> idx(out.size(), 0);
  std::size_t off = 0;
  for (std::size_t flat = 0; flat < n; ++flat) {
    offsets[flat] = off;
    for (std::size_t d = out.size(); d-- > 0;) {
      ++idx[d];
      off += strides[d];
      if (idx[d] < out[d]) break;
      off -= strides[d] * idx[d];
      idx[d] = 0;
    }
  }
  return offsets;
}

template <typename Fwd, typename Bwd>
Tensor binary(const Tensor& a, const Tensor& b, const char* name, Fwd fwd, Bwd bwd) {
  if (a.shape() == b.shape()) {
    const std::size_t n = a.numel();
    std::vector<double> out(n);
    const double* pa = a.ptr();
    const double* pb = b.ptr();
    for (std::size_t i = 0; i < n; ++i) out[i] = fwd(pa[i], pb[i]);
    Tensor result(a.shape(), std::move(out));
    return Tape::record(result, {&a, &b}, [a, b, result, bwd](GradOut g, GradIn gin) {
      const double* pa = a.ptr();
      const double* pb = b.ptr();
      const double* py = result.ptr();
      for (std::size_t i = 0; i < g.size(); ++i) {
        double da = 0.0, db = 0.0;
        bwd(pa[i], pb[i], py[i], g[i], da, db);
        if (gin[0]) (*gin[0])[i] += da;
        if (gin[1]) (*gin[1])[i] += db;
      }
    });
  }
  Shape shape = broadcast_shape(a.shape(), b.shape(), name);
  auto oa = std::make_shared<std::vector<std::size_t>>(broadcast_offsets(a.shape(), shape));
  auto ob = std::make_shared<std::vector<std::size_t>>(broadcast_offsets(b.shape(), shape));
  std::vector<double> out(numel(shape));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(a[(*oa)[i]], b[(*ob)[i]]);
  Tensor result(shape, std::move(out));
  return Tape::record(result, {&a, &b}, [a, b, result, oa, ob, bwd](GradOut g, GradIn gin) {
    for (std::size_t i = 0; i < g.size(); ++i) {
      double da = 0.0, db = 0.0;
      bwd(a[(*oa)[i]], b[(*ob)[i]], result[i], g[i], da, db);
      if (gin[0]) (*gin[0])[(*oa)[i]] += da;
      if (gin[1]) (*gin[1])[(*ob)[i]] += db;
    }
  });
}

template <typename Fwd, typename Bwd>
Tensor unary(const Tensor& a, Fwd fwd, Bwd bwd) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(a[i]);
  Tensor result(a.shape(), std::move(out));
  return Tape::record(result, {&a}, [a, result, bwd](GradOut g, GradIn gin) {
    for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += bwd(a[i], result[i], g[i]);
  });
}

std::size_t check_axis(const Tensor& a, std::size_t axis, const char* op) {
  if (axis >= a.rank()) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) +
                         " out of range for " + shape_str(a.shape()));
  }
  return axis;
}

// (outer, len, inner) view of `shape` around `axis`.
struct AxisView {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisView axis_view(const Shape& shape, std::size_t axis) {
  AxisView v;
  for (std::size_t i = 0; i < axis; ++i) v.outer *= shape[i];
  v.len = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) v.inner *= shape[i];
  return v;
}

}  // namespace

// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() < 2) {
    throw DimensionError("matmul needs rank >= 2 operands, got " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const std::size_t m = a.shape()[a.rank() - 2];
  const std::size_t k = a.shape()[a.rank() - 1];
  const std::size_t kb = b.shape()[b.rank() - 2];
  const std::size_t n = b.shape()[b.rank() - 1];
  if (k != kb) {
    throw DimensionError("matmul inner dimensions differ: " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  const Shape batch_a(a.shape().begin(), a.shape().end() - 2);
  const Shape batch_b(b.shape().begin(), b.shape().end() - 2);
  Shape batch;
  try {
    batch = broadcast_shape(batch_a, batch_b, "matmul");
  } catch (const DimensionError&) {
    throw DimensionError("matmul batch dimensions differ: " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  const std::size_t nb = numel(batch);
  auto oa = std::make_shared<std::vector<std::size_t>>(broadcast_offsets(batch_a, batch));
  auto ob = std::make_shared<std::vector<std::size_t>>(broadcast_offsets(batch_b, batch));

  Shape out_shape = batch;
  out_shape.push_back(m);
  out_shape.push_back(n);
  std::vector<double> out(nb * m * n);
  for (std::size_t i = 0; i < nb; ++i) {
    kernels::parallel::gemm(Trans::no, Trans::no, m, n, k, a.ptr() + (*oa)[i] * m * k,
                            b.ptr() + (*ob)[i] * k * n, out.data() + i * m * n, false);
  }
  Tensor result(std::move(out_shape), std::move(out));
  return Tape::record(result, {&a, &b}, [a, b, oa, ob, nb, m, n, k](GradOut g, GradIn gin) {
    for (std::size_t i = 0; i < nb; ++i) {
      const double* gi = g.data() + i * m * n;
      if (gin[0]) {
        // dA = dC · Bᵀ
        kernels::parallel::gemm(Trans::no, Trans::yes, m, k, n, gi, b.ptr() + (*ob)[i] * k * n,
                                gin[0]->data() + (*oa)[i] * m * k, true);
      }
      if (gin[1]) {
        // dB = Aᵀ · dC
        kernels::parallel::gemm(Trans::yes, Trans::no, k, n, m, a.ptr() + (*oa)[i] * m * k, gi,
                                gin[1]->data() + (*ob)[i] * k * n, true);
      }
    }
  });
}

Tensor transpose(const Tensor& a) {
  if (a.rank() < 2) throw DimensionError("transpose needs rank >= 2, got " + shape_str(a.shape()));
  const std::size_t r = a.shape()[a.rank() - 2];
  const std::size_t c = a.shape()[a.rank() - 1];
  const std::size_t nb = a.numel() / std::max<std::size_t>(r * c, 1);
  Shape shape = a.shape();
  std::swap(shape[shape.size() - 1], shape[shape.size() - 2]);
  std::vector<double> out(a.numel());
  for (std::size_t b = 0; b < nb; ++b) {
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) out[b * r * c + j * r + i] = a[b * r * c + i * c + j];
    }
  }
  Tensor result(std::move(shape), std::move(out));
  return Tape::record(result, {&a}, [nb, r, c](GradOut g, GradIn gin) {
    auto& ga = *gin[0];
    for (std::size_t b = 0; b < nb; ++b) {
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) ga[b * r * c + i * c + j] += g[b * r * c + j * r + i];
      }
    }
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.numel()) {
    throw DimensionError("reshape " + shape_str(a.shape()) + " -> " + shape_str(shape));
  }
  Tensor result(std::move(shape), a.to_vector());
  return Tape::record(result, {&a}, [](GradOut g, GradIn gin) {
    for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i];
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double, double, double g, double& da, double& db) {
        da = g;
        db = g;
      });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double, double, double g, double& da, double& db) {
        da = g;
        db = -g;
      });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double x, double y, double, double g, double& da, double& db) {
        da = g * y;
        db = g * x;
      });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "div", [](double x, double y) { return x / y; },
      [](double, double y, double out, double g, double& da, double& db) {
        da = g / y;
        db = -g * out / y;
      });
}

Tensor scale(const Tensor& a, double s) {
  return unary(
      a, [s](double x) { return s * x; }, [s](double, double, double g) { return s * g; });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary(
      a, [s](double x) { return x + s; }, [](double, double, double g) { return g; });
}

Tensor square(const Tensor& a) {
  return unary(
      a, [](double x) { return x * x; }, [](double x, double, double g) { return 2.0 * x * g; });
}

Tensor sqrt(const Tensor& a) {
  for (double v : a.data()) {
    if (v < 0.0) throw NumericalError("sqrt of a negative value");
  }
  // The derivative at exactly zero is taken as zero.
  return unary(
      a, [](double x) { return std::sqrt(x); },
      [](double, double y, double g) { return y > 0.0 ? 0.5 * g / y : 0.0; });
}

Tensor gelu(const Tensor& a) {
  std::vector<double> out(a.numel());
  kernels::parallel::gelu(a.ptr(), out.data(), out.size());
  Tensor result(a.shape(), std::move(out));
  return Tape::record(result, {&a}, [a](GradOut g, GradIn gin) {
    for (std::size_t i = 0; i < g.size(); ++i) {
      (*gin[0])[i] += g[i] * kernels::gelu_grad_scalar(a[i]);
    }
  });
}

Tensor sign_floor(const Tensor& a, double eps) {
  return unary(
      a,
      [eps](double x) {
        if (std::abs(x) >= eps) return x;
        return x < 0.0 ? -eps : eps;
      },
      [eps](double x, double, double g) { return std::abs(x) >= eps ? g : 0.0; });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return Tape::record(Tensor::scalar(s), {&a}, [](GradOut g, GradIn gin) {
    for (auto& v : *gin[0]) v += g[0];
  });
}

Tensor sum(const Tensor& a, std::size_t axis) {
  check_axis(a, axis, "sum");
  const AxisView v = axis_view(a.shape(), axis);
  Shape shape = a.shape();
  shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(axis));
  std::vector<double> out(v.outer * v.inner, 0.0);
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t l = 0; l < v.len; ++l) {
      for (std::size_t i = 0; i < v.inner; ++i) {
        out[o * v.inner + i] += a[(o * v.len + l) * v.inner + i];
      }
    }
  }
  Tensor result(std::move(shape), std::move(out));
  return Tape::record(result, {&a}, [v](GradOut g, GradIn gin) {
    auto& ga = *gin[0];
    for (std::size_t o = 0; o < v.outer; ++o) {
      for (std::size_t l = 0; l < v.len; ++l) {
        for (std::size_t i = 0; i < v.inner; ++i) {
          ga[(o * v.len + l) * v.inner + i] += g[o * v.inner + i];
        }
      }
    }
  });
}

Tensor mean(const Tensor& a) {
  if (a.numel() == 0) throw DimensionError("mean of an empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor softmax(const Tensor& a, std::size_t axis) {
  check_axis(a, axis, "softmax");
  const AxisView v = axis_view(a.shape(), axis);
  std::vector<double> out(a.numel());
  if (v.len > 0) kernels::parallel::softmax(a.ptr(), out.data(), v.outer, v.len, v.inner);
  Tensor result(a.shape(), std::move(out));
  return Tape::record(result, {&a}, [result, v](GradOut g, GradIn gin) {
    auto& ga = *gin[0];
    for (std::size_t o = 0; o < v.outer; ++o) {
      for (std::size_t i = 0; i < v.inner; ++i) {
        const std::size_t base = o * v.len * v.inner + i;
        double dot = 0.0;
        for (std::size_t l = 0; l < v.len; ++l) {
          dot += g[base + l * v.inner] * result[base + l * v.inner];
        }
        for (std::size_t l = 0; l < v.len; ++l) {
          const std::size_t at = base + l * v.inner;
          ga[at] += result[at] * (g[at] - dot);
        }
      }
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& scale_p, const Tensor& shift, double eps) {
  if (x.rank() < 1) throw DimensionError("layer_norm on a scalar");
  const std::size_t cols = x.shape().back();
  if (scale_p.numel() != cols || shift.numel() != cols) {
    throw DimensionError("layer_norm parameters of size " + std::to_string(scale_p.numel()) +
                         "/" + std::to_string(shift.numel()) + " for input " +
                         shape_str(x.shape()));
  }
  const std::size_t rows = cols ? x.numel() / cols : 0;
  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  auto rstd = std::make_shared<std::vector<double>>(rows);
  kernels::parallel::normalize_rows(x.ptr(), xhat->data(), rstd->data(), rows, cols, eps);
  std::vector<double> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      out[r * cols + c] = (*xhat)[r * cols + c] * scale_p[c] + shift[c];
    }
  }
  Tensor result(x.shape(), std::move(out));
  return Tape::record(
      result, {&x, &scale_p, &shift}, [scale_p, xhat, rstd, rows, cols](GradOut g, GradIn gin) {
        const auto& xh = *xhat;
        for (std::size_t r = 0; r < rows; ++r) {
          const double* gr = g.data() + r * cols;
          if (gin[0]) {
            double mean_d = 0.0, mean_dx = 0.0;
            for (std::size_t c = 0; c < cols; ++c) {
              const double d = gr[c] * scale_p[c];
              mean_d += d;
              mean_dx += d * xh[r * cols + c];
            }
            mean_d /= static_cast<double>(cols);
            mean_dx /= static_cast<double>(cols);
            for (std::size_t c = 0; c < cols; ++c) {
              const double d = gr[c] * scale_p[c];
              (*gin[0])[r * cols + c] += (*rstd)[r] * (d - mean_d - xh[r * cols + c] * mean_dx);
            }
          }
          for (std::size_t c = 0; c < cols; ++c) {
            if (gin[1]) (*gin[1])[c] += gr[c] * xh[r * cols + c];
            if (gin[2]) (*gin[2])[c] += gr[c];
          }
        }
      });
}

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> index) {
  const std::size_t rows = a.rows();
  const std::size_t cols = a.cols();
  auto idx = std::make_shared<std::vector<std::size_t>>(index.begin(), index.end());
  std::vector<double> out(idx->size() * cols);
  for (std::size_t i = 0; i < idx->size(); ++i) {
    const std::size_t r = (*idx)[i];
    if (r >= rows) {
      throw DimensionError("gather_rows index " + std::to_string(r) + " out of range for " +
                           std::to_string(rows) + " rows");
    }
    std::copy_n(a.ptr() + r * cols, cols, out.data() + i * cols);
  }
  Tensor result({idx->size(), cols}, std::move(out));
  return Tape::record(result, {&a}, [idx, cols](GradOut g, GradIn gin) {
    for (std::size_t i = 0; i < idx->size(); ++i) {
      double* dst = gin[0]->data() + (*idx)[i] * cols;
      for (std::size_t c = 0; c < cols; ++c) dst[c] += g[i * cols + c];
    }
  });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat of zero tensors");
  const Shape& ref = parts.front().shape();
  check_axis(parts.front(), axis, "concat");
  Shape shape = ref;
  shape[axis] = 0;
  for (const auto& p : parts) {
    bool ok = p.rank() == ref.size();
    for (std::size_t d = 0; ok && d < ref.size(); ++d) ok = d == axis || p.shape()[d] == ref[d];
    if (!ok) {
      throw DimensionError("concat along axis " + std::to_string(axis) + ": " + shape_str(ref) +
                           " vs " + shape_str(p.shape()));
    }
    shape[axis] += p.shape()[axis];
  }
  const AxisView v = axis_view(shape, axis);
  std::vector<double> out(numel(shape));
  auto offsets = std::make_shared<std::vector<std::size_t>>();
  std::size_t at = 0;
  for (const auto& p : parts) {
    offsets->push_back(at);
    const std::size_t len = p.shape()[axis];
    for (std::size_t o = 0; o < v.outer; ++o) {
      std::copy_n(p.ptr() + o * len * v.inner, len * v.inner,
                  out.data() + (o * v.len + at) * v.inner);
    }
    at += len;
  }
  Tensor result(std::move(shape), std::move(out));
  std::vector<const Tensor*> inputs;
  std::vector<std::size_t> lens;
  for (const auto& p : parts) {
    inputs.push_back(&p);
    lens.push_back(p.shape()[axis]);
  }
  return Tape::record(result, inputs, [offsets, lens, v](GradOut g, GradIn gin) {
    for (std::size_t k = 0; k < lens.size(); ++k) {
      if (!gin[k]) continue;
      for (std::size_t o = 0; o < v.outer; ++o) {
        const double* src = g.data() + (o * v.len + (*offsets)[k]) * v.inner;
        double* dst = gin[k]->data() + o * lens[k] * v.inner;
        for (std::size_t i = 0; i < lens[k] * v.inner; ++i) dst[i] += src[i];
      }
    }
  });
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end) {
  check_axis(a, axis, "slice");
  if (begin > end || end > a.shape()[axis]) {
    throw DimensionError("slice [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") out of range for axis " + std::to_string(axis) + " of " +
                         shape_str(a.shape()));
  }
  const AxisView v = axis_view(a.shape(), axis);
  const std::size_t len = end - begin;
  Shape shape = a.shape();
  shape[axis] = len;
  std::vector<double> out(numel(shape));
  for (std::size_t o = 0; o < v.outer; ++o) {
    std::copy_n(a.ptr() + (o * v.len + begin) * v.inner, len * v.inner,
                out.data() + o * len * v.inner);
  }
  Tensor result(std::move(shape), std::move(out));
  return Tape::record(result, {&a}, [v, begin, len](GradOut g, GradIn gin) {
    for (std::size_t o = 0; o < v.outer; ++o) {
      double* dst = gin[0]->data() + (o * v.len + begin) * v.inner;
      const double* src = g.data() + o * len * v.inner;
      for (std::size_t i = 0; i < len * v.inner; ++i) dst[i] += src[i];
    }
  });
}

}  // namespace unisoma
