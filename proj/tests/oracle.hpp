#pragma once

// Plain nested-vector re-implementations of the network blocks. They share no
// code with the library and serve as reference values in the module tests.

#include <cmath>
#include <vector>

#include "unisoma/nn.hpp"

namespace oracle {

using Mat = std::vector<std::vector<double>>;

inline Mat from(const unisoma::Tensor& t) {
  Mat m(t.dim(0), std::vector<double>(t.dim(1)));
  for (std::size_t i = 0; i < t.dim(0); ++i)
    for (std::size_t j = 0; j < t.dim(1); ++j) m[i][j] = t.at(i, j);
  return m;
}

inline std::vector<double> flat(const Mat& m) {
  std::vector<double> out;
  for (const auto& r : m) out.insert(out.end(), r.begin(), r.end());
  return out;
}

inline Mat add(const Mat& a, const Mat& b) {
  Mat c = a;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) c[i][j] += b[i][j];
  return c;
}

inline Mat linear(const unisoma::LinearParams& p, const Mat& x) {
  const std::size_t in = p.weight.dim(0), out = p.weight.dim(1);
  Mat y(x.size(), std::vector<double>(out));
  for (std::size_t r = 0; r < x.size(); ++r)
    for (std::size_t o = 0; o < out; ++o) {
      double s = p.bias[o];
      for (std::size_t i = 0; i < in; ++i) s += x[r][i] * p.weight.at(i, o);
      y[r][o] = s;
    }
  return y;
}

inline Mat layer_norm(const unisoma::NormParams& p, const Mat& x, double eps = 1e-5) {
  Mat y = x;
  for (std::size_t r = 0; r < x.size(); ++r) {
    const double n = static_cast<double>(x[r].size());
    double mean = 0, var = 0;
    for (double v : x[r]) mean += v / n;
    for (double v : x[r]) var += (v - mean) * (v - mean) / n;
    for (std::size_t c = 0; c < x[r].size(); ++c)
      y[r][c] = (x[r][c] - mean) / std::sqrt(var + eps) * p.scale[c] + p.shift[c];
  }
  return y;
}

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

inline Mat ffn(const unisoma::FfnParams& p, const Mat& x) {
  Mat h = linear(p.fc1, x);
  for (auto& r : h)
    for (auto& v : r) v = gelu(v);
  return linear(p.fc2, h);
}

inline Mat attention(const Mat& q, const Mat& k, const Mat& v) {
  const std::size_t m = q.size(), c = q[0].size();
  Mat out(m, std::vector<double>(c, 0.0));
  for (std::size_t i = 0; i < m; ++i) {
    std::vector<double> s(m);
    double mx = -1e300;
    for (std::size_t j = 0; j < m; ++j) {
      double d = 0;
      for (std::size_t t = 0; t < c; ++t) d += q[i][t] * k[j][t];
      s[j] = d / std::sqrt(static_cast<double>(c));
      mx = std::max(mx, s[j]);
    }
    double z = 0;
    for (auto& x : s) z += (x = std::exp(x - mx));
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t t = 0; t < c; ++t) out[i][t] += s[j] / z * v[j][t];
  }
  return out;
}

}  // namespace oracle
