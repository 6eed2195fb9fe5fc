#include <cmath>
#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "unisoma/encoder.hpp"
#include "unisoma/ops.hpp"

using namespace unisoma;
using test::check_close;
using test::random_tensor;

namespace {

struct Fixture {
  ParamStore store;
  EncoderParams params;
};

Fixture make_encoder(std::size_t raw, std::size_t channels, std::size_t slices, std::uint64_t seed) {
  Fixture f;
  Rng rng(seed);
  init_encoder(f.store, "enc", raw, channels, slices, rng);
  f.params = encoder_at(f.store, "enc");
  return f;
}

// Scalar re-derivation of the encoder: x = raw·W + b, point weights softmax
// over slices, edge weights softmax of (w_src + w_dst)·W' + b', tokens the
// mass-weighted average of point and edge features.
std::vector<double> loop_tokens(const Tensor& raw, const EdgeSet& edges, const EncoderParams& p,
                                double gamma) {
  const std::size_t n = raw.dim(0), cr = raw.dim(1), c = p.in.weight.dim(1), m = p.slice.weight.dim(1);
  auto lin = [](const std::vector<double>& in, const LinearParams& l) {
    const std::size_t ci = l.weight.dim(0), co = l.weight.dim(1);
    std::vector<double> out(co);
    for (std::size_t o = 0; o < co; ++o) {
      double s = l.bias[o];
      for (std::size_t i = 0; i < ci; ++i) s += in[i] * l.weight[i * co + o];
      out[o] = s;
    }
    return out;
  };
  auto soft = [](std::vector<double> v) {
    double mx = v[0];
    for (double x : v) mx = std::max(mx, x);
    double z = 0;
    for (double& x : v) z += (x = std::exp(x - mx));
    for (double& x : v) x /= z;
    return v;
  };
  std::vector<std::vector<double>> x(n), w(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> r(cr);
    for (std::size_t k = 0; k < cr; ++k) r[k] = raw.at(i, k);
    x[i] = lin(r, p.in);
    w[i] = soft(lin(x[i], p.slice));
  }
  std::vector<double> num(m * c, 0.0), den(m, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      den[j] += w[i][j];
      for (std::size_t ch = 0; ch < c; ++ch) num[j * c + ch] += w[i][j] * x[i][ch];
    }
  }
  for (std::size_t e = 0; e < edges.size(); ++e) {
    std::vector<double> s(m), a(3);
    for (std::size_t j = 0; j < m; ++j) s[j] = w[edges.src[e]][j] + w[edges.dst[e]][j];
    const auto we = soft(lin(s, p.edge_slice));
    for (std::size_t k = 0; k < 3; ++k) a[k] = edges.attributes.at(e, k);
    const auto ef = lin(a, p.edge_in);
    for (std::size_t j = 0; j < m; ++j) {
      den[j] += gamma * we[j];
      for (std::size_t ch = 0; ch < c; ++ch) num[j * c + ch] += gamma * we[j] * ef[ch];
    }
  }
  for (std::size_t j = 0; j < m; ++j)
    for (std::size_t ch = 0; ch < c; ++ch) num[j * c + ch] /= den[j];
  return num;
}

}  // namespace

TEST_SUITE("slice_encoder") {

TEST_CASE("gamma values") {
  CHECK(gamma_value(GammaMode::points_over_edges, 10, 30, 3) == doctest::Approx(1.0 / 3.0));
  CHECK(gamma_value(GammaMode::k_value, 10, 30, 3) == 3.0);
  CHECK(gamma_value(GammaMode::points_over_edges, 10, 0, 3) == 0.0);
  CHECK(gamma_mode_from_string(to_string(GammaMode::k_value)) == GammaMode::k_value);
  CHECK_THROWS_AS(gamma_mode_from_string("half"), ConfigError);
}

TEST_CASE("token aggregation hand example") {
  // Two points, two slices, hard assignment: each token is its point.
  const Tensor x = Tensor::matrix({{1, 2}, {3, 4}});
  const Tensor w = Tensor::matrix({{1, 0}, {0, 1}});
  check_close(encode_tokens(x, Tensor(), w, Tensor(), 0.0), {1, 2, 3, 4}, 1e-15);
  // Even split: both tokens are the mean.
  const Tensor half = Tensor::matrix({{0.5, 0.5}, {0.5, 0.5}});
  check_close(encode_tokens(x, Tensor(), half, Tensor(), 0.0), {2, 3, 2, 3}, 1e-15);
  // One edge feature with gamma 2 and full weight on slice 0:
  // z_0 = (1·[1,2] + 2·[7,8]) / (1 + 2).
  const Tensor e = Tensor::matrix({{7, 8}});
  const Tensor we = Tensor::matrix({{1, 0}});
  check_close(encode_tokens(x, e, w, we, 2.0), {5, 6, 3, 4}, 1e-14);
}

TEST_CASE("empty slices give zero tokens and are reported") {
  const Tensor x = Tensor::matrix({{1, 2}, {3, 4}});
  const Tensor w = Tensor::matrix({{1, 0}, {1, 0}});
  std::vector<std::size_t> empty;
  const Tensor z = encode_tokens(x, Tensor(), w, Tensor(), 0.0, &empty);
  check_close(z, {2, 3, 0, 0}, 1e-15);
  CHECK(empty == std::vector<std::size_t>{1});
}

TEST_CASE("encode_object matches a scalar re-derivation") {
  std::mt19937_64 rng(11);
  for (auto mode : {GammaMode::points_over_edges, GammaMode::k_value}) {
    const Fixture f = make_encoder(5, 6, 4, 3);
    const Tensor pts = random_tensor({9, 3}, rng);
    const Tensor raw = concat({pts, random_tensor({9, 2}, rng)}, 1);
    const EdgeSet edges = build_knn_edges(pts, 3);
    const double gamma = gamma_value(mode, 9, edges.size(), 3);
    const SliceEmbedding emb = encode_object(raw, edges, f.params, gamma);
    check_close(emb.tokens, loop_tokens(raw, edges, f.params, gamma), 1e-12);
    CHECK(emb.empty_slices.empty());
  }
}

TEST_CASE("slice weights are a partition of unity") {
  std::mt19937_64 rng(12);
  const Fixture f = make_encoder(3, 8, 5, 4);
  const Tensor pts = random_tensor({15, 3}, rng, -10, 10);
  const SliceEmbedding emb = encode_object(pts, build_knn_edges(pts, 4), f.params, 0.25);
  for (const Tensor* w : {&emb.point_weights, &emb.edge_weights}) {
    for (std::size_t i = 0; i < w->dim(0); ++i) {
      double s = 0;
      for (std::size_t j = 0; j < 5; ++j) {
        CHECK(w->at(i, j) >= 0.0);
        s += w->at(i, j);
      }
      CHECK(std::abs(s - 1.0) < 1e-12);
    }
  }
  // Total point mass equals the point count.
  CHECK(std::abs(sum(emb.point_mass)[0] - 15.0) < 1e-12);
}

TEST_CASE("a single slice averages everything") {
  std::mt19937_64 rng(13);
  const Fixture f = make_encoder(3, 4, 1, 5);
  const Tensor pts = random_tensor({7, 3}, rng);
  const EdgeSet edges = build_knn_edges(pts, 2);
  const double gamma = 0.5;
  const SliceEmbedding emb = encode_object(pts, edges, f.params, gamma);
  const Tensor x = linear(f.params.in, pts);
  const Tensor ef = linear(f.params.edge_in, edges.attributes);
  const Tensor expect = scale(add(sum(x, 0), scale(sum(ef, 0), gamma)), 1.0 / (7.0 + gamma * 14.0));
  check_close(reshape(emb.tokens, {4}), expect, 1e-13);
}

TEST_CASE("gamma zero ignores edge features") {
  std::mt19937_64 rng(14);
  const Fixture f = make_encoder(3, 4, 3, 6);
  const Tensor pts = random_tensor({8, 3}, rng);
  const SliceEmbedding with_edges = encode_object(pts, build_knn_edges(pts, 3), f.params, 0.0);
  const SliceEmbedding without = encode_object(pts, EdgeSet{}, f.params, 0.0);
  check_close(with_edges.tokens, without.tokens, 1e-14);
}

TEST_CASE("masked joint encoding equals separate encoding") {
  std::mt19937_64 rng(15);
  const Fixture f = make_encoder(3, 6, 4, 7);
  for (int trial = 0; trial < 5; ++trial) {
    const Tensor a = random_tensor({9, 3}, rng), b = random_tensor({6, 3}, rng, 2, 4);
    const EdgeSet ea = build_knn_edges(a, 3), eb = build_knn_edges(b, 3);
    const SliceEmbedding joint = joint_encode(a, ea, b, eb, f.params, 1.0 / 3.0, true);
    const SliceEmbedding alone = encode_object(a, ea, f.params, 1.0 / 3.0);
    check_close(joint.tokens, alone.tokens, 1e-10);
  }
}

TEST_CASE("composition reproduces the joint tokens in both gamma modes") {
  std::mt19937_64 rng(16);
  const Fixture f = make_encoder(3, 6, 4, 8);
  for (auto mode : {GammaMode::points_over_edges, GammaMode::k_value}) {
    const Tensor a = random_tensor({10, 3}, rng), b = random_tensor({7, 3}, rng);
    const EdgeSet ea = build_knn_edges(a, 3), eb = build_knn_edges(b, 3);
    const double g = gamma_value(mode, 10, ea.size(), 3);
    const SliceEmbedding sa = encode_object(a, ea, f.params, g);
    const SliceEmbedding sb = encode_object(b, eb, f.params, g);
    const SliceEmbedding joint = joint_encode(a, ea, b, eb, f.params, g);
    check_close(compose_slices(sa, sb).tokens, joint.tokens, 1e-9);
  }
}

TEST_CASE("composition rejects mismatched embeddings") {
  std::mt19937_64 rng(17);
  const Fixture f = make_encoder(3, 4, 2, 9);
  const Tensor a = random_tensor({5, 3}, rng);
  const SliceEmbedding sa = encode_object(a, build_knn_edges(a, 2), f.params, 0.5);
  const SliceEmbedding sb = encode_object(a, build_knn_edges(a, 2), f.params, 2.0);
  CHECK_THROWS_AS(compose_slices(sa, sb), ConfigError);
}

}  // TEST_SUITE
