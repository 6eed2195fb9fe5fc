#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "oracle.hpp"
#include "unisoma/autograd.hpp"
#include "unisoma/decoder.hpp"
#include "unisoma/gradcheck.hpp"
#include "unisoma/ops.hpp"

using namespace unisoma;
using test::check_close;
using test::random_tensor;

namespace {

HeadParams random_head(std::size_t c, std::size_t targets, std::mt19937_64& rng) {
  ParamStore store;
  Rng init(rng());
  init_head(store, "h", c, 2 * c, targets, init);
  const ParamStore before = store;
  for (const auto& [key, t] : before.entries()) store.set(key, random_tensor(t.shape(), rng, -0.8, 0.8));
  return head_at(store, "h");
}

Tensor softmax_rows(std::size_t n, std::size_t m, std::mt19937_64& rng) {
  return softmax(random_tensor({n, m}, rng, -2, 2), 1);
}

}  // namespace

TEST_SUITE("point_decoder") {

TEST_CASE("decode examples") {
  const Tensor tokens = Tensor::matrix({{1, 2}, {10, 20}});
  SUBCASE("single slice broadcasts its token") {
    check_close(decode_points(Tensor::matrix({{4, 5}}), Tensor::matrix({{1}, {1}, {1}})), {4, 5, 4, 5, 4, 5}, 0.0);
  }
  SUBCASE("one-hot rows pick their slice") {
    check_close(decode_points(tokens, Tensor::matrix({{0, 1}, {1, 0}})), {10, 20, 1, 2}, 0.0);
  }
  SUBCASE("N=2, M=2 hand case") {
    // Row 0: 0.25·(1,2) + 0.75·(10,20); row 1: 0.6·(1,2) + 0.4·(10,20).
    check_close(decode_points(tokens, Tensor::matrix({{0.25, 0.75}, {0.6, 0.4}})), {7.75, 15.5, 4.6, 9.2}, 1e-14);
  }
  SUBCASE("shape mismatch") {
    CHECK_THROWS_AS(decode_points(tokens, Tensor::matrix({{1, 0, 0}})), DimensionError);
  }
}

TEST_CASE("decode is linear in the tokens") {
  std::mt19937_64 rng(41);
  const Tensor w = softmax_rows(9, 4, rng);
  const Tensor t1 = random_tensor({4, 5}, rng), t2 = random_tensor({4, 5}, rng);
  const double a = 1.7, b = -0.3;
  const Tensor lhs = decode_points(add(scale(t1, a), scale(t2, b)), w);
  const Tensor rhs = add(scale(decode_points(t1, w), a), scale(decode_points(t2, w), b));
  check_close(lhs, rhs, 1e-12);
}

TEST_CASE("each output row depends only on its own weight row") {
  std::mt19937_64 rng(42);
  const Tensor w = softmax_rows(6, 3, rng);
  const Tensor t = random_tensor({3, 4}, rng);
  const Tensor base = decode_points(t, w);
  std::vector<double> zeroed = w.to_vector();
  for (std::size_t j = 0; j < 3; ++j) zeroed[2 * 3 + j] = 0.0;
  const Tensor changed = decode_points(t, Tensor(w.shape(), zeroed));
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t c = 0; c < 4; ++c) {
      if (i == 2) {
        CHECK(changed.at(i, c) == 0.0);
      } else {
        CHECK(changed.at(i, c) == base.at(i, c));
      }
    }
  }
}

TEST_CASE("convex weights keep outputs inside the token range") {
  std::mt19937_64 rng(43);
  const Tensor t = random_tensor({5, 1}, rng);
  const Tensor out = decode_points(t, softmax_rows(20, 5, rng));
  double lo = t[0], hi = t[0];
  for (double v : t.data()) lo = std::min(lo, v), hi = std::max(hi, v);
  for (double v : out.data()) {
    CHECK(v >= lo - 1e-15);
    CHECK(v <= hi + 1e-15);
  }
}

TEST_CASE("head matches the oracle") {
  std::mt19937_64 rng(44);
  const HeadParams p = random_head(6, 4, rng);
  const Tensor u = random_tensor({5, 6}, rng), x = random_tensor({5, 6}, rng);
  const auto want = oracle::linear(p.out, oracle::ffn(p.ffn, oracle::layer_norm(p.norm, oracle::add(oracle::from(u), oracle::from(x)))));
  const Tensor got = head_forward(u, x, p);
  CHECK(got.shape() == Shape{5, 4});
  check_close(got, oracle::flat(want), 1e-12);
  CHECK_THROWS_AS(head_forward(u, random_tensor({4, 6}, rng), p), DimensionError);
}

TEST_CASE("head examples") {
  std::mt19937_64 rng(45);
  HeadParams p = random_head(4, 3, rng);
  const Tensor x = random_tensor({3, 4}, rng);
  SUBCASE("zero output layer gives zero") {
    HeadParams z = p;
    z.out.weight = Tensor::zeros({4, 3});
    z.out.bias = Tensor::zeros({3});
    check_close(head_forward(random_tensor({3, 4}, rng), x, z), Tensor::zeros({3, 3}), 0.0);
  }
  SUBCASE("zero decoded input leaves the deep features alone") {
    const Tensor direct = linear(p.out, ffn(p.ffn, layer_norm(p.norm, x)));
    CHECK(max_abs_diff(head_forward(Tensor::zeros({3, 4}), x, p), direct) == 0.0);
  }
}

TEST_CASE("residual path carries gradient when tokens are zero") {
  std::mt19937_64 rng(46);
  const HeadParams p = random_head(4, 3, rng);
  const Tensor w = softmax_rows(5, 2, rng);
  const Tensor x = random_tensor({5, 4}, rng);
  const Tensor probe = random_tensor({5, 3}, rng);
  auto objective = [&](const Tensor& deep) {
    return sum(mul(head_forward(decode_points(Tensor::zeros({2, 4}), w), deep, p), probe));
  };
  Tape tape;
  const Tensor leaf = tape.watch(x);
  const Tensor g = tape.backward(objective(leaf)).of(leaf);
  double norm = 0;
  for (double v : g.data()) norm += v * v;
  CHECK(norm > 1e-6);
  CHECK(grad_check(objective, x).pass);
}

}  // TEST_SUITE
