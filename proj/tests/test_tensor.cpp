#include <cmath>
#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "unisoma/autograd.hpp"
#include "unisoma/gradcheck.hpp"
#include "unisoma/kernels.hpp"
#include "unisoma/nn.hpp"
#include "unisoma/ops.hpp"
#include "unisoma/optim.hpp"
#include "unisoma/params.hpp"

using namespace unisoma;
using test::check_close;
using test::random_tensor;

TEST_SUITE("tensor_core") {

TEST_CASE("tensor construction validates element count") {
  CHECK_THROWS_AS(Tensor({2, 3}, std::vector<double>(5)), DimensionError);
  const Tensor t({2, 3}, std::vector<double>(6, 1.0));
  CHECK(t.numel() == 6);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
}

TEST_CASE("matmul examples") {
  const Tensor a = Tensor::matrix({{1, 2}, {3, 4}});
  const Tensor b = Tensor::matrix({{5, 6}, {7, 8}});
  check_close(matmul(a, b), {19, 22, 43, 50}, 0.0);
  check_close(matmul(Tensor::matrix({{1, 0}, {0, 1}}), a), a, 0.0);
  check_close(matmul(a, Tensor::zeros({2, 3})), Tensor::zeros({2, 3}), 0.0);
  CHECK_THROWS_AS(matmul(a, Tensor::zeros({3, 2})), DimensionError);
}

TEST_CASE("matmul broadcasts batch dimensions") {
  std::mt19937_64 rng(1);
  const Tensor a = random_tensor({2, 3, 4}, rng);
  const Tensor b = random_tensor({4, 5}, rng);
  const Tensor c = matmul(a, b);
  REQUIRE(c.shape() == Shape{2, 3, 5});
  const Tensor second = matmul(reshape(slice(a, 0, 1, 2), {3, 4}), b);
  for (std::size_t i = 0; i < 15; ++i) CHECK(c[15 + i] == doctest::Approx(second[i]).epsilon(1e-14));
}

TEST_CASE("softmax examples") {
  check_close(softmax(Tensor::vector({0, 0, 0}), 0), {1.0 / 3, 1.0 / 3, 1.0 / 3}, 1e-15);
  check_close(softmax(Tensor::vector({42.0}), 0), {1.0}, 0.0);
  check_close(softmax(Tensor::vector({std::log(1.0), std::log(2.0), std::log(3.0)}), 0),
              {1.0 / 6, 2.0 / 6, 3.0 / 6}, 1e-15);
}

TEST_CASE("softmax rows sum to one and are shift invariant") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor x = random_tensor({6, 9}, rng, -30.0, 30.0);
    const Tensor s = softmax(x, 1);
    const Tensor sums = sum(s, 1);
    for (double v : sums.data()) CHECK(std::abs(v - 1.0) <= 1e-12);
    for (double v : s.data()) {
      CHECK(v > 0.0 - 1e-300);
      CHECK(v <= 1.0);
    }
    check_close(softmax(add_scalar(x, 123.25), 1), s, 1e-12);
  }
}

TEST_CASE("linear examples") {
  const Tensor x = Tensor::matrix({{2, -1}});
  const LinearParams ident{Tensor::matrix({{1, 0}, {0, 1}}), Tensor::zeros({2})};
  check_close(linear(ident, x), x, 0.0);
  const LinearParams p{Tensor::matrix({{1, 2}, {3, 4}}), Tensor::vector({0.5, -0.5})};
  check_close(linear(p, Tensor::zeros({3, 2})), {0.5, -0.5, 0.5, -0.5, 0.5, -0.5}, 0.0);
  // [2, -1]·W = [2·1 − 3, 2·2 − 4] = [−1, 0]; plus bias.
  check_close(linear(p, x), {-0.5, -0.5}, 0.0);
  CHECK_THROWS_AS(linear(p, Tensor::zeros({1, 3})), DimensionError);
}

TEST_CASE("layer_norm examples") {
  const NormParams unit{Tensor::ones({2}), Tensor::zeros({2})};
  check_close(layer_norm(unit, Tensor::matrix({{5, 5}})), {0, 0}, 0.0);
  check_close(layer_norm(unit, Tensor::matrix({{1, 3}})), {-1, 1}, 1e-4);
  const NormParams unit4{Tensor::ones({4}), Tensor::zeros({4})};
  const Tensor normed = Tensor::matrix({{-1.3416407864998738, -0.4472135954999579, 0.4472135954999579, 1.3416407864998738}});
  check_close(layer_norm(unit4, normed), normed, 1e-4);
}

TEST_CASE("ffn examples") {
  std::mt19937_64 rng(3);
  FfnParams zero{{Tensor::zeros({3, 6}), Tensor::zeros({6})}, {Tensor::zeros({6, 3}), Tensor::zeros({3})}};
  check_close(ffn(zero, random_tensor({4, 3}, rng)), Tensor::zeros({4, 3}), 0.0);

  // One channel, hidden 1, weights 2 and 3, zero bias: 3·GELU(2x).
  FfnParams one{{Tensor::matrix({{2}}), Tensor::zeros({1})}, {Tensor::matrix({{3}}), Tensor::zeros({1})}};
  const double x = 0.7;
  const double expect = 3.0 * (0.5 * 2 * x * (1.0 + std::erf(2 * x / std::sqrt(2.0))));
  check_close(ffn(one, Tensor::matrix({{x}})), {expect}, 1e-14);

  ParamStore store;
  init_ffn(store, "f", 3, 6, rng);
  const FfnParams p = ffn_at(store, "f");
  const auto report = grad_check([&](const Tensor& v) { return sum(ffn(p, v)); }, random_tensor({2, 3}, rng));
  CHECK(report.pass);
}

TEST_CASE("attention examples") {
  std::mt19937_64 rng(4);
  const Tensor v1 = random_tensor({1, 4}, rng);
  check_close(attention(random_tensor({1, 4}, rng), random_tensor({1, 4}, rng), v1), v1, 0.0);
  check_close(attention(random_tensor({3, 4}, rng), random_tensor({3, 4}, rng), Tensor::zeros({3, 4})),
              Tensor::zeros({3, 4}), 0.0);

  // q = k = I₂ (orthogonal rows), C = 2: logits diag 1/√2, off-diag 0.
  const Tensor qk = Tensor::matrix({{1, 0}, {0, 1}});
  const Tensor v = Tensor::matrix({{1, 2}, {3, 4}});
  const double e = std::exp(1.0 / std::sqrt(2.0));
  const double a = e / (e + 1.0), b = 1.0 / (e + 1.0);
  check_close(attention(qk, qk, v), {a * 1 + b * 3, a * 2 + b * 4, b * 1 + a * 3, b * 2 + a * 4}, 1e-14);
  CHECK_THROWS_AS(attention(qk, Tensor::zeros({3, 2}), v), DimensionError);
}

TEST_CASE("backward examples") {
  {
    Tape tape;
    const Tensor x = tape.watch(Tensor::scalar(3.0));
    const Gradients g = tape.backward(x);
    CHECK(g.of(x).item() == 1.0);
  }
  {
    Tape tape;
    const Tensor c = Tensor::vector({1.5, -2.0, 0.25});
    const Tensor x = tape.watch(Tensor::vector({4, 5, 6}));
    const Gradients g = tape.backward(sum(mul(c, x)));
    check_close(g.of(x), c, 0.0);
  }
  {
    Tape tape;
    const Tensor x = tape.watch(Tensor::vector({1, 2}));
    CHECK_THROWS(tape.backward(x));  // not scalar
    const Tensor loss = sum(x);
    tape.backward(loss);
    CHECK_THROWS(tape.backward(loss));  // already consumed
  }
}

TEST_CASE("replayed forward and backward are bitwise identical") {
  std::mt19937_64 rng(5);
  ParamStore store;
  init_ffn(store, "f", 4, 8, rng);
  const Tensor x = random_tensor({5, 4}, rng);
  auto run = [&] {
    Tape tape;
    const ParamStore bound = store.bind(tape);
    const Tensor y = attention(ffn(ffn_at(bound, "f"), x), x, x);
    const Gradients g = tape.backward(sum(square(y)));
    return g.of(bound.get("f/fc1/weight"));
  };
  CHECK(bitwise_equal(run(), run()));
}

TEST_CASE("grad_check examples") {
  std::mt19937_64 rng(6);
  const Tensor x = random_tensor({3, 3}, rng);
  const auto sq = grad_check([](const Tensor& v) { return sum(square(v)); }, x);
  CHECK(sq.pass);
  CHECK(sq.max_rel_err < 1e-6);

  const auto constant = grad_check([](const Tensor&) { return Tensor::scalar(2.0); }, x);
  CHECK(constant.pass);
  CHECK(constant.max_rel_err == 0.0);

  // Negative control: an op whose recorded backward rule is deliberately wrong.
  auto wrong_square = [](const Tensor& v) {
    std::vector<double> out = v.to_vector();
    for (auto& e : out) e *= e;
    const Tensor input = v;
    return Tape::record(Tensor(v.shape(), out), {&input},
                        [input](std::span<const double> go, std::span<std::vector<double>* const> gi) {
                          if (!gi[0]) return;
                          for (std::size_t i = 0; i < go.size(); ++i) (*gi[0])[i] += go[i] * 3.0 * input[i];
                        });
  };
  const auto bad = grad_check([&](const Tensor& v) { return sum(wrong_square(v)); }, x);
  CHECK_FALSE(bad.pass);
}

TEST_CASE("adam examples") {
  ParamStore params;
  params.set("w", Tensor::vector({1.0, -2.0}));
  AdamState state;
  AdamConfig cfg;
  cfg.learning_rate = 0.01;

  adam_step(params, {{"w", Tensor::zeros({2})}}, state, cfg);
  check_close(params.get("w"), {1.0, -2.0}, 0.0);

  ParamStore fresh;
  fresh.set("w", Tensor::vector({1.0, -2.0}));
  AdamState s2;
  adam_step(fresh, {{"w", Tensor::vector({0.3, -5.0})}}, s2, cfg);
  // Bias-corrected first step: m̂/√v̂ = sign(g).
  check_close(fresh.get("w"), {1.0 - 0.01, -2.0 + 0.01}, 1e-9);

  ParamStore quad;
  quad.set("x", Tensor::vector({2.0}));
  AdamState s3;
  const double f0 = 4.0;
  for (int i = 0; i < 2; ++i) {
    const double x = quad.get("x")[0];
    adam_step(quad, {{"x", Tensor::vector({2 * x})}}, s3, cfg);
  }
  CHECK(quad.get("x")[0] * quad.get("x")[0] < f0);

  CHECK_THROWS(adam_step(quad, {{"y", Tensor::vector({1.0})}}, s3, cfg));
}

TEST_CASE("serial and parallel kernels agree bitwise") {
  std::mt19937_64 rng(7);
  using kernels::Trans;
  for (auto [m, n, k] : {std::array<std::size_t, 3>{1, 1, 1}, {7, 13, 5}, {64, 33, 70}, {300, 17, 40}}) {
    const Tensor a = random_tensor({m, k}, rng);
    const Tensor b = random_tensor({k, n}, rng);
    const Tensor at = transpose(a), bt = transpose(b);
    for (Trans ta : {Trans::no, Trans::yes}) {
      for (Trans tb : {Trans::no, Trans::yes}) {
        std::vector<double> s(m * n, 0.5), p(m * n, 0.5);
        const double* pa = ta == Trans::no ? a.ptr() : at.ptr();
        const double* pb = tb == Trans::no ? b.ptr() : bt.ptr();
        kernels::serial::gemm(ta, tb, m, n, k, pa, pb, s.data(), true);
        kernels::parallel::gemm(ta, tb, m, n, k, pa, pb, p.data(), true);
        CHECK(s == p);
      }
    }
  }
  const Tensor x = random_tensor({257, 19}, rng, -20, 20);
  std::vector<double> s(x.numel()), p(x.numel()), rs(257), rp(257);
  kernels::serial::softmax(x.ptr(), s.data(), 1, 257, 19);
  kernels::parallel::softmax(x.ptr(), p.data(), 1, 257, 19);
  CHECK(s == p);
  kernels::serial::normalize_rows(x.ptr(), s.data(), rs.data(), 257, 19, 1e-5);
  kernels::parallel::normalize_rows(x.ptr(), p.data(), rp.data(), 257, 19, 1e-5);
  CHECK(s == p);
  CHECK(rs == rp);
  kernels::serial::gelu(x.ptr(), s.data(), x.numel());
  kernels::parallel::gelu(x.ptr(), p.data(), x.numel());
  CHECK(s == p);
}

TEST_CASE("checkpoint round trip") {
  std::mt19937_64 rng(8);
  Checkpoint ck;
  ck.header = {{"note", "round trip"}};
  ck.params.set("a/weight", random_tensor({3, 2}, rng));
  ck.params.set("b", random_tensor({4}, rng));
  const auto path = std::filesystem::temp_directory_path() / "unisoma_ckpt_test.bin";
  save_checkpoint(path, ck);
  const Checkpoint back = load_checkpoint(path);
  CHECK(back.header == ck.header);
  CHECK(back.params.size() == 2);
  CHECK(bitwise_equal(back.params.get("a/weight"), ck.params.get("a/weight")));
  CHECK(bitwise_equal(back.params.get("b"), ck.params.get("b")));
  std::filesystem::remove(path);
}

TEST_CASE("non-finite results are an error") {
  CHECK_THROWS_AS(div(Tensor::vector({1.0}), Tensor::vector({0.0})), NumericalError);
}

}  // TEST_SUITE
