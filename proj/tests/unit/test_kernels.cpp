#include <numeric>

#include "doctest.h"
#include "stedq/kernels.hpp"
#include "testing.hpp"

using namespace stedq;
using stedq::testing::max_relative_error;
using stedq::testing::numeric_gradient;
using stedq::testing::project;
using stedq::testing::random_tensor;

namespace {

// Independent direct cross-correlation: explicit zero-padded copy, then four nested loops.
Tensor conv_oracle(const Tensor& x, const Tensor& k, const Tensor& b, std::size_t pad) {
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t O = k.dim(0), KH = k.dim(2), KW = k.dim(3);
  Tensor padded({N, C, H + 2 * pad, W + 2 * pad});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t xx = 0; xx < W; ++xx) padded.at(n, c, y + pad, xx + pad) = x.at(n, c, y, xx);
  const std::size_t OH = H + 2 * pad - KH + 1, OW = W + 2 * pad - KW + 1;
  Tensor out({N, O, OH, OW});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t i = 0; i < OH; ++i)
        for (std::size_t j = 0; j < OW; ++j) {
          double s = 0.0;
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t u = 0; u < KH; ++u)
              for (std::size_t v = 0; v < KW; ++v) s += padded.at(n, c, i + u, j + v) * k.at(o, c, u, v);
          out.at(n, o, i, j) = s + b[o];
        }
  return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.shape() == b.shape());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("conv2d hand examples") {
  Tensor one({1, 1, 1, 1}, 5.0), k({1, 1, 1, 1}, 1.0), b({1}, 0.0);
  CHECK(conv2d(one, k, b, Padding::kValid)[0] == 5.0);

  Tensor ones({1, 1, 3, 3}, 1.0), k2({1, 1, 2, 2}, 1.0);
  const Tensor out = conv2d(ones, k2, b, Padding::kValid);
  CHECK(out.shape() == Shape{1, 1, 2, 2});
  for (double v : out.data()) CHECK(v == 4.0);
}

TEST_CASE("conv2d matches nested-loop oracle on all shapes up to 8x8") {
  std::mt19937_64 rng(11);
  for (std::size_t h = 1; h <= 8; ++h)
    for (std::size_t w = 1; w <= 8; w += 3)
      for (std::size_t kk : {1u, 3u, 5u})
        for (Padding mode : {Padding::kValid, Padding::kSame}) {
          const std::size_t pad = padding_amount(mode, kk);
          if (kk > h + 2 * pad || kk > w + 2 * pad) continue;
          const Tensor x = random_tensor({2, 2, h, w}, rng);
          const Tensor k = random_tensor({3, 2, kk, kk}, rng);
          const Tensor b = random_tensor({3}, rng);
          const Tensor want = conv_oracle(x, k, b, pad);
          CHECK(max_abs_diff(conv2d(x, k, b, mode), want) <= 1e-12);
          CHECK(max_abs_diff(reference::conv2d(x, k, b, mode), want) <= 1e-12);
        }
}

TEST_CASE("conv2d rejects mismatched channels and oversize kernels") {
  Tensor x({1, 2, 4, 4}), k({1, 3, 3, 3}), b({1});
  CHECK_THROWS_AS(conv2d(x, k, b, Padding::kValid), ShapeError);
  Tensor big({1, 2, 5, 5});
  CHECK_THROWS_AS(conv2d(x, big, b, Padding::kValid), ShapeError);
  Tensor k2({1, 2, 3, 3}), wrong_bias({2});
  CHECK_THROWS_AS(conv2d(x, k2, wrong_bias, Padding::kValid), ShapeError);
}

TEST_CASE("conv2d_backward scalar chain rule and zero gradient") {
  Tensor x({1, 1, 1, 1}, 5.0), k({1, 1, 1, 1}, 2.0), dy({1, 1, 1, 1}, 1.0);
  const auto g = conv2d_backward(x, k, dy, Padding::kValid);
  CHECK(g.parameter_grads.at("kernels")[0] == 5.0);
  CHECK(g.input_grad[0] == 2.0);
  CHECK(g.parameter_grads.at("bias")[0] == 1.0);

  std::mt19937_64 rng(3);
  const Tensor xr = random_tensor({2, 2, 5, 5}, rng), kr = random_tensor({3, 2, 3, 3}, rng);
  const auto z = conv2d_backward(xr, kr, Tensor({2, 3, 5, 5}), Padding::kSame);
  for (double v : z.input_grad.data()) CHECK(v == 0.0);
  for (const auto& [name, t] : z.parameter_grads)
    for (double v : t.data()) CHECK(v == 0.0);

  CHECK_THROWS_AS(conv2d_backward(xr, kr, Tensor({2, 3, 4, 4}), Padding::kSame), ShapeError);
}

TEST_CASE("conv2d_backward agrees with central differences") {
  struct Case {
    Shape x, k;
    Padding mode;
  };
  const Case cases[] = {{{1, 1, 4, 4}, {2, 1, 3, 3}, Padding::kValid},
                        {{2, 2, 5, 5}, {3, 2, 3, 3}, Padding::kSame},
                        {{2, 3, 6, 4}, {2, 3, 1, 1}, Padding::kValid},
                        {{1, 2, 5, 6}, {2, 2, 5, 5}, Padding::kSame}};
  for (std::uint64_t seed = 1; seed <= 5; ++seed)
    for (const auto& c : cases) {
      std::mt19937_64 rng(seed);
      Tensor x = random_tensor(c.x, rng), k = random_tensor(c.k, rng), b = random_tensor({c.k[0]}, rng);
      const Tensor y = conv2d(x, k, b, c.mode);
      const Tensor w = random_tensor(y.shape(), rng);
      auto loss = [&] { return project(conv2d(x, k, b, c.mode), w); };
      const auto g = conv2d_backward(x, k, w, c.mode);
      CHECK(max_relative_error(g.input_grad, numeric_gradient(x, loss)) < 1e-4);
      CHECK(max_relative_error(g.parameter_grads.at("kernels"), numeric_gradient(k, loss)) < 1e-4);
      CHECK(max_relative_error(g.parameter_grads.at("bias"), numeric_gradient(b, loss)) < 1e-4);
    }
}

TEST_CASE("parallel conv kernels agree with the serial reference") {
  std::mt19937_64 rng(21);
  const Tensor x = random_tensor({3, 4, 9, 7}, rng), k = random_tensor({5, 4, 3, 3}, rng), b = random_tensor({5}, rng);
  for (Padding mode : {Padding::kValid, Padding::kSame}) {
    const Tensor y = conv2d(x, k, b, mode);
    CHECK(max_abs_diff(y, reference::conv2d(x, k, b, mode)) <= 1e-12);
    const Tensor dy = random_tensor(y.shape(), rng);
    const auto fast = conv2d_backward(x, k, dy, mode);
    const auto slow = reference::conv2d_backward(x, k, dy, mode);
    CHECK(max_abs_diff(fast.input_grad, slow.input_grad) <= 1e-12);
    CHECK(max_abs_diff(fast.parameter_grads.at("kernels"), slow.parameter_grads.at("kernels")) <= 1e-12);
    CHECK(max_abs_diff(fast.parameter_grads.at("bias"), slow.parameter_grads.at("bias")) <= 1e-12);
    // Determinism: repeated evaluation is bitwise identical.
    CHECK(conv2d(x, k, b, mode) == y);
  }
}

TEST_CASE("maxpool2d hand examples") {
  Tensor a({1, 1, 2, 2}, {1, 2, 3, 4});
  const auto r = maxpool2d(a, 1);
  CHECK(r.output.shape() == Shape{1, 1, 1, 1});
  CHECK(r.output[0] == 4.0);

  std::vector<double> asc(9);
  std::iota(asc.begin(), asc.end(), 1.0);
  const auto r3 = maxpool2d(Tensor({1, 1, 3, 3}, asc), 1);
  CHECK(r3.output.values() == std::vector<double>{5, 6, 8, 9});

  CHECK_THROWS_AS(maxpool2d(a, 0), ShapeError);
  CHECK_THROWS_AS(maxpool2d(Tensor({1, 1, 1, 4}), 1), ShapeError);
}

TEST_CASE("maxpool2d ties route to the first row-major index") {
  const auto r = maxpool2d(Tensor({1, 1, 2, 2}, 7.0), 1);
  CHECK(r.argmax[0] == 0);
  const Tensor g = maxpool2d_backward({1, 1, 2, 2}, r.argmax, Tensor({1, 1, 1, 1}, 3.0));
  CHECK(g.values() == std::vector<double>{3, 0, 0, 0});
}

TEST_CASE("maxpool2d stride 2 equals brute-force window max") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    std::mt19937_64 rng(seed);
    const Tensor x = random_tensor({2, 3, 6, 6}, rng);
    const auto r = maxpool2d(x, 2);
    const auto ref = reference::maxpool2d(x, 2);
    CHECK(r.output == ref.output);
    CHECK(r.argmax == ref.argmax);
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < 3; ++i)
          for (std::size_t j = 0; j < 3; ++j) {
            double m = -1e300;
            for (std::size_t u = 0; u < 2; ++u)
              for (std::size_t v = 0; v < 2; ++v) m = std::max(m, x.at(n, c, 2 * i + u, 2 * j + v));
            CHECK(r.output.at(n, c, i, j) == m);
          }
  }
}

TEST_CASE("maxpool2d backward conserves gradient mass and matches finite differences") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed)
    for (std::size_t stride : {1u, 2u}) {
      std::mt19937_64 rng(seed);
      Tensor x = random_tensor({2, 2, 5, 6}, rng);
      const auto r = maxpool2d(x, stride);
      const Tensor w = random_tensor(r.output.shape(), rng);
      const Tensor g = maxpool2d_backward(x.shape(), r.argmax, w);
      const double in_sum = std::accumulate(g.data().begin(), g.data().end(), 0.0);
      const double out_sum = std::accumulate(w.data().begin(), w.data().end(), 0.0);
      CHECK(in_sum == doctest::Approx(out_sum).epsilon(1e-12));
      auto loss = [&] { return project(maxpool2d(x, stride).output, w); };
      CHECK(max_relative_error(g, numeric_gradient(x, loss)) < 1e-4);
    }
}

TEST_CASE("dense hand examples and oracle") {
  Tensor x({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor eye({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  CHECK(dense(x, eye, Tensor({3})) == x);

  Tensor bias({2}, {0.5, -1.5});
  const Tensor y = dense(x, Tensor({2, 3}), bias);
  CHECK(y.values() == std::vector<double>{0.5, -1.5, 0.5, -1.5});

  std::mt19937_64 rng(5);
  const Tensor a = random_tensor({3, 4}, rng), w = random_tensor({2, 4}, rng), b = random_tensor({2}, rng);
  const Tensor out = dense(a, w, b);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      double s = b[j];
      for (std::size_t k = 0; k < 4; ++k) s += a[i * 4 + k] * w[j * 4 + k];
      CHECK(std::abs(out[i * 2 + j] - s) <= 1e-12);
    }
  CHECK(max_abs_diff(out, reference::dense(a, w, b)) <= 1e-12);
  CHECK_THROWS_AS(dense(a, Tensor({2, 3}), b), ShapeError);
}

TEST_CASE("dense_backward agrees with central differences and the reference") {
  const Shape shapes[][2] = {{{1, 3}, {2, 3}}, {{4, 5}, {3, 5}}, {{3, 7}, {1, 7}}};
  for (std::uint64_t seed = 1; seed <= 5; ++seed)
    for (const auto& s : shapes) {
      std::mt19937_64 rng(seed);
      Tensor x = random_tensor(s[0], rng), w = random_tensor(s[1], rng), b = random_tensor({s[1][0]}, rng);
      const Tensor proj = random_tensor({s[0][0], s[1][0]}, rng);
      auto loss = [&] { return project(dense(x, w, b), proj); };
      const auto g = dense_backward(x, w, proj);
      CHECK(max_relative_error(g.input_grad, numeric_gradient(x, loss)) < 1e-4);
      CHECK(max_relative_error(g.parameter_grads.at("weights"), numeric_gradient(w, loss)) < 1e-4);
      CHECK(max_relative_error(g.parameter_grads.at("bias"), numeric_gradient(b, loss)) < 1e-4);
      const auto ref = reference::dense_backward(x, w, proj);
      CHECK(max_abs_diff(g.parameter_grads.at("weights"), ref.parameter_grads.at("weights")) <= 1e-12);
      CHECK(max_abs_diff(g.input_grad, ref.input_grad) <= 1e-12);
    }
}
