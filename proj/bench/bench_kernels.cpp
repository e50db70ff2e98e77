// Parallel kernels against the serial reference ones.

#include <benchmark/benchmark.h>

#include <random>

#include "stedq/kernels.hpp"

using namespace stedq;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed) {
  Tensor t(std::move(shape));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (double& v : t.data()) v = nd(rng);
  return t;
}

// args: batch, in_ch, out_ch, side
struct ConvCase {
  Tensor x, k, b, dy;
  explicit ConvCase(const benchmark::State& s) {
    const auto n = static_cast<std::size_t>(s.range(0)), ci = static_cast<std::size_t>(s.range(1)),
               co = static_cast<std::size_t>(s.range(2)), side = static_cast<std::size_t>(s.range(3));
    x = random_tensor({n, ci, side, side}, 1);
    k = random_tensor({co, ci, 3, 3}, 2);
    b = random_tensor({co}, 3);
    dy = random_tensor({n, co, side, side}, 4);
  }
};

void set_flops(benchmark::State& s, double per_iter) {
  s.counters["FLOP/s"] = benchmark::Counter(per_iter, benchmark::Counter::kIsIterationInvariantRate);
}

double conv_flops(const benchmark::State& s) {
  return 2.0 * 9 * static_cast<double>(s.range(0) * s.range(1) * s.range(2) * s.range(3) * s.range(3));
}

void BM_Conv(benchmark::State& s) {
  ConvCase c(s);
  for (auto _ : s) benchmark::DoNotOptimize(conv2d(c.x, c.k, c.b, Padding::kSame));
  set_flops(s, conv_flops(s));
}

void BM_ConvReference(benchmark::State& s) {
  ConvCase c(s);
  for (auto _ : s) benchmark::DoNotOptimize(reference::conv2d(c.x, c.k, c.b, Padding::kSame));
  set_flops(s, conv_flops(s));
}

void BM_ConvBackward(benchmark::State& s) {
  ConvCase c(s);
  for (auto _ : s) benchmark::DoNotOptimize(conv2d_backward(c.x, c.k, c.dy, Padding::kSame));
  set_flops(s, 2 * conv_flops(s));
}

void BM_ConvBackwardReference(benchmark::State& s) {
  ConvCase c(s);
  for (auto _ : s) benchmark::DoNotOptimize(reference::conv2d_backward(c.x, c.k, c.dy, Padding::kSame));
  set_flops(s, 2 * conv_flops(s));
}

void conv_args(benchmark::internal::Benchmark* b) {
  b->Args({16, 1, 8, 64})->Args({16, 8, 16, 32})->Args({16, 16, 16, 8})->Unit(benchmark::kMillisecond);
}

// args: batch, in, out
void BM_Dense(benchmark::State& s) {
  const auto n = static_cast<std::size_t>(s.range(0)), in = static_cast<std::size_t>(s.range(1)),
             out = static_cast<std::size_t>(s.range(2));
  const Tensor x = random_tensor({n, in}, 1), w = random_tensor({out, in}, 2), b = random_tensor({out}, 3);
  for (auto _ : s) benchmark::DoNotOptimize(dense(x, w, b));
}

void BM_DenseReference(benchmark::State& s) {
  const auto n = static_cast<std::size_t>(s.range(0)), in = static_cast<std::size_t>(s.range(1)),
             out = static_cast<std::size_t>(s.range(2));
  const Tensor x = random_tensor({n, in}, 1), w = random_tensor({out, in}, 2), b = random_tensor({out}, 3);
  for (auto _ : s) benchmark::DoNotOptimize(reference::dense(x, w, b));
}

void BM_MaxPool(benchmark::State& s) {
  const auto side = static_cast<std::size_t>(s.range(0));
  const Tensor x = random_tensor({16, 8, side, side}, 1);
  for (auto _ : s) benchmark::DoNotOptimize(maxpool2d(x, 2));
}

void BM_MaxPoolReference(benchmark::State& s) {
  const auto side = static_cast<std::size_t>(s.range(0));
  const Tensor x = random_tensor({16, 8, side, side}, 1);
  for (auto _ : s) benchmark::DoNotOptimize(reference::maxpool2d(x, 2));
}

}  // namespace

BENCHMARK(BM_Conv)->Apply(conv_args);
BENCHMARK(BM_ConvReference)->Apply(conv_args);
BENCHMARK(BM_ConvBackward)->Apply(conv_args);
BENCHMARK(BM_ConvBackwardReference)->Apply(conv_args);
BENCHMARK(BM_Dense)->Args({100, 256, 128})->Args({100, 16, 32});
BENCHMARK(BM_DenseReference)->Args({100, 256, 128})->Args({100, 16, 32});
BENCHMARK(BM_MaxPool)->Arg(64)->Arg(16);
BENCHMARK(BM_MaxPoolReference)->Arg(64)->Arg(16);

BENCHMARK_MAIN();
