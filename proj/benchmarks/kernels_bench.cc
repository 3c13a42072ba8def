#include <benchmark/benchmark.h>

#include "racdnn/attention.h"
#include "racdnn/metrics.h"
#include "racdnn/nn.h"
#include "racdnn/ops.h"

namespace racdnn {
namespace {

void BM_Conv2dForward(benchmark::State& state) {
  const auto channels = static_cast<std::size_t>(state.range(0));
  const auto size = static_cast<std::size_t>(state.range(1));
  const Tensor x = Tensor::create({4, channels, size, size}, init::Uniform{-1.0, 1.0, 1});
  const Conv2dParams conv = Conv2dParams::he_normal(channels, channels, 3, 2, 1, true, 2);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, conv));
}
BENCHMARK(BM_Conv2dForward)->Args({8, 32})->Args({32, 16})->Args({64, 56});

void BM_Conv2dBackward(benchmark::State& state) {
  const Tensor x = Tensor::create({4, 16, 32, 32}, init::Uniform{-1.0, 1.0, 1});
  Conv2dParams conv = Conv2dParams::he_normal(16, 16, 3, 2, 1, true, 2);
  conv.weights.set_requires_grad();
  for (auto _ : state) {
    GradTape tape;
    tape.backward(sum(conv2d(x, conv)));
  }
}
BENCHMARK(BM_Conv2dBackward);

void BM_GridSample(benchmark::State& state) {
  const auto size = static_cast<std::size_t>(state.range(0));
  const Tensor img = Tensor::create({2, 3, size, size}, init::Uniform{0.0, 1.0, 2});
  const Tensor params = Tensor::from({2, 3}, {0.5, 0.2, -0.1, 0.8, -0.1, 0.0});
  const Tensor grid = affine_grid(attention_transform(params, Direction::kForward), size, size);
  for (auto _ : state) benchmark::DoNotOptimize(grid_sample(img, grid));
}
BENCHMARK(BM_GridSample)->Arg(64)->Arg(224);

void BM_PrCurve(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor pred = Tensor::create({n}, init::Uniform{0.0, 1.0, 3});
  std::vector<double> gt(n);
  for (std::size_t i = 0; i < n; ++i) gt[i] = (i * 7) % 3 == 0 ? 1.0 : 0.0;
  for (auto _ : state) benchmark::DoNotOptimize(pr_curve(pred.data(), gt));
}
BENCHMARK(BM_PrCurve)->Arg(64 * 64)->Arg(300 * 400);

}  // namespace
}  // namespace racdnn
