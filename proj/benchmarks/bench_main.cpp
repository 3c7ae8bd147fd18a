#include <benchmark/benchmark.h>

#include <cmath>

#include "gmseg/metrics.hpp"
#include "gmseg/model.hpp"
#include "gmseg/objective.hpp"
#include "gmseg/ops.hpp"
#include "gmseg/rng.hpp"

using namespace gmseg;

namespace {

Tensor<float> random_tensor(const Shape& shape, Rng& rng) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  return Tensor<float>(shape, std::move(v));
}

Mask disc(std::size_t n, double cy, double cx, double r) {
  Mask m(n, n);
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) m(y, x) = std::hypot(y - cy, x - cx) < r ? 1 : 0;
  return m;
}

// Args: dilation, channels. Batch 4 of 200x200.
void BM_ConvForward(benchmark::State& state) {
  Rng rng(1);
  const int d = static_cast<int>(state.range(0));
  const auto c = static_cast<std::size_t>(state.range(1));
  const auto spec = ConvSpec::same(c, c, 3, d, true);
  const auto x = random_tensor({4, c, 200, 200}, rng);
  const auto w = random_tensor(spec.weight_shape(), rng);
  const auto b = random_tensor({c}, rng);
  NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, spec, w, &b));
  state.SetItemsProcessed(state.iterations() * 4 * 200 * 200 * c * c * 9);
}
BENCHMARK(BM_ConvForward)->ArgsProduct({{1, 2, 6, 24}, {8, 32}})->Unit(benchmark::kMillisecond);

void BM_ConvBackward(benchmark::State& state) {
  Rng rng(2);
  const int d = static_cast<int>(state.range(0));
  const auto c = static_cast<std::size_t>(state.range(1));
  const auto spec = ConvSpec::same(c, c, 3, d, true);
  auto x = random_tensor({4, c, 200, 200}, rng);
  auto w = random_tensor(spec.weight_shape(), rng);
  auto b = random_tensor({c}, rng);
  x.set_requires_grad(true);
  w.set_requires_grad(true);
  b.set_requires_grad(true);
  for (auto _ : state) {
    auto y = sum(conv2d(x, spec, w, &b));
    y.backward();
    x.zero_grad();
    w.zero_grad();
    b.zero_grad();
  }
}
BENCHMARK(BM_ConvBackward)->ArgsProduct({{1, 6, 24}, {8, 32}})->Unit(benchmark::kMillisecond);

// Arg: width of every ASPP stage. One 200x200 slice, eval mode.
void BM_AsppForward(benchmark::State& state) {
  AsppConfig cfg;
  cfg.base_width = cfg.branch_width = cfg.head_width = static_cast<std::size_t>(state.range(0));
  auto net = build_aspp<float>(cfg, 3);
  net.set_training(false);
  Rng rng(3);
  const auto x = random_tensor({1, 1, 200, 200}, rng);
  NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(x));
}
BENCHMARK(BM_AsppForward)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_AsppTrainStep(benchmark::State& state) {
  AsppConfig cfg;
  cfg.base_width = cfg.branch_width = cfg.head_width = 4;
  auto net = build_aspp<float>(cfg, 4);
  Rng rng(4);
  const auto x = random_tensor({static_cast<std::size_t>(state.range(0)), 1, 200, 200}, rng);
  std::vector<float> g(x.numel());
  for (auto& v : g) v = rng.bernoulli(0.2) ? 1.0f : 0.0f;
  const Tensor<float> gold(x.shape(), g);
  for (auto _ : state) {
    net.zero_grad();
    dice_loss(net.forward(x), gold).backward();
  }
}
BENCHMARK(BM_AsppTrainStep)->Arg(1)->Arg(11)->Unit(benchmark::kMillisecond);

// Arg: mask side. Two offset discs, exact pairwise boundary distances.
void BM_SurfaceDistances(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = disc(n, n / 2.0, n / 2.0, n / 4.0);
  const auto b = disc(n, n / 2.0 + 2, n / 2.0 - 1, n / 4.5);
  for (auto _ : state) benchmark::DoNotOptimize(surface_distances(a, b, PixelSize{}));
}
BENCHMARK(BM_SurfaceDistances)->Arg(64)->Arg(200);

void BM_Skeletonize(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = disc(n, n / 2.0, n / 2.0, n / 3.0);
  for (auto _ : state) benchmark::DoNotOptimize(skeletonize(a));
}
BENCHMARK(BM_Skeletonize)->Arg(64)->Arg(200);

}  // namespace
BENCHMARK_MAIN();
