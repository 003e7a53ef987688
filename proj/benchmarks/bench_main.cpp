#include <benchmark/benchmark.h>

#include <random>

#include "dtjrd/labels.hpp"
#include "dtjrd/metrics.hpp"
#include "dtjrd/model.hpp"
#include "dtjrd/resize.hpp"
#include "dtjrd/vcm.hpp"

using namespace dtjrd;

namespace {

Tensor<float> random_batch(std::size_t b, std::size_t s) {
  std::mt19937 rng(1);
  std::uniform_real_distribution<float> u(-1, 1);
  std::vector<float> v(b * 3 * s * s);
  for (auto& x : v) x = u(rng);
  return Tensor<float>({b, 3, s, s}, std::move(v));
}

Image random_image(int w, int h) {
  std::mt19937 rng(2);
  Image img(w, h, 3);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng() % 256);
  return img;
}

void BM_ToyForward(benchmark::State& state) {
  const auto batch_size = static_cast<std::size_t>(state.range(0));
  Model<float> m(ModelConfig::toy(), 1);
  const auto batch = random_batch(batch_size, 96);
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(m.forward(batch));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ToyForward)->Arg(1)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_ToyForwardBackward(benchmark::State& state) {
  const auto batch_size = static_cast<std::size_t>(state.range(0));
  Model<float> m(ModelConfig::toy(), 1);
  for (auto& p : m.parameters()) p.tensor.set_requires_grad(true);
  const auto batch = random_batch(batch_size, 96);
  std::vector<LabelDistribution> labels(batch_size, gaussian_soft_labels(30, 3.0, 64));
  for (auto _ : state) {
    m.zero_grad();
    soft_cross_entropy(m.forward(batch), labels).backward();
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ToyForwardBackward)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_ProxyEncode(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  const auto img = random_image(side, side);
  const auto map = QpMap::uniform(side, side, 32);
  ProxyCodec codec;
  for (auto _ : state) benchmark::DoNotOptimize(codec.encode(img, map));
  state.SetBytesProcessed(state.iterations() * side * side * 3);
}
BENCHMARK(BM_ProxyEncode)->Arg(256)->Arg(512)->Unit(benchmark::kMillisecond);

void BM_PosEmbedResize(benchmark::State& state) {
  std::mt19937 rng(3);
  std::normal_distribution<double> n(0, 0.02);
  std::vector<float> v(7 * 7 * 1024);
  for (auto& x : v) x = static_cast<float>(n(rng));
  const Tensor<float> grid({7, 7, 1024}, std::move(v));
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(bicubic_resize_2d(grid, 12, 12));
}
BENCHMARK(BM_PosEmbedResize)->Unit(benchmark::kMicrosecond);

void BM_Ssim(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  const auto a = random_image(side, side);
  auto b = a;
  for (auto& p : b.pixels) p = static_cast<std::uint8_t>(p ^ 3);
  for (auto _ : state) benchmark::DoNotOptimize(ssim(a, b));
}
BENCHMARK(BM_Ssim)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
