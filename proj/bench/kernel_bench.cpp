// Times the OpenMP kernels against their serial reference versions.
// Run with OMP_NUM_THREADS=<n> to see scaling; on one core the ratio
// mostly reflects the im2col/BLAS formulation versus direct loops.

#include <benchmark/benchmark.h>

#include <vector>

#include "vessel/kernels.hpp"
#include "vessel/reference.hpp"
#include "vessel/rng.hpp"

namespace {

using namespace vessel;

std::vector<float> random_vector(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> v(n);
  for (float& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  return v;
}

kernels::ConvGeometry conv_geometry(const benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  const int hw = static_cast<int>(state.range(1));
  return {c, c, hw, hw, 3, 1, 1};
}

template <bool Parallel>
void BM_Conv2dForward(benchmark::State& state) {
  const auto g = conv_geometry(state);
  const auto in = random_vector(static_cast<std::size_t>(g.in_channels) * g.in_h * g.in_w, 1);
  const auto w = random_vector(static_cast<std::size_t>(g.out_channels) * g.patch(), 2);
  const auto b = random_vector(g.out_channels, 3);
  std::vector<float> out(static_cast<std::size_t>(g.out_channels) * g.out_h() * g.out_w());
  for (auto _ : state) {
    if constexpr (Parallel) {
      kernels::conv2d_forward(in, 1, w, b, out, g);
    } else {
      reference::conv2d_forward(in, 1, w, b, out, g);
    }
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * 2LL * g.out_channels * g.patch() * g.out_h() * g.out_w());
}

template <bool Parallel>
void BM_Conv2dBackward(benchmark::State& state) {
  const auto g = conv_geometry(state);
  const std::size_t in_n = static_cast<std::size_t>(g.in_channels) * g.in_h * g.in_w;
  const std::size_t out_n = static_cast<std::size_t>(g.out_channels) * g.out_h() * g.out_w();
  const auto in = random_vector(in_n, 1);
  const auto w = random_vector(static_cast<std::size_t>(g.out_channels) * g.patch(), 2);
  const auto go = random_vector(out_n, 3);
  std::vector<float> gi(in_n), gw(w.size()), gb(g.out_channels);
  for (auto _ : state) {
    if constexpr (Parallel) {
      kernels::conv2d_backward(in, 1, w, go, gi, gw, gb, g);
    } else {
      reference::conv2d_backward(in, 1, w, go, gi, gw, gb, g);
    }
    benchmark::DoNotOptimize(gi.data());
  }
}

template <bool Parallel>
void BM_MaxPool(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  const int hw = static_cast<int>(state.range(1));
  const kernels::PoolGeometry g{c, hw, hw, 2, 2, 0};
  const auto in = random_vector(static_cast<std::size_t>(c) * hw * hw, 4);
  std::vector<float> out(static_cast<std::size_t>(c) * (hw / 2) * (hw / 2));
  std::vector<std::int32_t> arg(out.size());
  for (auto _ : state) {
    if constexpr (Parallel) {
      kernels::max_pool_forward(in, 1, out, arg, g);
    } else {
      reference::max_pool_forward(in, 1, out, g);
    }
    benchmark::DoNotOptimize(out.data());
  }
}

template <bool Parallel>
void BM_BatchNorm(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  const int hw = static_cast<int>(state.range(1));
  const kernels::NormGeometry g{4, c, hw * hw};
  const auto in = random_vector(static_cast<std::size_t>(4) * c * hw * hw, 5);
  const std::vector<float> gamma(c, 1.0f), beta(c, 0.0f);
  std::vector<float> out(in.size()), mean(c), inv_std(c);
  for (auto _ : state) {
    if constexpr (Parallel) {
      kernels::batch_norm_train_forward(in, gamma, beta, 1e-5f, out, mean, inv_std, g);
    } else {
      reference::batch_norm_train_forward(in, gamma, beta, 1e-5f, out, g);
    }
    benchmark::DoNotOptimize(out.data());
  }
}

template <bool Parallel>
void BM_ResizeBilinear(benchmark::State& state) {
  const int src = static_cast<int>(state.range(0));
  const int dst = static_cast<int>(state.range(1));
  const auto in = random_vector(static_cast<std::size_t>(src) * src, 6);
  std::vector<float> out(static_cast<std::size_t>(dst) * dst);
  for (auto _ : state) {
    if constexpr (Parallel) {
      kernels::resize_bilinear(in, src, src, out, dst, dst);
    } else {
      reference::resize_bilinear(in, src, src, out, dst, dst);
    }
    benchmark::DoNotOptimize(out.data());
  }
}

}  // namespace

BENCHMARK(BM_Conv2dForward<false>)->Name("conv2d_forward/serial")->Args({32, 64})->Args({64, 128});
BENCHMARK(BM_Conv2dForward<true>)->Name("conv2d_forward/omp")->Args({32, 64})->Args({64, 128});
BENCHMARK(BM_Conv2dBackward<false>)->Name("conv2d_backward/serial")->Args({32, 64});
BENCHMARK(BM_Conv2dBackward<true>)->Name("conv2d_backward/omp")->Args({32, 64});
BENCHMARK(BM_MaxPool<false>)->Name("max_pool/serial")->Args({64, 256});
BENCHMARK(BM_MaxPool<true>)->Name("max_pool/omp")->Args({64, 256});
BENCHMARK(BM_BatchNorm<false>)->Name("batch_norm/serial")->Args({64, 128});
BENCHMARK(BM_BatchNorm<true>)->Name("batch_norm/omp")->Args({64, 128});
BENCHMARK(BM_ResizeBilinear<false>)->Name("resize_bilinear/serial")->Args({584, 512});
BENCHMARK(BM_ResizeBilinear<true>)->Name("resize_bilinear/omp")->Args({584, 512});

BENCHMARK_MAIN();
