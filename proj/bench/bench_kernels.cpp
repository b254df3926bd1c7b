// SPDX-License-Identifier: Apache-2.0
//
// Serial reference kernels against their OpenMP/GEMM counterparts on shapes
// taken from the toy encoder and the 128px upsampling block.

#include <benchmark/benchmark.h>

#include <vector>

#include "gdn/kernels/parallel.hpp"
#include "gdn/kernels/serial.hpp"
#include "gdn/random.hpp"

namespace {

using gdn::kernels::ConvGeometry;
using gdn::kernels::GlobalDeconvGeometry;

std::vector<double> filled(std::size_t n, std::uint64_t seed) {
  gdn::Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

// Args: channels in, channels out, spatial extent.
ConvGeometry conv_geometry(const benchmark::State& s) {
  const auto ic = static_cast<std::size_t>(s.range(0)), oc = static_cast<std::size_t>(s.range(1));
  const auto hw = static_cast<std::size_t>(s.range(2));
  return ConvGeometry{ic, hw, hw, oc, 3, 3, 1, 1, 1};
}

template <bool Parallel>
void BM_ConvForward(benchmark::State& state) {
  const auto g = conv_geometry(state);
  const std::size_t batch = 8;
  const auto x = filled(batch * g.in_c * g.in_h * g.in_w, 1);
  const auto w = filled(g.out_c * g.patch(), 2);
  const auto b = filled(g.out_c, 3);
  std::vector<double> y(batch * g.out_c * g.out_h() * g.out_w());
  for (auto _ : state) {
    if constexpr (Parallel) {
      gdn::kernels::parallel::conv2d_forward<double>(g, batch, x, w, b, y);
    } else {
      gdn::kernels::serial::conv2d_forward<double>(g, batch, x, w, b, y);
    }
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * batch * g.out_c * g.patch() *
                                                    g.out_h() * g.out_w()));
}

template <bool Parallel>
void BM_ConvBackward(benchmark::State& state) {
  const auto g = conv_geometry(state);
  const std::size_t batch = 8;
  const auto x = filled(batch * g.in_c * g.in_h * g.in_w, 1);
  const auto w = filled(g.out_c * g.patch(), 2);
  const auto gy = filled(batch * g.out_c * g.out_h() * g.out_w(), 3);
  std::vector<double> gx(x.size()), gw(w.size()), gb(g.out_c);
  for (auto _ : state) {
    if constexpr (Parallel) {
      gdn::kernels::parallel::conv2d_backward<double>(g, batch, x, w, gy, gx, gw, gb);
    } else {
      gdn::kernels::serial::conv2d_backward<double>(g, batch, x, w, gy, gx, gw, gb);
    }
    benchmark::DoNotOptimize(gx.data());
  }
}

// Args: coarse extent, output extent; 8 images x 7 class maps.
template <bool Parallel>
void BM_GlobalDeconvForward(benchmark::State& state) {
  const auto in = static_cast<std::size_t>(state.range(0)), out = static_cast<std::size_t>(state.range(1));
  const GlobalDeconvGeometry g{56, in, in, out, out};
  const auto x = filled(g.maps * in * in, 1);
  const auto kh = filled(out * in, 2), kw = filled(out * in, 3);
  std::vector<double> y(g.maps * out * out);
  for (auto _ : state) {
    if constexpr (Parallel) {
      gdn::kernels::parallel::global_deconv_forward<double>(g, x, kh, kw, y);
    } else {
      gdn::kernels::serial::global_deconv_forward<double>(g, x, kh, kw, y);
    }
    benchmark::DoNotOptimize(y.data());
  }
}

template <bool Parallel>
void BM_GlobalDeconvBackward(benchmark::State& state) {
  const auto in = static_cast<std::size_t>(state.range(0)), out = static_cast<std::size_t>(state.range(1));
  const GlobalDeconvGeometry g{56, in, in, out, out};
  const auto x = filled(g.maps * in * in, 1);
  const auto kh = filled(out * in, 2), kw = filled(out * in, 3);
  const auto gy = filled(g.maps * out * out, 4);
  std::vector<double> gx(x.size()), gkh(kh.size()), gkw(kw.size());
  for (auto _ : state) {
    if constexpr (Parallel) {
      gdn::kernels::parallel::global_deconv_backward<double>(g, x, kh, kw, gy, gx, gkh, gkw);
    } else {
      gdn::kernels::serial::global_deconv_backward<double>(g, x, kh, kw, gy, gx, gkh, gkw);
    }
    benchmark::DoNotOptimize(gx.data());
  }
}

template <bool Parallel>
void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = filled(n * n, 1), b = filled(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    if constexpr (Parallel) {
      gdn::kernels::parallel::matmul<double>(a, b, c, n, n, n);
    } else {
      gdn::kernels::serial::matmul<double>(a, b, c, n, n, n);
    }
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * n * n));
}

void conv_shapes(benchmark::internal::Benchmark* b) {
  b->Args({3, 16, 128})->Args({16, 32, 64})->Args({32, 64, 32})->Args({64, 64, 16})->Unit(benchmark::kMillisecond);
}

void deconv_shapes(benchmark::internal::Benchmark* b) {
  b->Args({8, 128})->Args({4, 64})->Unit(benchmark::kMillisecond);
}

}  // namespace

BENCHMARK(BM_ConvForward<false>)->Name("conv_forward/serial")->Apply(conv_shapes);
BENCHMARK(BM_ConvForward<true>)->Name("conv_forward/parallel")->Apply(conv_shapes);
BENCHMARK(BM_ConvBackward<false>)->Name("conv_backward/serial")->Apply(conv_shapes);
BENCHMARK(BM_ConvBackward<true>)->Name("conv_backward/parallel")->Apply(conv_shapes);
BENCHMARK(BM_GlobalDeconvForward<false>)->Name("global_deconv_forward/serial")->Apply(deconv_shapes);
BENCHMARK(BM_GlobalDeconvForward<true>)->Name("global_deconv_forward/parallel")->Apply(deconv_shapes);
BENCHMARK(BM_GlobalDeconvBackward<false>)->Name("global_deconv_backward/serial")->Apply(deconv_shapes);
BENCHMARK(BM_GlobalDeconvBackward<true>)->Name("global_deconv_backward/parallel")->Apply(deconv_shapes);
BENCHMARK(BM_Matmul<false>)->Name("matmul/serial")->Arg(64)->Arg(256)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Matmul<true>)->Name("matmul/parallel")->Arg(64)->Arg(256)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
