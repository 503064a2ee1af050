// Copyright 2026 The kvspec Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "kvspec/random.hpp"
#include "kvspec/tensor.hpp"

namespace {

kvspec::Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  kvspec::Rng rng(seed);
  kvspec::Matrix m(rows, cols);
  for (float& v : m.data()) v = static_cast<float>(rng.normal());
  return m;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_matrix(n, n, 1);
  const auto b = random_matrix(n, n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(kvspec::matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->RangeMultiplier(2)->Range(32, 256);

void BM_Svd(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto m = random_matrix(4 * n, n, 3);
  for (auto _ : state) benchmark::DoNotOptimize(kvspec::svd(m));
}
BENCHMARK(BM_Svd)->Arg(16)->Arg(32)->Arg(64);

void BM_Softmax(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto m = random_matrix(1, n, 4);
  for (auto _ : state) benchmark::DoNotOptimize(kvspec::softmax_row(m.row(0)));
}
BENCHMARK(BM_Softmax)->Arg(256)->Arg(4096);

void BM_Topk(benchmark::State& state) {
  const auto m = random_matrix(1, 4096, 5);
  const auto k = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(kvspec::topk_indices(m.row(0), k));
}
BENCHMARK(BM_Topk)->Arg(16)->Arg(820);

}  // namespace

BENCHMARK_MAIN();
