// Copyright 2026 The kvspec Authors
// SPDX-License-Identifier: Apache-2.0

#include <vector>

#include <benchmark/benchmark.h>

#include "kvspec/baselines.hpp"
#include "kvspec/kv_pool.hpp"
#include "kvspec/random.hpp"

namespace {

// Steady-state decode traffic: fetch a random fifth of a full pool, then
// append one token that forces an eviction.
void BM_PoolStep(benchmark::State& state) {
  const auto policy = static_cast<kvspec::EvictionPolicy>(state.range(0));
  constexpr std::size_t kRows = 1024;
  constexpr std::size_t kDim = 64;
  kvspec::KvPool pool(kDim, kRows, policy);
  const std::vector<float> row(kDim, 1.0f);
  for (std::size_t i = 0; i < kRows; ++i) pool.append(row, row);
  kvspec::Rng rng(7);
  std::vector<std::size_t> idx(kRows / 5);
  for (auto _ : state) {
    for (auto& i : idx) i = rng.below(kRows);
    benchmark::DoNotOptimize(pool.fetch(idx));
    benchmark::DoNotOptimize(pool.append(row, row));
  }
  state.SetLabel(kvspec::to_string(policy));
}
BENCHMARK(BM_PoolStep)
    ->Arg(static_cast<int>(kvspec::EvictionPolicy::kFifo))
    ->Arg(static_cast<int>(kvspec::EvictionPolicy::kLru))
    ->Arg(static_cast<int>(kvspec::EvictionPolicy::kCounter));

void BM_H2oStep(benchmark::State& state) {
  const auto budget = static_cast<std::size_t>(state.range(0));
  kvspec::H2oState h(budget);
  std::size_t token = 0;
  for (; token < budget; ++token) h.admit(token);
  std::vector<float> w(budget + 1, 1.0f / static_cast<float>(budget + 1));
  for (auto _ : state) {
    h.admit(token++);
    benchmark::DoNotOptimize(h.step(w));
  }
}
BENCHMARK(BM_H2oStep)->Arg(64)->Arg(512);

void BM_QuantRoundtrip(benchmark::State& state) {
  kvspec::Rng rng(3);
  std::vector<float> row(static_cast<std::size_t>(state.range(0)));
  for (float& v : row) v = static_cast<float>(rng.normal());
  for (auto _ : state) benchmark::DoNotOptimize(kvspec::quantize_roundtrip(row));
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(row.size() * sizeof(float)));
}
BENCHMARK(BM_QuantRoundtrip)->Arg(128)->Arg(4096);

}  // namespace

BENCHMARK_MAIN();
