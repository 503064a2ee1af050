// Copyright 2026 The kvspec Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "kvspec/engine.hpp"
#include "kvspec/skewing.hpp"
#include "kvspec/workload.hpp"

namespace {

const kvspec::Model& skewed() {
  static const kvspec::Model model = [] {
    kvspec::ModelSpec spec;
    spec.outlier_scale = kvspec::kCalibratedOutlierScale;
    const kvspec::Model base = kvspec::generate_synthetic(spec);
    return kvspec::apply_skew(base, kvspec::calibrate_skew(base, kvspec::calibration_input(base, 0)));
  }();
  return model;
}

// One decode iteration after a 256-token prefill, per scheme.
void BM_DecodeStep(benchmark::State& state) {
  const auto scheme = static_cast<kvspec::Scheme>(state.range(0));
  const kvspec::Model& model = skewed();
  const kvspec::Matrix prompt = kvspec::synthetic_tokens(model, 256, 1);
  kvspec::RunConfig cfg;
  cfg.scheme = scheme;
  for (auto _ : state) {
    state.PauseTiming();
    kvspec::Engine engine(model, cfg);
    const auto last = engine.prefill(prompt);
    state.ResumeTiming();
    benchmark::DoNotOptimize(engine.decode_step(last));
  }
  state.SetLabel(kvspec::to_string(scheme));
}
BENCHMARK(BM_DecodeStep)
    ->DenseRange(0, static_cast<int>(kvspec::Scheme::kOracle))
    ->Unit(benchmark::kMicrosecond);

void BM_Calibrate(benchmark::State& state) {
  kvspec::ModelSpec spec;
  spec.outlier_scale = kvspec::kCalibratedOutlierScale;
  const kvspec::Model base = kvspec::generate_synthetic(spec);
  const kvspec::Matrix sample = kvspec::calibration_input(base, 0);
  for (auto _ : state) benchmark::DoNotOptimize(kvspec::calibrate_skew(base, sample));
}
BENCHMARK(BM_Calibrate)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
