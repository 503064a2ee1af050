// Copyright 2026 The kvspec Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace kvspec {

/// Illustrative hardware figures, not measurements.
struct CostParams {
  double pcie_bandwidth = 16e9;     // bytes/s
  double gpu_compute = 30e12;       // flop/s
  double gpu_mem_bandwidth = 700e9; // bytes/s
  double kv_bytes_per_element = 2;  // half-precision accounting

  /// Throws InvalidArgument unless every field is positive.
  void validate() const;
};

/// Reads a JSON object with any subset of the CostParams field names.
CostParams load_cost_params(const std::filesystem::path& path);

enum class ExecutionStyle { kFullGpu, kCpuSerial, kPrefetchAll, kSelectivePrefetch };

std::string to_string(ExecutionStyle s);
/// Accepts "full_gpu", "cpu_serial", "prefetch_all" and "selective".
ExecutionStyle parse_style(std::string_view name);
inline constexpr ExecutionStyle kAllStyles[] = {ExecutionStyle::kFullGpu, ExecutionStyle::kCpuSerial,
                                               ExecutionStyle::kPrefetchAll,
                                               ExecutionStyle::kSelectivePrefetch};

/// 2 * L * H * d * seq * batch * bytes_per_element.
std::uint64_t kv_bytes(std::uint64_t layers, std::uint64_t heads, std::uint64_t head_dim,
                       std::uint64_t seq, std::uint64_t batch, std::uint64_t bytes_per_element);

double transfer_time(double bytes, const CostParams& p);
double compute_time(double flops, const CostParams& p);

/// Attention flops of one head attending over n tokens: 4 * n * d.
double attention_flops(std::size_t n, std::size_t head_dim);
/// FFN flops per token: 4 * D * ffn_dim.
double ffn_flops(std::size_t model_dim, std::size_t ffn_dim);

/// Work of one transformer block in one decode iteration.
struct BlockWork {
  double full_bytes = 0;      // whole KV cache of the block
  double selected_bytes = 0;  // what the scheme actually moves
  double attention_flops = 0;
  double ffn_flops = 0;
  double speculation_flops = 0;  // issued during this block for the next one
};

/// [iteration][layer]
using CostTrace = std::vector<std::vector<BlockWork>>;

struct BlockLatency {
  double load_s = 0;
  double attention_s = 0;
  double ffn_s = 0;
  double exposed_transfer_s = 0;  // <= load_s
  double speculation_s = 0;       // hidden in this block's compute window
};

struct IterationLatency {
  std::vector<BlockLatency> blocks;
  double total_s = 0;
};

struct LatencyBreakdown {
  ExecutionStyle style = ExecutionStyle::kCpuSerial;
  std::vector<IterationLatency> iterations;
  double total_s = 0;
  double load_s = 0;
  double compute_s = 0;
  double exposed_transfer_s = 0;
};

/// Max-plus timing of the trace under one execution style.
///
/// FULL_GPU reads the cache from GPU memory, serialized with compute.
/// CPU_SERIAL loads each block's full cache over PCIe and then computes.
/// PREFETCH_ALL overlaps block i's full load with block i-1's compute, so
/// only max(0, load_i - compute_{i-1}) is exposed. SELECTIVE_PREFETCH does
/// the same with the selected bytes. Block 0's load is always exposed.
LatencyBreakdown simulate_run(const CostTrace& trace, ExecutionStyle style, const CostParams& p);

}  // namespace kvspec
