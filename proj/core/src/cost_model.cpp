// Copyright 2026 The kvspec Authors
// SPDX-License-Identifier: Apache-2.0

#include "kvspec/cost_model.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

#include "kvspec/error.hpp"

namespace kvspec {

void CostParams::validate() const {
  if (!(pcie_bandwidth > 0 && gpu_compute > 0 && gpu_mem_bandwidth > 0 && kv_bytes_per_element > 0)) {
    throw InvalidArgument("cost parameters must all be positive");
  }
}

CostParams load_cost_params(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open cost config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ManifestError("cannot parse cost config " + path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw ManifestError("cost config must be a JSON object");
  CostParams p;
  try {
    p.pcie_bandwidth = j.value("pcie_bandwidth", p.pcie_bandwidth);
    p.gpu_compute = j.value("gpu_compute", p.gpu_compute);
    p.gpu_mem_bandwidth = j.value("gpu_mem_bandwidth", p.gpu_mem_bandwidth);
    p.kv_bytes_per_element = j.value("kv_bytes_per_element", p.kv_bytes_per_element);
  } catch (const nlohmann::json::exception& e) {
    throw ManifestError(std::string("cost config: ") + e.what());
  }
  p.validate();
  return p;
}

std::string to_string(ExecutionStyle s) {
  switch (s) {
    case ExecutionStyle::kFullGpu:
      return "full_gpu";
    case ExecutionStyle::kCpuSerial:
      return "cpu_serial";
    case ExecutionStyle::kPrefetchAll:
      return "prefetch_all";
    case ExecutionStyle::kSelectivePrefetch:
      return "selective";
  }
  return "unknown";
}

ExecutionStyle parse_style(std::string_view name) {
  for (ExecutionStyle s : kAllStyles) {
    if (name == to_string(s)) return s;
  }
  throw InvalidArgument("unknown execution style '" + std::string(name) + "'");
}

std::uint64_t kv_bytes(std::uint64_t layers, std::uint64_t heads, std::uint64_t head_dim,
                       std::uint64_t seq, std::uint64_t batch, std::uint64_t bytes_per_element) {
  return 2 * layers * heads * head_dim * seq * batch * bytes_per_element;
}

double transfer_time(double bytes, const CostParams& p) { return bytes / p.pcie_bandwidth; }

double compute_time(double flops, const CostParams& p) { return flops / p.gpu_compute; }

double attention_flops(std::size_t n, std::size_t head_dim) {
  return 4.0 * static_cast<double>(n) * static_cast<double>(head_dim);
}

double ffn_flops(std::size_t model_dim, std::size_t ffn_dim) {
  return 4.0 * static_cast<double>(model_dim) * static_cast<double>(ffn_dim);
}

LatencyBreakdown simulate_run(const CostTrace& trace, ExecutionStyle style, const CostParams& p) {
  p.validate();
  LatencyBreakdown out;
  out.style = style;
  for (const auto& iteration : trace) {
    IterationLatency it;
    double prev_compute = 0.0;
    for (std::size_t i = 0; i < iteration.size(); ++i) {
      const BlockWork& w = iteration[i];
      BlockLatency b;
      b.attention_s = compute_time(w.attention_flops, p);
      b.ffn_s = compute_time(w.ffn_flops, p);
      b.speculation_s = compute_time(w.speculation_flops, p);
      switch (style) {
        case ExecutionStyle::kFullGpu:
          b.load_s = w.full_bytes / p.gpu_mem_bandwidth;
          b.exposed_transfer_s = b.load_s;
          break;
        case ExecutionStyle::kCpuSerial:
          b.load_s = transfer_time(w.full_bytes, p);
          b.exposed_transfer_s = b.load_s;
          break;
        case ExecutionStyle::kPrefetchAll:
        case ExecutionStyle::kSelectivePrefetch: {
          const double bytes =
              style == ExecutionStyle::kPrefetchAll ? w.full_bytes : w.selected_bytes;
          b.load_s = transfer_time(bytes, p);
          b.exposed_transfer_s = i == 0 ? b.load_s : std::max(0.0, b.load_s - prev_compute);
          break;
        }
      }
      const double compute = b.attention_s + b.ffn_s;
      prev_compute = compute;
      it.total_s += compute + b.exposed_transfer_s;
      out.load_s += b.load_s;
      out.compute_s += compute;
      out.exposed_transfer_s += b.exposed_transfer_s;
      it.blocks.push_back(b);
    }
    out.total_s += it.total_s;
    out.iterations.push_back(std::move(it));
  }
  return out;
}

}  // namespace kvspec
