// Copyright 2026 The kvspec Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>

#include "kvspec/engine.hpp"

namespace kvspec {

inline constexpr const char* kTraceFormat = "kvspec-trace";
inline constexpr int kTraceVersion = 1;

/// Serialized trace: {"format", "version", "scheme", "config", "spec",
/// "sequences": [{"prompt_len", "prefill_bytes", "outputs", "iterations":
/// [{"iteration", "layers": [{..., "heads": [...]}]}]}]}. Optional per-head
/// vectors are omitted when empty.
std::string trace_to_json(const Trace& trace);
Trace trace_from_json(const std::string& text);

void save_trace(const Trace& trace, const std::filesystem::path& path);
/// Throws IoError or ManifestError.
Trace load_trace(const std::filesystem::path& path);

}  // namespace kvspec
