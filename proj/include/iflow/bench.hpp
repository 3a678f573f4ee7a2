// Copyright 2026 The iflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace iflow {

enum class CoderKind { kUbcs, kRans };

std::string_view coder_kind_name(CoderKind kind);

struct BandwidthResult {
  CoderKind coder = CoderKind::kUbcs;
  int threads = 1;
  size_t symbols_per_thread = 0;
  int runs = 0;
  // Aggregate throughput in millions of symbols per second over all threads.
  double encode_msym_mean = 0;
  double encode_msym_sd = 0;
  double decode_msym_mean = 0;
  double decode_msym_sd = 0;
};

// Each thread encodes `symbols` pseudo-random symbols (R uniform in [2, 2^16],
// s uniform below R) on its own coder and then decodes them back; a mismatch
// raises kCorruptStream. Timings exclude symbol generation.
BandwidthResult bench_bandwidth(CoderKind coder, size_t symbols, int threads, int runs,
                                uint64_t seed = 1);

}  // namespace iflow
