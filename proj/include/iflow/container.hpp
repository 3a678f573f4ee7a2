// Copyright 2026 The iflow Authors
// SPDX-License-Identifier: Apache-2.0

// Binary container for compressed batches (all integers little-endian):
//
//   "IFLW" | u32 version | 32-byte model SHA-256
//   u8 k | u8 h | u32 S | u32 b | u8 K | u8 M
//   u32 C | u32 H | u32 W | u64 samples | i64 range_lo | i64 range_hi
//   u64 seed | u32 lanes | u32 metadata bytes | metadata
//   per lane: u64 consumed fill words | u64 samples in lane
//             | u64 word count | words (ceil(K/8) bytes each) | u64 state

#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "iflow/fixed_point.hpp"
#include "iflow/layers.hpp"

namespace iflow {

inline constexpr uint32_t kContainerVersion = 1;

struct LanePayload {
  uint64_t consumed_fill_words = 0;
  uint64_t samples = 0;
  std::vector<uint32_t> words;
  uint64_t state = 0;
};

struct Container {
  uint32_t version = kContainerVersion;
  std::array<uint8_t, 32> model_hash{};
  Precision precision;
  int K = 32;
  int M = 4;
  TensorShape shape;
  uint64_t samples = 0;
  int64_t range_lo = 0;
  int64_t range_hi = 256;
  uint64_t seed = 0;
  std::vector<uint8_t> metadata;
  std::vector<LanePayload> lanes;

  std::vector<uint8_t> serialize() const;
  static Container parse(std::span<const uint8_t> bytes);
  // Payload size in bits: K bits per word plus log2 of each final state.
  double payload_bits() const;
};

}  // namespace iflow
