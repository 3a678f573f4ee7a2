// Copyright 2026 The iflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "iflow/container.hpp"

#include <cmath>
#include <cstring>
#include <string>

#include "iflow/errors.hpp"

namespace iflow {

namespace {

class Writer {
 public:
  void u8(uint8_t v) { out.push_back(v); }
  void u32(uint32_t v) { le(v, 4); }
  void u64(uint64_t v) { le(v, 8); }
  void bytes(std::span<const uint8_t> b) { out.insert(out.end(), b.begin(), b.end()); }
  void le(uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  std::vector<uint8_t> out;
};

class Reader {
 public:
  explicit Reader(std::span<const uint8_t> in) : in_(in) {}
  uint64_t le(int n) {
    need(static_cast<size_t>(n));
    uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= uint64_t{in_[pos_ + i]} << (8 * i);
    pos_ += static_cast<size_t>(n);
    return v;
  }
  uint8_t u8() { return static_cast<uint8_t>(le(1)); }
  uint32_t u32() { return static_cast<uint32_t>(le(4)); }
  uint64_t u64() { return le(8); }
  void bytes(uint8_t* dst, size_t n) {
    need(n);
    std::memcpy(dst, in_.data() + pos_, n);
    pos_ += n;
  }
  size_t remaining() const { return in_.size() - pos_; }

 private:
  void need(size_t n) const {
    if (in_.size() - pos_ < n) fail(ErrorCode::kCorruptStream, "container is truncated");
  }
  std::span<const uint8_t> in_;
  size_t pos_ = 0;
};

int word_bytes(int K) { return (K + 7) / 8; }

}  // namespace

std::vector<uint8_t> Container::serialize() const {
  Writer w;
  w.bytes(std::span<const uint8_t>(reinterpret_cast<const uint8_t*>("IFLW"), 4));
  w.u32(version);
  w.bytes(model_hash);
  w.u8(static_cast<uint8_t>(precision.k));
  w.u8(static_cast<uint8_t>(precision.h));
  w.u32(precision.S);
  w.u32(static_cast<uint32_t>(precision.b));
  w.u8(static_cast<uint8_t>(K));
  w.u8(static_cast<uint8_t>(M));
  w.u32(static_cast<uint32_t>(shape.channels));
  w.u32(static_cast<uint32_t>(shape.height));
  w.u32(static_cast<uint32_t>(shape.width));
  w.u64(samples);
  w.u64(static_cast<uint64_t>(range_lo));
  w.u64(static_cast<uint64_t>(range_hi));
  w.u64(seed);
  w.u32(static_cast<uint32_t>(lanes.size()));
  w.u32(static_cast<uint32_t>(metadata.size()));
  w.bytes(metadata);
  const int wb = word_bytes(K);
  for (const auto& lane : lanes) {
    w.u64(lane.consumed_fill_words);
    w.u64(lane.samples);
    w.u64(lane.words.size());
    for (uint32_t word : lane.words) w.le(word, wb);
    w.u64(lane.state);
  }
  return std::move(w.out);
}

Container Container::parse(std::span<const uint8_t> bytes) {
  Reader r(bytes);
  char magic[4];
  r.bytes(reinterpret_cast<uint8_t*>(magic), 4);
  if (std::memcmp(magic, "IFLW", 4) != 0) fail(ErrorCode::kCorruptStream, "not an iflow container");
  Container c;
  c.version = r.u32();
  if (c.version != kContainerVersion) {
    fail(ErrorCode::kVersion, "unsupported container version " + std::to_string(c.version));
  }
  r.bytes(c.model_hash.data(), c.model_hash.size());
  c.precision.k = r.u8();
  c.precision.h = r.u8();
  c.precision.S = r.u32();
  c.precision.b = static_cast<int>(r.u32());
  c.K = r.u8();
  c.M = r.u8();
  c.shape.channels = static_cast<int>(r.u32());
  c.shape.height = static_cast<int>(r.u32());
  c.shape.width = static_cast<int>(r.u32());
  c.samples = r.u64();
  c.range_lo = static_cast<int64_t>(r.u64());
  c.range_hi = static_cast<int64_t>(r.u64());
  c.seed = r.u64();
  const uint32_t lanes = r.u32();
  const uint32_t meta = r.u32();
  if (meta > r.remaining()) fail(ErrorCode::kCorruptStream, "container metadata is truncated");
  c.metadata.resize(meta);
  if (meta) r.bytes(c.metadata.data(), meta);
  if (c.K < 2 || c.K > 32 || c.M < 1 || c.K + c.M > 62) fail(ErrorCode::kCorruptStream, "bad coder parameters");
  if (lanes == 0 || lanes > r.remaining() / 32 + 1) fail(ErrorCode::kCorruptStream, "bad lane count");
  const int wb = word_bytes(c.K);
  uint64_t total = 0;
  for (uint32_t i = 0; i < lanes; ++i) {
    LanePayload lane;
    lane.consumed_fill_words = r.u64();
    lane.samples = r.u64();
    const uint64_t n = r.u64();
    if (n > r.remaining() / static_cast<size_t>(wb)) fail(ErrorCode::kCorruptStream, "lane word count exceeds data");
    lane.words.resize(n);
    for (uint64_t j = 0; j < n; ++j) lane.words[j] = static_cast<uint32_t>(r.le(wb));
    lane.state = r.u64();
    total += lane.samples;
    c.lanes.push_back(std::move(lane));
  }
  if (r.remaining() != 0) fail(ErrorCode::kCorruptStream, "trailing bytes after container");
  if (total != c.samples) fail(ErrorCode::kCorruptStream, "lane sample counts do not add up");
  return c;
}

double Container::payload_bits() const {
  double bits = 0;
  for (const auto& lane : lanes) {
    bits += static_cast<double>(lane.words.size()) * K + std::log2(static_cast<double>(lane.state));
  }
  return bits;
}

}  // namespace iflow
