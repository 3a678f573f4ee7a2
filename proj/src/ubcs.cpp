// Copyright 2026 The iflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "iflow/ubcs.hpp"

#include <bit>
#include <cmath>
#include <string>

namespace iflow {

namespace {

int word_bytes(int K) { return (K + 7) / 8; }

void put_u64(std::vector<uint8_t>& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

uint64_t get_u64(std::span<const uint8_t> in, size_t& pos) {
  if (pos > in.size() || in.size() - pos < 8) fail(ErrorCode::kCorruptStream, "truncated coder payload");
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= uint64_t{in[pos + i]} << (8 * i);
  pos += 8;
  return v;
}

}  // namespace

UbcsCoder::UbcsCoder(int K, int M) : K_(K), M_(M) {
  if (K < 2 || K > 32) fail(ErrorCode::kParameter, "UBCS word size K must be in [2, 32]");
  if (M < 1 || K + M > 62) fail(ErrorCode::kParameter, "UBCS headroom M must satisfy 1 <= M, K + M <= 62");
  upper_ = uint128{1} << (K + M);
  word_mask_ = K == 32 ? 0xffffffffu : ((1u << K) - 1);
  c_ = uint64_t{1} << M;
}

void UbcsCoder::bad_symbol(uint32_t s, uint32_t R) const {
  fail(ErrorCode::kParameter, "invalid uniform symbol s=" + std::to_string(s) + " R=" +
                                  std::to_string(R) + " for K=" + std::to_string(K_));
}

void UbcsCoder::underflow() const {
  fail(ErrorCode::kAuxUnderflow, "UBCS decode needs more bits than the stream holds");
}

void UbcsCoder::encode_bits(uint64_t value, int bits) {
  if (bits < 0 || bits > 64) fail(ErrorCode::kParameter, "bit width must be in [0, 64]");
  if (bits < 64 && (value >> bits) != 0) fail(ErrorCode::kParameter, "value does not fit in bit width");
  const int chunk = K_ - 1;
  // Low chunk first so that decoding (reverse order) yields the high chunk last.
  for (int done = 0; done < bits; done += chunk) {
    const int w = bits - done < chunk ? bits - done : chunk;
    encode(static_cast<uint32_t>((value >> done) & ((uint64_t{1} << w) - 1)), 1u << w);
  }
}

uint64_t UbcsCoder::decode_bits(int bits) {
  if (bits < 0 || bits > 64) fail(ErrorCode::kParameter, "bit width must be in [0, 64]");
  const int chunk = K_ - 1;
  const int n = (bits + chunk - 1) / chunk;
  uint64_t value = 0;
  for (int i = n - 1; i >= 0; --i) {
    const int done = i * chunk;
    const int w = bits - done < chunk ? bits - done : chunk;
    value |= uint64_t{decode(1u << w)} << done;
  }
  return value;
}

void UbcsCoder::encode_wide(uint64_t value, uint64_t width) {
  if (width == 0 || value >= width) fail(ErrorCode::kParameter, "wide symbol out of range");
  if ((width >> K_) == 0) {
    encode(static_cast<uint32_t>(value), static_cast<uint32_t>(width));
    return;
  }
  // Split into low chunk and quotient; the top block may be partial.
  const int lo_bits = K_ - 1;
  const uint64_t block = uint64_t{1} << lo_bits;
  const uint64_t lo = value & (block - 1);
  const uint64_t hi = value >> lo_bits;
  const uint64_t hi_width = ((width - 1) >> lo_bits) + 1;
  const uint64_t lo_width = hi == hi_width - 1 ? width - (hi_width - 1) * block : block;
  encode(static_cast<uint32_t>(lo), static_cast<uint32_t>(lo_width));
  encode_wide(hi, hi_width);
}

uint64_t UbcsCoder::decode_wide(uint64_t width) {
  if (width == 0) fail(ErrorCode::kParameter, "wide symbol range is empty");
  if ((width >> K_) == 0) return decode(static_cast<uint32_t>(width));
  const int lo_bits = K_ - 1;
  const uint64_t block = uint64_t{1} << lo_bits;
  const uint64_t hi_width = ((width - 1) >> lo_bits) + 1;
  const uint64_t hi = decode_wide(hi_width);
  const uint64_t lo_width = hi == hi_width - 1 ? width - (hi_width - 1) * block : block;
  const uint64_t lo = decode(static_cast<uint32_t>(lo_width));
  return (hi << lo_bits) | lo;
}

uint64_t UbcsCoder::codelength_bits() const {
  const uint64_t ceil_log = c_ <= 1 ? 0 : 64 - static_cast<uint64_t>(std::countl_zero(c_ - 1));
  return ceil_log + static_cast<uint64_t>(K_) * words_.size();
}

double UbcsCoder::information_bits() const {
  return std::log2(static_cast<double>(c_)) + static_cast<double>(K_) * static_cast<double>(words_.size());
}

void UbcsCoder::restore(uint64_t c, std::vector<uint32_t> words) {
  if (c < (uint64_t{1} << M_) || c >= (uint64_t{1} << (K_ + M_))) {
    fail(ErrorCode::kCorruptStream, "coder state outside [2^M, 2^(K+M))");
  }
  for (uint32_t w : words) {
    if ((w & ~word_mask_) != 0) fail(ErrorCode::kCorruptStream, "coder word wider than K bits");
  }
  c_ = c;
  words_ = std::move(words);
  low_water_ = words_.size();
}

void UbcsCoder::push_word(uint32_t w) {
  if ((w & ~word_mask_) != 0) fail(ErrorCode::kParameter, "word wider than K bits");
  words_.push_back(w);
}

std::vector<uint8_t> UbcsCoder::serialize() const {
  const int wb = word_bytes(K_);
  std::vector<uint8_t> out;
  out.reserve(16 + words_.size() * static_cast<size_t>(wb));
  put_u64(out, words_.size());
  for (uint32_t w : words_) {
    for (int i = 0; i < wb; ++i) out.push_back(static_cast<uint8_t>(w >> (8 * i)));
  }
  put_u64(out, c_);
  return out;
}

UbcsCoder UbcsCoder::deserialize(std::span<const uint8_t> bytes, int K, int M) {
  UbcsCoder coder(K, M);
  const int wb = word_bytes(K);
  size_t pos = 0;
  const uint64_t n = get_u64(bytes, pos);
  if (n > (bytes.size() - pos) / static_cast<size_t>(wb)) {
    fail(ErrorCode::kCorruptStream, "coder payload word count exceeds data");
  }
  std::vector<uint32_t> words(n);
  for (uint64_t j = 0; j < n; ++j) {
    uint32_t w = 0;
    for (int i = 0; i < wb; ++i) w |= uint32_t{bytes[pos + i]} << (8 * i);
    words[j] = w;
    pos += static_cast<size_t>(wb);
  }
  const uint64_t c = get_u64(bytes, pos);
  if (pos != bytes.size()) fail(ErrorCode::kCorruptStream, "trailing bytes after coder payload");
  coder.restore(c, std::move(words));
  return coder;
}

RansUniformCoder::RansUniformCoder(int K) : K_(K) {
  if (K < 2 || K > 32) fail(ErrorCode::kParameter, "rANS word size K must be in [2, 32]");
  m_ = uint64_t{1} << K;
  x_ = m_;
}

void RansUniformCoder::bad_symbol(uint32_t s, uint32_t R) const {
  fail(ErrorCode::kParameter, "invalid uniform symbol s=" + std::to_string(s) + " R=" +
                                  std::to_string(R) + " for rANS K=" + std::to_string(K_));
}

uint64_t RansUniformCoder::codelength_bits() const {
  const uint64_t ceil_log = x_ <= 1 ? 0 : 64 - static_cast<uint64_t>(std::countl_zero(x_ - 1));
  return ceil_log + static_cast<uint64_t>(K_) * words_.size();
}

}  // namespace iflow
