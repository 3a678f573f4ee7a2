// Copyright 2026 The iflow Authors
// SPDX-License-Identifier: Apache-2.0

// Stack (LIFO) entropy coders for uniform distributions U(0, R).
//
// UbcsCoder keeps a state c in [2^M, 2^(K+M)) plus a stack of K-bit words.
// Encoding s ~ U(0, R) computes c = c R + s and flushes the low K bits once c
// reaches 2^(K+M); decoding refills first and then takes c mod R.
//
// RansUniformCoder is a conventional rANS coder with frequency total 2^K whose
// uniform PMF/CDF and inverse CDF are evaluated in closed form. It exists as a
// benchmark baseline.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "iflow/errors.hpp"
#include "iflow/fixed_point.hpp"

namespace iflow {

class UbcsCoder {
 public:
  explicit UbcsCoder(int K = 32, int M = 4);

  int K() const { return K_; }
  int M() const { return M_; }

  void encode(uint32_t s, uint32_t R) {
    if (R == 0 || s >= R || (uint64_t{R} >> K_) != 0) bad_symbol(s, R);
    const uint128 c = static_cast<uint128>(c_) * R + s;
    if (c >= upper_) {
      words_.push_back(static_cast<uint32_t>(c) & word_mask_);
      c_ = static_cast<uint64_t>(c >> K_);
    } else {
      c_ = static_cast<uint64_t>(c);
    }
  }

  uint32_t decode(uint32_t R) {
    if (R == 0 || (uint64_t{R} >> K_) != 0) bad_symbol(0, R);
    if (c_ < (uint64_t{R} << M_)) {
      if (words_.empty()) underflow();
      const uint64_t w = words_.back();
      words_.pop_back();
      if (words_.size() < low_water_) low_water_ = words_.size();
      // c' = c 2^K + w with c = q R + r, so c' = q R 2^K + (r 2^K + w) and the
      // second term fits in 64 bits because r < R < 2^K.
      const uint64_t q = c_ / R;
      const uint64_t r = c_ % R;
      const uint64_t t = (r << K_) | w;
      c_ = (q << K_) + t / R;
      return static_cast<uint32_t>(t % R);
    }
    const uint32_t s = static_cast<uint32_t>(c_ % R);
    c_ /= R;
    return s;
  }

  // Encodes / decodes a value uniform on [0, 2^bits) for any bits <= 64 by
  // splitting it into chunks narrower than the coder word.
  void encode_bits(uint64_t value, int bits);
  uint64_t decode_bits(int bits);

  // Uniform on [0, width) for width < 2^(2K); used for wide mantissa ranges.
  void encode_wide(uint64_t value, uint64_t width);
  uint64_t decode_wide(uint64_t width);

  uint64_t state() const { return c_; }
  const std::vector<uint32_t>& words() const { return words_; }
  size_t size_words() const { return words_.size(); }

  // ceil(log2 c) + K * len(words); integer code length of the current state.
  uint64_t codelength_bits() const;
  // log2 c + K * len(words); used for fractional per-layer accounting.
  double information_bits() const;

  // Lowest stack depth observed since the last reset (tracks refills).
  size_t low_water() const { return low_water_; }
  void reset_low_water() { low_water_ = words_.size(); }

  // Replaces the whole state. Throws kCorruptStream if c is out of range.
  void restore(uint64_t c, std::vector<uint32_t> words);
  void push_word(uint32_t w);

  // Little-endian: u64 word count, words of ceil(K/8) bytes, u64 state.
  std::vector<uint8_t> serialize() const;
  static UbcsCoder deserialize(std::span<const uint8_t> bytes, int K = 32, int M = 4);

  friend bool operator==(const UbcsCoder& a, const UbcsCoder& b) {
    return a.K_ == b.K_ && a.M_ == b.M_ && a.c_ == b.c_ && a.words_ == b.words_;
  }

 private:
  [[noreturn]] void bad_symbol(uint32_t s, uint32_t R) const;
  [[noreturn]] void underflow() const;

  int K_;
  int M_;
  uint128 upper_;
  uint32_t word_mask_;
  uint64_t c_;
  std::vector<uint32_t> words_;
  size_t low_water_ = 0;
};

class RansUniformCoder {
 public:
  explicit RansUniformCoder(int K = 32);

  void encode(uint32_t s, uint32_t R) {
    if (R == 0 || s >= R || (uint64_t{R} >> K_) != 0) bad_symbol(s, R);
    const uint64_t l = m_ / R;
    const uint64_t ls = (s + 1 == R) ? m_ - uint64_t{R - 1} * l : l;
    const uint64_t bs = l * s;
    if ((x_ >> K_) >= ls) {
      words_.push_back(static_cast<uint32_t>(x_ & (m_ - 1)));
      x_ >>= K_;
    }
    x_ = ((x_ / ls) << K_) + x_ % ls + bs;
  }

  uint32_t decode(uint32_t R) {
    if (R == 0 || (uint64_t{R} >> K_) != 0) bad_symbol(0, R);
    const uint64_t l = m_ / R;
    const uint64_t b = x_ & (m_ - 1);
    uint64_t s = b / l;
    if (s > R - 1) s = R - 1;
    const uint64_t ls = (s + 1 == R) ? m_ - uint64_t{R - 1} * l : l;
    x_ = ls * (x_ >> K_) + b - l * s;
    if (x_ < m_) {
      if (words_.empty()) fail(ErrorCode::kAuxUnderflow, "rANS stream exhausted");
      x_ = (x_ << K_) | words_.back();
      words_.pop_back();
    }
    return static_cast<uint32_t>(s);
  }

  uint64_t state() const { return x_; }
  const std::vector<uint32_t>& words() const { return words_; }
  uint64_t codelength_bits() const;

  friend bool operator==(const RansUniformCoder& a, const RansUniformCoder& b) {
    return a.K_ == b.K_ && a.x_ == b.x_ && a.words_ == b.words_;
  }

 private:
  [[noreturn]] void bad_symbol(uint32_t s, uint32_t R) const;

  int K_;
  uint64_t m_;
  uint64_t x_;
  std::vector<uint32_t> words_;
};

}  // namespace iflow
