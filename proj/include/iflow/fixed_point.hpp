// Copyright 2026 The iflow Authors
// SPDX-License-Identifier: Apache-2.0

// k-precision fixed-point numbers: a value is stored as an integer mantissa m
// and represents m / 2^k. Quantization always rounds toward negative infinity.

#pragma once

#include <cstdint>

namespace iflow {

inline constexpr int kMaxPrecisionBits = 32;

using int128 = __int128;
using uint128 = unsigned __int128;

struct FixedPoint {
  int64_t mantissa = 0;
  int k = 0;

  double value() const;
  friend bool operator==(const FixedPoint&, const FixedPoint&) = default;
};

// floor(2^k * x) as a checked mantissa. Throws kRange for non-finite input or
// when the mantissa would not fit in 63 bits, kParameter for k outside [0, 32].
int64_t quantize_mantissa(double x, int k);
FixedPoint quantize(double x, int k);

inline int64_t to_integer(FixedPoint v) { return v.mantissa; }
inline FixedPoint from_integer(int64_t n, int k) { return FixedPoint{n, k}; }

inline double mantissa_to_double(int64_t m, int k) {
  return static_cast<double>(m) / static_cast<double>(int64_t{1} << k);
}

// Floored division and modulo (remainder has the sign of the divisor).
inline int128 floor_div(int128 a, int128 b) {
  int128 q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

inline int128 floor_mod(int128 a, int128 b) {
  int128 r = a % b;
  if (r != 0 && ((r < 0) != (b < 0))) r += b;
  return r;
}

// Hyper-parameters shared by every quantized layer.
//   k: fractional bits of every intermediate value
//   h: interpolation grid spacing is 2^-h in the uniform coordinate
//   S: MST denominator (scales are approximated by R / S)
//   b: number of sequential splits used when running an MST batch
struct Precision {
  int k = 28;
  int h = 12;
  uint32_t S = 1u << 16;
  int b = 4;

  void validate(int coder_bits = 32) const;
  friend bool operator==(const Precision&, const Precision&) = default;
};

}  // namespace iflow
