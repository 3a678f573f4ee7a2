// Copyright 2026 The iflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "iflow/fixed_point.hpp"

#include <cmath>
#include <string>

#include "iflow/errors.hpp"

namespace iflow {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kParameter: return "parameter";
    case ErrorCode::kRange: return "range";
    case ErrorCode::kDomain: return "domain";
    case ErrorCode::kDegenerateScale: return "degenerate-scale";
    case ErrorCode::kCompressionFailure: return "compression-failure";
    case ErrorCode::kAuxUnderflow: return "aux-underflow";
    case ErrorCode::kInsufficientAuxBits: return "insufficient-aux-bits";
    case ErrorCode::kCorruptStream: return "corrupt-stream";
    case ErrorCode::kModel: return "model";
    case ErrorCode::kHashMismatch: return "hash-mismatch";
    case ErrorCode::kVersion: return "version";
    case ErrorCode::kIo: return "io";
  }
  return "unknown";
}

void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

double FixedPoint::value() const { return mantissa_to_double(mantissa, k); }

int64_t quantize_mantissa(double x, int k) {
  if (k < 0 || k > kMaxPrecisionBits) {
    fail(ErrorCode::kParameter, "precision k=" + std::to_string(k) + " outside [0, 32]");
  }
  if (!std::isfinite(x)) fail(ErrorCode::kRange, "cannot quantize a non-finite value");
  // Scaling by a power of two is exact, so the floor is the exact floor of 2^k x.
  const double scaled = std::floor(std::ldexp(x, k));
  if (!(scaled >= -0x1p63 && scaled < 0x1p63)) {
    fail(ErrorCode::kRange, "value " + std::to_string(x) + " overflows a 64-bit mantissa at k=" +
                                std::to_string(k));
  }
  return static_cast<int64_t>(scaled);
}

FixedPoint quantize(double x, int k) { return FixedPoint{quantize_mantissa(x, k), k}; }

void Precision::validate(int coder_bits) const {
  if (k < 1 || k > kMaxPrecisionBits) fail(ErrorCode::kParameter, "k must be in [1, 32]");
  if (h < 0 || h >= k) fail(ErrorCode::kParameter, "h must satisfy 0 <= h < k");
  if (S < 2) fail(ErrorCode::kParameter, "S must be at least 2");
  if (coder_bits < 64 && (uint64_t{S} >> coder_bits) != 0) {
    fail(ErrorCode::kParameter, "S must be below 2^K");
  }
  if (b < 1) fail(ErrorCode::kParameter, "b must be at least 1");
}

}  // namespace iflow
