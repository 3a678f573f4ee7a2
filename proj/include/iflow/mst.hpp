// Copyright 2026 The iflow Authors
// SPDX-License-Identifier: Apache-2.0

// Modular scale transform: an exactly invertible map between k-precision
// mantissas that scales by approximately R / S. The residues r_d ~ U(0, R) and
// r_e ~ U(0, S) are exchanged with an auxiliary UBCS stream, so the forward
// map costs log2(S) - log2(R) bits of stream growth.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "iflow/fixed_point.hpp"
#include "iflow/ubcs.hpp"

namespace iflow {

struct RationalScale {
  uint32_t R = 1;
  uint32_t S = 1;

  double ratio() const { return static_cast<double>(R) / static_cast<double>(S); }
  friend bool operator==(const RationalScale&, const RationalScale&) = default;
};

// R = round(S * a). Throws kDegenerateScale if R would be 0 or reach 2^K.
RationalScale approximate_scale(double a, uint32_t S, int K = 32);

// Integer kernels. forward: (x, r_d) -> (z, r_e); inverse undoes it exactly.
struct MstPair {
  int64_t value;
  uint32_t residue;
};

inline MstPair mst_forward_kernel(int64_t x, uint32_t r_d, RationalScale sc) {
  const int128 y = static_cast<int128>(x) * sc.R + r_d;
  return {static_cast<int64_t>(floor_div(y, sc.S)), static_cast<uint32_t>(floor_mod(y, sc.S))};
}

inline MstPair mst_inverse_kernel(int64_t z, uint32_t r_e, RationalScale sc) {
  const int128 y = static_cast<int128>(z) * sc.S + r_e;
  return {static_cast<int64_t>(floor_div(y, sc.R)), static_cast<uint32_t>(floor_mod(y, sc.R))};
}

// Single-element transforms on mantissas.
int64_t mst_forward(int64_t x, RationalScale sc, UbcsCoder& aux);
int64_t mst_inverse(int64_t z, RationalScale sc, UbcsCoder& aux);

struct MstContext {
  RationalScale scale;
  int k = 0;
  UbcsCoder* aux = nullptr;
};

FixedPoint mst_forward(FixedPoint x, const MstContext& ctx);
FixedPoint mst_inverse(FixedPoint z, const MstContext& ctx);

// Per-element affine placement around an MST:
//   forward  z = out_offset + sign * MST(x - in_offset)
//   inverse  x = in_offset + MST^-1(sign * (z - out_offset))
// Elementwise flows use (in_offset, out_offset) = cell corners; a negative
// scale is expressed through sign = -1.
struct ElementPlan {
  int64_t in_offset = 0;
  int64_t out_offset = 0;
  RationalScale scale;
  bool negate = false;
};

// Runs a batch of MSTs split into `splits` interleaved groups (element e is in
// group e mod splits). Groups run one after another on the same stream; inside
// a group all r_d are decoded before any r_e is encoded, so the stream only has
// to supply one group's worth of bits up front. The inverse visits groups and
// elements in the exact reverse order.
void mst_forward_batch(std::span<int64_t> values, std::span<const ElementPlan> plans, int splits,
                       UbcsCoder& aux);
void mst_inverse_batch(std::span<int64_t> values, std::span<const ElementPlan> plans, int splits,
                       UbcsCoder& aux);

}  // namespace iflow
