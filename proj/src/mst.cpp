// Copyright 2026 The iflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "iflow/mst.hpp"

#include <cmath>
#include <cstddef>
#include <string>

#include "iflow/errors.hpp"

namespace iflow {

RationalScale approximate_scale(double a, uint32_t S, int K) {
  if (!(a > 0) || !std::isfinite(a)) {
    fail(ErrorCode::kDegenerateScale, "scale must be positive and finite, got " + std::to_string(a));
  }
  const double r = std::nearbyint(static_cast<double>(S) * a);
  if (r < 1) {
    fail(ErrorCode::kDegenerateScale,
         "scale " + std::to_string(a) + " rounds to R=0 at S=" + std::to_string(S));
  }
  if (r >= std::ldexp(1.0, K)) {
    fail(ErrorCode::kDegenerateScale,
         "scale " + std::to_string(a) + " needs R >= 2^" + std::to_string(K) + " at S=" + std::to_string(S));
  }
  return RationalScale{static_cast<uint32_t>(r), S};
}

int64_t mst_forward(int64_t x, RationalScale sc, UbcsCoder& aux) {
  const uint32_t r_d = aux.decode(sc.R);
  const MstPair out = mst_forward_kernel(x, r_d, sc);
  aux.encode(out.residue, sc.S);
  return out.value;
}

int64_t mst_inverse(int64_t z, RationalScale sc, UbcsCoder& aux) {
  const uint32_t r_e = aux.decode(sc.S);
  const MstPair out = mst_inverse_kernel(z, r_e, sc);
  aux.encode(out.residue, sc.R);
  return out.value;
}

FixedPoint mst_forward(FixedPoint x, const MstContext& ctx) {
  if (x.k != ctx.k) fail(ErrorCode::kParameter, "fixed-point precision mismatch");
  return FixedPoint{mst_forward(x.mantissa, ctx.scale, *ctx.aux), ctx.k};
}

FixedPoint mst_inverse(FixedPoint z, const MstContext& ctx) {
  if (z.k != ctx.k) fail(ErrorCode::kParameter, "fixed-point precision mismatch");
  return FixedPoint{mst_inverse(z.mantissa, ctx.scale, *ctx.aux), ctx.k};
}

namespace {

void check_sizes(std::span<int64_t> values, std::span<const ElementPlan> plans, int splits) {
  if (values.size() != plans.size()) fail(ErrorCode::kParameter, "MST batch size mismatch");
  if (splits < 1) fail(ErrorCode::kParameter, "MST batch needs at least one split");
}

}  // namespace

void mst_forward_batch(std::span<int64_t> values, std::span<const ElementPlan> plans, int splits,
                       UbcsCoder& aux) {
  check_sizes(values, plans, splits);
  const size_t n = values.size();
  const size_t b = static_cast<size_t>(splits);
  thread_local std::vector<uint32_t> residues;
  residues.resize(n);
  for (size_t g = 0; g < b && g < n; ++g) {
    for (size_t e = g; e < n; e += b) residues[e] = aux.decode(plans[e].scale.R);
    for (size_t e = g; e < n; e += b) {
      const ElementPlan& p = plans[e];
      const MstPair out = mst_forward_kernel(values[e] - p.in_offset, residues[e], p.scale);
      values[e] = p.out_offset + (p.negate ? -out.value : out.value);
      residues[e] = out.residue;
    }
    for (size_t e = g; e < n; e += b) aux.encode(residues[e], plans[e].scale.S);
  }
}

void mst_inverse_batch(std::span<int64_t> values, std::span<const ElementPlan> plans, int splits,
                       UbcsCoder& aux) {
  check_sizes(values, plans, splits);
  const size_t n = values.size();
  if (n == 0) return;
  const size_t b = static_cast<size_t>(splits);
  thread_local std::vector<uint32_t> residues;
  residues.resize(n);
  const size_t groups = b < n ? b : n;
  for (size_t g = groups; g-- > 0;) {
    // Last element of group g.
    const size_t last = g + ((n - 1 - g) / b) * b;
    const auto first = static_cast<ptrdiff_t>(g);
    const auto step = static_cast<ptrdiff_t>(b);
    for (auto e = static_cast<ptrdiff_t>(last); e >= first; e -= step) {
      residues[e] = aux.decode(plans[e].scale.S);
    }
    for (size_t e = g; e < n; e += b) {
      const ElementPlan& p = plans[e];
      const int64_t w = values[e] - p.out_offset;
      const MstPair out = mst_inverse_kernel(p.negate ? -w : w, residues[e], p.scale);
      values[e] = p.in_offset + out.value;
      residues[e] = out.residue;
    }
    for (auto e = static_cast<ptrdiff_t>(last); e >= first; e -= step) {
      aux.encode(residues[e], plans[e].scale.R);
    }
  }
}

}  // namespace iflow
