// Copyright 2026 The iflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "iflow/elementwise.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "iflow/errors.hpp"

namespace iflow {

std::string_view strategy_name(IntervalStrategy s) {
  switch (s) {
    case IntervalStrategy::kUniformX: return "uniform_x";
    case IntervalStrategy::kUniformZ: return "uniform_z";
    case IntervalStrategy::kBinarySearch: return "binary_search";
  }
  return "uniform_x";
}

IntervalStrategy parse_strategy(std::string_view name) {
  if (name == "uniform_x") return IntervalStrategy::kUniformX;
  if (name == "uniform_z") return IntervalStrategy::kUniformZ;
  if (name == "binary_search") return IntervalStrategy::kBinarySearch;
  fail(ErrorCode::kModel, "unknown interval strategy '" + std::string(name) + "'");
}

uint32_t interp_slope(const InterpInterval& cell, uint32_t S, int K) {
  const int128 dx = static_cast<int128>(cell.x_hi) - cell.x_lo;
  const int128 dz = static_cast<int128>(cell.z_hi) - cell.z_lo;
  if (dx < 1 || dz < 1) {
    fail(ErrorCode::kCompressionFailure,
         "interpolation cell " + std::to_string(cell.cell) + " is empty in one coordinate");
  }
  const int128 R = floor_div((dz - 1) * S + 1, dx);
  if (R < 1) {
    fail(ErrorCode::kCompressionFailure,
         "interpolation cell " + std::to_string(cell.cell) + " is too flat: R=0 (dx=" +
             std::to_string(static_cast<int64_t>(dx)) + ", dz=" + std::to_string(static_cast<int64_t>(dz)) +
             ", S=" + std::to_string(S) + "); increase k or decrease h");
  }
  if ((R >> K) != 0) {
    fail(ErrorCode::kDegenerateScale,
         "interpolation cell " + std::to_string(cell.cell) + " is too steep for 2^" + std::to_string(K) +
             "-bit coding; increase h or decrease S");
  }
  return static_cast<uint32_t>(R);
}

RationalScale cell_scale(const InterpInterval& cell, uint32_t S, bool escalate_end_cells, int K) {
  uint64_t s = S;
  if (escalate_end_cells && cell.end_cell) {
    // Merged tail cells can be much flatter than the interior; widen S by
    // powers of two until the slope numerator becomes positive.
    const int128 dx = static_cast<int128>(cell.x_hi) - cell.x_lo;
    const int128 dz = static_cast<int128>(cell.z_hi) - cell.z_lo;
    if (dx >= 1 && dz >= 2) {
      while ((dz - 1) * static_cast<int128>(s) + 1 < dx && ((s << 1) >> K) == 0) s <<= 1;
    }
  }
  return RationalScale{interp_slope(cell, static_cast<uint32_t>(s), K), static_cast<uint32_t>(s)};
}

PiecewiseGrid::PiecewiseGrid(const MonotoneFn& fn, int k, int h, IntervalStrategy strategy,
                             double x_lo, double x_hi)
    : fn_(&fn), k_(k), h_(h), strategy_(strategy) {
  if (!fn.increasing()) fail(ErrorCode::kParameter, "grid needs an increasing function");
  if (k < 1 || k > kMaxPrecisionBits || h < 0 || h >= k) {
    fail(ErrorCode::kParameter, "grid needs 0 <= h < k <= 32");
  }
  if (!(x_lo < x_hi) || x_lo < fn.domain_lo() || x_hi > fn.domain_hi()) {
    fail(ErrorCode::kDomain, "declared domain is empty or outside the function's natural domain");
  }
  step_ = int64_t{1} << (k - h);
  const int64_t xa = quantize_mantissa(x_lo, k);
  const int64_t xb = quantize_mantissa(x_hi, k);
  const int64_t za = quantize_mantissa(fn.eval(mantissa_to_double(xa, k)), k);
  const int64_t zb = quantize_mantissa(fn.eval(mantissa_to_double(xb, k)), k);
  if (uniform_is_x()) {
    u_min_ = xa; u_max_ = xb; p_min_ = za; p_max_ = zb;
  } else {
    u_min_ = za; u_max_ = zb; p_min_ = xa; p_max_ = xb;
  }
  if (u_max_ <= u_min_ || p_max_ <= p_min_) {
    fail(ErrorCode::kDomain, "declared domain collapses to a single fixed-point value");
  }
  j0_ = static_cast<int64_t>(floor_div(u_min_, step_)) + 1;
  const int64_t j_last = static_cast<int64_t>(-floor_div(-static_cast<int128>(u_max_), step_)) - 1;
  interior_ = std::max<int64_t>(0, j_last - j0_ + 1);
}

int64_t PiecewiseGrid::knot_u(int64_t i) const {
  if (i <= 0) return u_min_;
  if (i > interior_) return u_max_;
  return (j0_ + i - 1) * step_;
}

int64_t PiecewiseGrid::knot_p(int64_t i) const {
  if (i <= 0) return p_min_;
  if (i > interior_) return p_max_;
  const double u = mantissa_to_double(knot_u(i), k_);
  const double p = uniform_is_x() ? fn_->eval(u) : fn_->eval_inverse(u);
  return std::clamp(quantize_mantissa(p, k_), p_min_, p_max_);
}

InterpInterval PiecewiseGrid::make(int64_t i) const {
  const int64_t u0 = knot_u(i), u1 = knot_u(i + 1);
  const int64_t p0 = knot_p(i), p1 = knot_p(i + 1);
  InterpInterval c;
  if (uniform_is_x()) {
    c.x_lo = u0; c.x_hi = u1; c.z_lo = p0; c.z_hi = p1;
  } else {
    c.x_lo = p0; c.x_hi = p1; c.z_lo = u0; c.z_hi = u1;
  }
  c.cell = i;
  c.end_cell = i == 0 || i == interior_;
  return c;
}

InterpInterval PiecewiseGrid::cell(int64_t i) const {
  if (i < 0 || i > interior_) fail(ErrorCode::kParameter, "cell index out of range");
  return make(i);
}

int64_t PiecewiseGrid::cell_for_u(int64_t u) const {
  if (u < u_min_ || u >= u_max_) {
    fail(ErrorCode::kDomain, "value " + std::to_string(mantissa_to_double(u, k_)) +
                                 " outside the declared domain of an elementwise flow");
  }
  const int64_t i = static_cast<int64_t>(floor_div(u, step_)) - j0_ + 1;
  return std::clamp<int64_t>(i, 0, interior_);
}

int64_t PiecewiseGrid::search_p(int64_t p) const {
  // Largest i in [0, interior_] with knot_p(i) <= p.
  int64_t lo = 0, hi = interior_ + 1;
  while (hi - lo > 1) {
    const int64_t mid = lo + (hi - lo) / 2;
    if (knot_p(mid) <= p) lo = mid; else hi = mid;
  }
  return lo;
}

int64_t PiecewiseGrid::cell_for_p(int64_t p) const {
  if (p < p_min_ || p >= p_max_) {
    fail(ErrorCode::kDomain, "value " + std::to_string(mantissa_to_double(p, k_)) +
                                 " outside the range of an elementwise flow");
  }
  if (strategy_ == IntervalStrategy::kBinarySearch) return search_p(p);
  // Map back to the uniform coordinate, snap to the nearest knot, and decide
  // on which side of it p lies. Floating-point error can only move the guess
  // by one knot; anything unexpected falls back to the search.
  const double pv = mantissa_to_double(p, k_);
  const double u = uniform_is_x() ? fn_->eval_inverse(pv) : fn_->eval(pv);
  const double scaled = std::ldexp(u, h_);
  if (std::isfinite(scaled) && std::fabs(scaled) < 0x1p60) {
    const int64_t m = std::llround(scaled);
    const int64_t i = m - j0_ + 1;
    int64_t c;
    if (i <= 0) {
      c = 0;
    } else if (i > interior_) {
      c = interior_;
    } else {
      c = p < knot_p(i) ? i - 1 : i;
    }
    if (knot_p(c) <= p && p < knot_p(c + 1)) return c;
  }
  return search_p(p);
}

InterpInterval PiecewiseGrid::locate_x(int64_t x) const {
  return make(uniform_is_x() ? cell_for_u(x) : cell_for_p(x));
}

InterpInterval PiecewiseGrid::locate_z(int64_t z) const {
  return make(uniform_is_x() ? cell_for_p(z) : cell_for_u(z));
}

ElementPlan plan_from_cell(const InterpInterval& cell, uint32_t S, bool negate, bool escalate, int K) {
  ElementPlan p;
  p.in_offset = cell.x_lo;
  p.out_offset = negate ? -cell.z_lo : cell.z_lo;
  p.scale = cell_scale(cell, S, escalate, K);
  p.negate = negate;
  return p;
}

ElementwiseTransform::ElementwiseTransform(std::unique_ptr<MonotoneFn> fn, const Precision& precision,
                                           IntervalStrategy strategy, double x_lo, double x_hi,
                                           bool escalate_end_cells, int K)
    : fn_(std::move(fn)), precision_(precision), escalate_(escalate_end_cells), K_(K) {
  precision_.validate(K);
  negated_ = !fn_->increasing();
  const MonotoneFn* base = fn_.get();
  if (negated_) {
    negated_fn_ = std::make_unique<NegatedFn>(*fn_);
    base = negated_fn_.get();
  }
  grid_ = std::make_unique<PiecewiseGrid>(*base, precision_.k, precision_.h, strategy, x_lo, x_hi);
}

ElementPlan ElementwiseTransform::plan_forward(int64_t x) const {
  return plan_from_cell(grid_->locate_x(x), precision_.S, negated_, escalate_, K_);
}

ElementPlan ElementwiseTransform::plan_inverse(int64_t z) const {
  return plan_from_cell(grid_->locate_z(negated_ ? -z : z), precision_.S, negated_, escalate_, K_);
}

int64_t ElementwiseTransform::forward(int64_t x, UbcsCoder& aux) const {
  const ElementPlan p = plan_forward(x);
  int64_t v = x;
  mst_forward_batch(std::span<int64_t>(&v, 1), std::span<const ElementPlan>(&p, 1), 1, aux);
  return v;
}

int64_t ElementwiseTransform::inverse(int64_t z, UbcsCoder& aux) const {
  const ElementPlan p = plan_inverse(z);
  int64_t v = z;
  mst_inverse_batch(std::span<int64_t>(&v, 1), std::span<const ElementPlan>(&p, 1), 1, aux);
  return v;
}

int64_t ElementwiseTransform::z_begin() const {
  return negated_ ? -grid_->z_end() + 1 : grid_->z_begin();
}

int64_t ElementwiseTransform::z_end() const {
  return negated_ ? -grid_->z_begin() + 1 : grid_->z_end();
}

}  // namespace iflow
