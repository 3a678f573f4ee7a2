// Copyright 2026 The iflow Authors
// SPDX-License-Identifier: Apache-2.0

// Exactly invertible piecewise-linear approximation of a monotone function.
//
// Knots lie on a grid of spacing 2^-h in one coordinate (the "uniform" one)
// and at the quantized function value in the other. A value is mapped by
// locating its cell, shifting it to the cell origin and running an MST whose
// slope R / S is chosen so the image always stays inside the cell.

#pragma once

#include <cstdint>
#include <memory>
#include <string_view>

#include "iflow/fixed_point.hpp"
#include "iflow/monotone.hpp"
#include "iflow/mst.hpp"

namespace iflow {

enum class IntervalStrategy {
  kUniformX,      // grid uniform in x; z-side lookup by the midpoint trick
  kUniformZ,      // grid uniform in z; x-side lookup by the midpoint trick
  kBinarySearch,  // grid uniform in x; z-side lookup by binary search
};

std::string_view strategy_name(IntervalStrategy s);
IntervalStrategy parse_strategy(std::string_view name);

// Cell [x_lo, x_hi) x [z_lo, z_hi) in mantissas.
struct InterpInterval {
  int64_t x_lo = 0;
  int64_t x_hi = 0;
  int64_t z_lo = 0;
  int64_t z_hi = 0;
  int64_t cell = 0;
  bool end_cell = false;
};

// R = floor(((dz - 1) S + 1) / dx), the largest slope numerator that keeps
// MST images inside the cell. Throws kCompressionFailure when R < 1 and
// kDegenerateScale when R >= 2^K.
uint32_t interp_slope(const InterpInterval& cell, uint32_t S, int K = 32);

// interp_slope with S, optionally doubled (end cells only) until R >= 1.
RationalScale cell_scale(const InterpInterval& cell, uint32_t S, bool escalate_end_cells, int K = 32);

// x -> -f(x), used to run decreasing functions through an increasing grid.
class NegatedFn final : public MonotoneFn {
 public:
  explicit NegatedFn(const MonotoneFn& inner) : inner_(&inner) {}
  std::string_view type() const override { return inner_->type(); }
  double eval(double x) const override { return -inner_->eval(x); }
  double eval_inverse(double z) const override { return inner_->eval_inverse(-z); }
  double derivative(double x) const override { return -inner_->derivative(x); }
  double log2_derivative(double x) const override { return inner_->log2_derivative(x); }
  bool increasing() const override { return !inner_->increasing(); }
  double domain_lo() const override { return inner_->domain_lo(); }
  double domain_hi() const override { return inner_->domain_hi(); }
  nlohmann::json to_json() const override { return inner_->to_json(); }
  std::unique_ptr<MonotoneFn> clone() const override { return std::make_unique<NegatedFn>(*this); }

 private:
  const MonotoneFn* inner_;
};

class PiecewiseGrid {
 public:
  // `fn` must be increasing and outlive the grid. [x_lo, x_hi) is the declared
  // domain; it must lie inside the natural domain of fn.
  PiecewiseGrid(const MonotoneFn& fn, int k, int h, IntervalStrategy strategy, double x_lo,
                double x_hi);

  // Throws kDomain if the value lies outside the grid.
  InterpInterval locate_x(int64_t x) const;
  InterpInterval locate_z(int64_t z) const;

  int64_t cell_count() const { return interior_ + 1; }
  InterpInterval cell(int64_t i) const;

  int64_t x_begin() const { return uniform_is_x() ? u_min_ : p_min_; }
  int64_t x_end() const { return uniform_is_x() ? u_max_ : p_max_; }
  int64_t z_begin() const { return uniform_is_x() ? p_min_ : u_min_; }
  int64_t z_end() const { return uniform_is_x() ? p_max_ : u_max_; }
  IntervalStrategy strategy() const { return strategy_; }

 private:
  bool uniform_is_x() const { return strategy_ != IntervalStrategy::kUniformZ; }
  int64_t knot_u(int64_t i) const;
  int64_t knot_p(int64_t i) const;
  int64_t cell_for_u(int64_t u) const;
  int64_t cell_for_p(int64_t p) const;
  int64_t search_p(int64_t p) const;
  InterpInterval make(int64_t i) const;

  const MonotoneFn* fn_;
  int k_, h_;
  IntervalStrategy strategy_;
  int64_t step_;
  int64_t u_min_, u_max_, p_min_, p_max_;
  int64_t j0_;        // grid index of the first interior knot
  int64_t interior_;  // number of interior knots
};

// A monotone function bound to a grid: the building block of elementwise layers.
class ElementwiseTransform {
 public:
  ElementwiseTransform(std::unique_ptr<MonotoneFn> fn, const Precision& precision,
                       IntervalStrategy strategy, double x_lo, double x_hi,
                       bool escalate_end_cells = false, int K = 32);

  ElementPlan plan_forward(int64_t x) const;
  ElementPlan plan_inverse(int64_t z) const;

  int64_t forward(int64_t x, UbcsCoder& aux) const;
  int64_t inverse(int64_t z, UbcsCoder& aux) const;

  const MonotoneFn& fn() const { return *fn_; }
  const PiecewiseGrid& grid() const { return *grid_; }
  bool negated() const { return negated_; }
  // Output range [z_begin, z_end) in output coordinates.
  int64_t z_begin() const;
  int64_t z_end() const;

 private:
  std::unique_ptr<MonotoneFn> fn_;
  std::unique_ptr<NegatedFn> negated_fn_;
  std::unique_ptr<PiecewiseGrid> grid_;
  Precision precision_;
  bool negated_;
  bool escalate_;
  int K_;
};

// Plans for a grid used directly (per-element conditioned functions).
ElementPlan plan_from_cell(const InterpInterval& cell, uint32_t S, bool negate, bool escalate,
                           int K = 32);

}  // namespace iflow
