// Copyright 2026 The iflow Authors
// SPDX-License-Identifier: Apache-2.0

// The hyper-parameter sweep fixture: a small model whose flattest
// interpolation cell is known in closed form, plus synthetic data for it.
//
// The first layer is an elementwise affine map with slope exactly 2^-7 on a
// grid uniform in x, so every cell spans 2^(k-h) input and 2^(k-h-7) output
// units and the slope numerator vanishes exactly when k - h <= 7.

#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "iflow/codec.hpp"
#include "iflow/model.hpp"

namespace iflow {

inline constexpr int kFixtureFlatSlopeLog2 = -7;

nlohmann::json sweep_fixture_description(const Precision& precision);
std::vector<Sample> sweep_fixture_samples(size_t count, uint64_t seed);

// Smallest interp_slope numerator over every grid cell of every elementwise
// layer in the model (0 when some cell is too flat to code). Cells used by
// prior and dequantizer tails are excluded because they widen S on demand.
uint64_t flattest_cell_slope(const FlowModel& model);

}  // namespace iflow
