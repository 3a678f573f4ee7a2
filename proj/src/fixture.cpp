// Copyright 2026 The iflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "iflow/fixture.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "iflow/elementwise.hpp"

namespace iflow {

using json = nlohmann::json;

json sweep_fixture_description(const Precision& p) {
  auto h = [](double v) { return encode_double(v); };
  json layers = json::array();
  layers.push_back({{"kind", "elementwise"},
                    {"fn", {{"type", "affine"}, {"scale", h(std::ldexp(1.0, kFixtureFlatSlopeLog2))}, {"shift", h(-1.0)}}},
                    {"strategy", "uniform_x"},
                    {"domain", json::array({h(0.0), h(256.0)})}});
  layers.push_back({{"kind", "elementwise"},
                    {"fn",
                     {{"type", "softstep"},
                      {"alpha", h(0.75)},
                      {"width", h(0.5)},
                      {"center", h(0.0)},
                      {"log_scale", h(0.0)},
                      {"shift", h(0.0)}}},
                    {"strategy", "uniform_z"},
                    {"domain", json::array({h(-2.0), h(2.0)})}});
  layers.push_back({{"kind", "conv1x1"},
                    {"weight", json::array({json::array({h(1.25), h(0.5), h(0.0)}),
                                            json::array({h(-0.25), h(1.5), h(0.25)}),
                                            json::array({h(0.5), h(0.0), h(1.75)})})}});
  layers.push_back({{"kind", "channel_scale"},
                    {"scale", json::array({h(1.5), h(1.25), h(1.75)})},
                    {"shift", json::array({h(0.125), h(-0.25), h(0.0)})}});
  return {{"format", "iflow-model"},
          {"version", kModelFormatVersion},
          {"shape", {3, 4, 4}},
          {"data_range", {0, 256}},
          {"precision", {{"k", p.k}, {"h", p.h}, {"S", p.S}, {"b", p.b}}},
          {"prior", {{"kind", "logistic"}, {"loc", h(0.0)}, {"scale", h(1.0)}, {"clamp", h(30.0)}}},
          {"dequantizer", {{"kind", "uniform"}}},
          {"layers", layers}};
}

std::vector<Sample> sweep_fixture_samples(size_t count, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Sample> out(count, Sample(48));
  for (auto& s : out) {
    // Smooth patches: a random level per channel plus mild texture.
    for (int c = 0; c < 3; ++c) {
      const int level = std::uniform_int_distribution<int>(40, 215)(rng);
      for (int e = 0; e < 16; ++e) {
        const int v = level + std::uniform_int_distribution<int>(-24, 24)(rng);
        s[static_cast<size_t>(c) * 16 + e] = std::clamp(v, 0, 255);
      }
    }
  }
  return out;
}

uint64_t flattest_cell_slope(const FlowModel& model) {
  uint64_t best = std::numeric_limits<uint64_t>::max();
  const uint64_t S = model.precision().S;
  for (const auto& layer : model.layers()) {
    const auto* ew = dynamic_cast<const ElementwiseLayer*>(layer.get());
    if (!ew) continue;
    const PiecewiseGrid& grid = ew->transform().grid();
    for (int64_t i = 0; i < grid.cell_count(); ++i) {
      const InterpInterval c = grid.cell(i);
      const int128 dx = static_cast<int128>(c.x_hi) - c.x_lo;
      const int128 dz = static_cast<int128>(c.z_hi) - c.z_lo;
      const int128 r = dz < 1 ? 0 : floor_div((dz - 1) * S + 1, dx);
      best = std::min<uint64_t>(best, r < 0 ? 0 : static_cast<uint64_t>(std::min<int128>(r, int128{1} << 62)));
    }
  }
  return best;
}

}  // namespace iflow
