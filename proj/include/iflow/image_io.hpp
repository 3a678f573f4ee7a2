// Copyright 2026 The iflow Authors
// SPDX-License-Identifier: Apache-2.0

// Image input/output for the command-line tool: binary PGM/PPM, and raw
// little-endian u8/u16 planes described by a JSON sidecar.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "iflow/codec.hpp"
#include "iflow/layers.hpp"

namespace iflow {

struct Image {
  enum class Format { kPnm, kRaw };
  Format format = Format::kPnm;
  int channels = 1;
  int height = 0;
  int width = 0;
  int bytes_per_sample = 1;
  int maxval = 255;
  std::vector<int32_t> data;    // channel-major (C, H, W)
  std::vector<uint8_t> header;  // original PNM header bytes, reproduced verbatim

  nlohmann::json describe() const;  // everything except pixel data
  static Image from_description(const nlohmann::json& j);
};

Image read_image(const std::filesystem::path& path);
void write_image(const std::filesystem::path& path, const Image& image);

// Splits an image into model-shaped patches in raster order, replicating edge
// pixels to fill partial patches. The image must have the model's channels.
std::vector<Sample> tile_image(const Image& image, const TensorShape& patch);
// Inverse of tile_image; `image` supplies the geometry and receives pixels.
void untile_image(std::span<const Sample> patches, const TensorShape& patch, Image& image);

}  // namespace iflow
