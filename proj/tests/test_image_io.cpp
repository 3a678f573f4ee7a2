// Copyright 2026 The iflow Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "iflow/errors.hpp"
#include "iflow/image_io.hpp"

using namespace iflow;
namespace fs = std::filesystem;

namespace {

fs::path write_bytes(const std::string& name, const std::string& bytes) {
  const auto path = fs::temp_directory_path() / name;
  std::ofstream(path, std::ios::binary) << bytes;
  return path;
}

std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), {});
}

}  // namespace

TEST_CASE("pgm and ppm round trip byte for byte") {
  std::string ppm = "P6\n# comment\n3 2\n255\n";
  for (int i = 0; i < 18; ++i) ppm.push_back(static_cast<char>(i * 13));
  const auto in = write_bytes("iflow_test.ppm", ppm);
  const Image img = read_image(in);
  CHECK(img.channels == 3);
  CHECK(img.width == 3);
  CHECK(img.height == 2);
  CHECK(img.data[0] == 0);       // R of pixel 0
  CHECK(img.data[6] == 13);      // G of pixel 0
  CHECK(img.data[12] == 26);     // B of pixel 0
  const auto out = fs::temp_directory_path() / "iflow_test_out.ppm";
  write_image(out, img);
  CHECK(read_bytes(out) == ppm);
  Image again = Image::from_description(img.describe());
  again.data = img.data;
  write_image(out, again);
  CHECK(read_bytes(out) == ppm);

  std::string pgm16 = "P5 2 1 1000\n";
  pgm16 += std::string("\x03\xe7\x01\x02", 4);
  const Image deep = read_image(write_bytes("iflow_test.pgm", pgm16));
  CHECK(deep.bytes_per_sample == 2);
  CHECK(deep.data == std::vector<int32_t>{999, 258});
  write_image(out, deep);
  CHECK(read_bytes(out) == pgm16);
}

TEST_CASE("raw planes with a sidecar") {
  const auto path = write_bytes("iflow_test.raw", std::string("\x01\x00\x02\x01", 4));
  std::ofstream(fs::path(path.string() + ".json")) << R"({"shape": [1, 1, 2], "dtype": "u16"})";
  const Image img = read_image(path);
  CHECK(img.data == std::vector<int32_t>{1, 258});
  CHECK(img.maxval == 65535);
  fs::remove(fs::path(path.string() + ".json"));
  CHECK_THROWS_AS(read_image(path), Error);
}

TEST_CASE("malformed images are rejected") {
  CHECK_THROWS_AS(read_image(write_bytes("iflow_bad1.pgm", "P2 1 1 255\n0")), Error);
  CHECK_THROWS_AS(read_image(write_bytes("iflow_bad2.pgm", "P5 2 2 255\nab")), Error);
  CHECK_THROWS_AS(read_image(write_bytes("iflow_bad3.pgm", "P5 1 1 100\n\xff")), Error);
  CHECK_THROWS_AS(read_image("/nonexistent.pgm"), Error);
}

TEST_CASE("tiling covers the image and inverts") {
  std::mt19937 rng(1);
  Image img;
  img.channels = 2;
  img.height = 7;
  img.width = 5;
  img.data.resize(70);
  for (auto& v : img.data) v = static_cast<int32_t>(rng() % 256);
  const TensorShape patch{2, 3, 2};
  const auto tiles = tile_image(img, patch);
  CHECK(tiles.size() == 9);
  // Edge replication in the last tile row.
  CHECK(tiles.back()[patch.plane() - 1] == img.data[6 * 5 + 4]);
  Image back = img;
  back.data.clear();
  untile_image(tiles, patch, back);
  CHECK(back.data == img.data);
  CHECK_THROWS_AS(tile_image(img, TensorShape{3, 2, 2}), Error);
}
