// Copyright 2026 The iflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "iflow/image_io.hpp"

#include <cctype>
#include <fstream>
#include <iterator>
#include <string>

#include "iflow/errors.hpp"

namespace iflow {

using json = nlohmann::json;

namespace {

std::vector<uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
  return std::vector<uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file(const std::filesystem::path& path, const std::vector<uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kIo, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::kIo, "failed writing " + path.string());
}

// Reads one header integer, skipping whitespace and comments.
int pnm_int(const std::vector<uint8_t>& b, size_t& pos) {
  while (pos < b.size()) {
    if (b[pos] == '#') {
      while (pos < b.size() && b[pos] != '\n') ++pos;
    } else if (std::isspace(b[pos])) {
      ++pos;
    } else {
      break;
    }
  }
  if (pos >= b.size() || !std::isdigit(b[pos])) fail(ErrorCode::kIo, "malformed PNM header");
  long v = 0;
  while (pos < b.size() && std::isdigit(b[pos])) {
    v = v * 10 + (b[pos++] - '0');
    if (v > 1 << 24) fail(ErrorCode::kIo, "PNM header value too large");
  }
  return static_cast<int>(v);
}

Image read_pnm(const std::vector<uint8_t>& b) {
  if (b.size() < 2 || b[0] != 'P' || (b[1] != '5' && b[1] != '6')) {
    fail(ErrorCode::kIo, "only binary PGM (P5) and PPM (P6) are supported");
  }
  Image img;
  img.format = Image::Format::kPnm;
  img.channels = b[1] == '5' ? 1 : 3;
  size_t pos = 2;
  img.width = pnm_int(b, pos);
  img.height = pnm_int(b, pos);
  img.maxval = pnm_int(b, pos);
  if (img.width < 1 || img.height < 1 || img.maxval < 1 || img.maxval > 65535) {
    fail(ErrorCode::kIo, "unsupported PNM dimensions or maxval");
  }
  if (pos >= b.size() || !std::isspace(b[pos])) fail(ErrorCode::kIo, "malformed PNM header");
  ++pos;
  img.header.assign(b.begin(), b.begin() + static_cast<ptrdiff_t>(pos));
  img.bytes_per_sample = img.maxval < 256 ? 1 : 2;
  const size_t plane = static_cast<size_t>(img.width) * img.height;
  const size_t n = plane * img.channels;
  if (b.size() - pos != n * img.bytes_per_sample) fail(ErrorCode::kIo, "PNM pixel data has the wrong size");
  img.data.resize(n);
  for (size_t i = 0; i < plane; ++i) {
    for (int c = 0; c < img.channels; ++c) {
      const size_t at = pos + (i * img.channels + c) * img.bytes_per_sample;
      const int32_t v = img.bytes_per_sample == 1 ? b[at] : (b[at] << 8) | b[at + 1];  // PNM is big-endian
      if (v > img.maxval) fail(ErrorCode::kIo, "PNM sample exceeds maxval");
      img.data[c * plane + i] = v;
    }
  }
  return img;
}

Image read_raw(const std::vector<uint8_t>& b, const std::filesystem::path& sidecar) {
  json j;
  try {
    std::ifstream in(sidecar);
    if (!in) fail(ErrorCode::kIo, "raw input needs a sidecar " + sidecar.string());
    j = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::kIo, std::string("bad raw sidecar: ") + e.what());
  }
  Image img;
  img.format = Image::Format::kRaw;
  try {
    const auto shape = j.at("shape").get<std::vector<int>>();
    if (shape.size() != 3) fail(ErrorCode::kIo, "sidecar shape must be [channels, height, width]");
    img.channels = shape[0];
    img.height = shape[1];
    img.width = shape[2];
    const std::string dtype = j.at("dtype").get<std::string>();
    if (dtype == "u8") img.bytes_per_sample = 1;
    else if (dtype == "u16") img.bytes_per_sample = 2;
    else fail(ErrorCode::kIo, "sidecar dtype must be u8 or u16");
  } catch (const json::exception& e) {
    fail(ErrorCode::kIo, std::string("bad raw sidecar: ") + e.what());
  }
  if (img.channels < 1 || img.height < 1 || img.width < 1) fail(ErrorCode::kIo, "sidecar shape must be positive");
  img.maxval = img.bytes_per_sample == 1 ? 255 : 65535;
  const size_t n = static_cast<size_t>(img.channels) * img.height * img.width;
  if (b.size() != n * img.bytes_per_sample) fail(ErrorCode::kIo, "raw file size does not match its sidecar");
  img.data.resize(n);
  for (size_t i = 0; i < n; ++i) {
    img.data[i] = img.bytes_per_sample == 1 ? b[i] : b[2 * i] | (b[2 * i + 1] << 8);  // little-endian planes
  }
  return img;
}

}  // namespace

json Image::describe() const {
  static const char* digits = "0123456789abcdef";
  std::string hex;
  for (uint8_t c : header) {
    hex.push_back(digits[c >> 4]);
    hex.push_back(digits[c & 15]);
  }
  return {{"format", format == Format::kPnm ? "pnm" : "raw"},
          {"shape", {channels, height, width}},
          {"bytes_per_sample", bytes_per_sample},
          {"maxval", maxval},
          {"header", hex}};
}

Image Image::from_description(const json& j) {
  Image img;
  try {
    img.format = j.at("format").get<std::string>() == "pnm" ? Format::kPnm : Format::kRaw;
    const auto shape = j.at("shape").get<std::vector<int>>();
    if (shape.size() != 3) fail(ErrorCode::kCorruptStream, "bad image description");
    img.channels = shape[0];
    img.height = shape[1];
    img.width = shape[2];
    img.bytes_per_sample = j.at("bytes_per_sample").get<int>();
    img.maxval = j.at("maxval").get<int>();
    const std::string hex = j.at("header").get<std::string>();
    if (hex.size() % 2) fail(ErrorCode::kCorruptStream, "bad image header");
    for (size_t i = 0; i < hex.size(); i += 2) {
      img.header.push_back(static_cast<uint8_t>(std::stoi(hex.substr(i, 2), nullptr, 16)));
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kCorruptStream, std::string("bad image description: ") + e.what());
  } catch (const std::invalid_argument&) {
    fail(ErrorCode::kCorruptStream, "bad image header");
  }
  if (img.channels < 1 || img.height < 1 || img.width < 1) fail(ErrorCode::kCorruptStream, "bad image shape");
  return img;
}

Image read_image(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  const std::string ext = path.extension().string();
  if (ext == ".raw" || ext == ".bin") {
    auto sidecar = path;
    sidecar += ".json";
    return read_raw(bytes, sidecar);
  }
  return read_pnm(bytes);
}

void write_image(const std::filesystem::path& path, const Image& img) {
  const size_t plane = static_cast<size_t>(img.width) * img.height;
  const size_t n = plane * img.channels;
  if (img.data.size() != n) fail(ErrorCode::kParameter, "image data size mismatch");
  std::vector<uint8_t> out;
  if (img.format == Image::Format::kPnm) {
    out = img.header;
    for (size_t i = 0; i < plane; ++i) {
      for (int c = 0; c < img.channels; ++c) {
        const int32_t v = img.data[c * plane + i];
        if (img.bytes_per_sample == 2) out.push_back(static_cast<uint8_t>(v >> 8));
        out.push_back(static_cast<uint8_t>(v));
      }
    }
  } else {
    for (size_t i = 0; i < n; ++i) {
      out.push_back(static_cast<uint8_t>(img.data[i]));
      if (img.bytes_per_sample == 2) out.push_back(static_cast<uint8_t>(img.data[i] >> 8));
    }
  }
  write_file(path, out);
}

std::vector<Sample> tile_image(const Image& img, const TensorShape& patch) {
  if (img.channels != patch.channels) {
    fail(ErrorCode::kParameter, "image has " + std::to_string(img.channels) + " channels, model expects " +
                                    std::to_string(patch.channels));
  }
  const int ty = (img.height + patch.height - 1) / patch.height;
  const int tx = (img.width + patch.width - 1) / patch.width;
  const size_t plane = static_cast<size_t>(img.width) * img.height;
  std::vector<Sample> out;
  for (int by = 0; by < ty; ++by) {
    for (int bx = 0; bx < tx; ++bx) {
      Sample s(patch.size());
      for (int c = 0; c < patch.channels; ++c) {
        for (int y = 0; y < patch.height; ++y) {
          const int sy = std::min(by * patch.height + y, img.height - 1);
          for (int x = 0; x < patch.width; ++x) {
            const int sx = std::min(bx * patch.width + x, img.width - 1);
            s[(static_cast<size_t>(c) * patch.height + y) * patch.width + x] =
                img.data[c * plane + static_cast<size_t>(sy) * img.width + sx];
          }
        }
      }
      out.push_back(std::move(s));
    }
  }
  return out;
}

void untile_image(std::span<const Sample> patches, const TensorShape& patch, Image& img) {
  const int ty = (img.height + patch.height - 1) / patch.height;
  const int tx = (img.width + patch.width - 1) / patch.width;
  if (patches.size() != static_cast<size_t>(ty) * tx) fail(ErrorCode::kCorruptStream, "patch count mismatch");
  const size_t plane = static_cast<size_t>(img.width) * img.height;
  img.data.assign(plane * img.channels, 0);
  for (int by = 0; by < ty; ++by) {
    for (int bx = 0; bx < tx; ++bx) {
      const Sample& s = patches[static_cast<size_t>(by) * tx + bx];
      for (int c = 0; c < patch.channels; ++c) {
        for (int y = 0; y < patch.height; ++y) {
          const int sy = by * patch.height + y;
          if (sy >= img.height) break;
          for (int x = 0; x < patch.width; ++x) {
            const int sx = bx * patch.width + x;
            if (sx >= img.width) break;
            img.data[c * plane + static_cast<size_t>(sy) * img.width + sx] =
                s[(static_cast<size_t>(c) * patch.height + y) * patch.width + x];
          }
        }
      }
    }
  }
}

}  // namespace iflow
