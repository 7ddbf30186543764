// Copyright 2026 The BoxLens Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <png.h>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "boxlens/error.hpp"
#include "boxlens/image.hpp"

namespace boxlens {

/// [0,1] sample to byte, round half up.
inline std::uint8_t to_byte(float v) noexcept {
  const double scaled = std::floor(static_cast<double>(v) * 255.0 + 0.5);
  return static_cast<std::uint8_t>(scaled < 0.0 ? 0.0 : (scaled > 255.0 ? 255.0 : scaled));
}

inline float from_byte(std::uint8_t b) noexcept { return static_cast<float>(b) / 255.0f; }

/// Loads an 8-bit PNG. Gray (with or without alpha) stays single-channel,
/// everything else becomes RGB; alpha is discarded.
inline ImageRaster read_png(const std::string& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw InvalidArgument("cannot read PNG '" + path + "': " + image.message);
  }
  const bool gray = (image.format & PNG_FORMAT_FLAG_COLOR) == 0;
  image.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  const int channels = gray ? 1 : 3;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw InvalidArgument("cannot decode PNG '" + path + "': " + msg);
  }
  std::vector<float> data(buf.size());
  for (std::size_t i = 0; i < buf.size(); ++i) data[i] = from_byte(buf[i]);
  return ImageRaster(static_cast<int>(image.width), static_cast<int>(image.height), channels,
                     std::move(data));
}

inline void write_png(const std::string& path, const ImageRaster& img) {
  if (img.empty()) throw InvalidArgument("write_png: empty image");
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width());
  image.height = static_cast<png_uint_32>(img.height());
  image.format = img.channels() == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buf(img.data().size());
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = to_byte(img.data()[i]);
  if (!png_image_write_to_file(&image, path.c_str(), 0, buf.data(), 0, nullptr)) {
    throw Error("cannot write PNG '" + path + "': " + image.message);
  }
}

}  // namespace boxlens
