// Copyright 2026 The BoxLens Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

// Saliency file layout, all integers little-endian:
//   bytes 0..3   magic "SALM"
//   bytes 4..5   u16 version (1)
//   bytes 6..9   u32 width
//   bytes 10..13 u32 height
//   then width*height IEEE-754 binary32 values, row-major.

#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "boxlens/error.hpp"
#include "boxlens/saliency_map.hpp"

namespace boxlens {

inline constexpr std::uint16_t kSaliencyFileVersion = 1;
inline constexpr std::size_t kSaliencyHeaderSize = 14;

namespace detail {
template <typename T>
void put_le(std::string& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
template <typename T>
T get_le(const std::string& in, std::size_t at) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    v |= static_cast<T>(static_cast<T>(static_cast<unsigned char>(in[at + i])) << (8 * i));
  }
  return v;
}
}  // namespace detail

inline std::string encode_saliency(const SaliencyMap& map) {
  std::string out = "SALM";
  out.reserve(kSaliencyHeaderSize + 4 * map.pixel_count());
  detail::put_le<std::uint16_t>(out, kSaliencyFileVersion);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(map.width()));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(map.height()));
  for (float v : map.values()) detail::put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

inline SaliencyMap decode_saliency(const std::string& bytes) {
  if (bytes.size() < kSaliencyHeaderSize || bytes.compare(0, 4, "SALM") != 0) {
    throw InvalidArgument("not a saliency file (bad magic)");
  }
  const auto version = detail::get_le<std::uint16_t>(bytes, 4);
  if (version != kSaliencyFileVersion) {
    throw InvalidArgument("unsupported saliency file version " + std::to_string(version));
  }
  const auto w = detail::get_le<std::uint32_t>(bytes, 6);
  const auto h = detail::get_le<std::uint32_t>(bytes, 10);
  const std::uint64_t n = static_cast<std::uint64_t>(w) * h;
  if (w == 0 || h == 0 || bytes.size() != kSaliencyHeaderSize + 4 * n) {
    throw InvalidArgument("saliency file payload does not match its dimensions");
  }
  std::vector<float> values(n);
  for (std::size_t i = 0; i < n; ++i) {
    values[i] = std::bit_cast<float>(detail::get_le<std::uint32_t>(bytes, kSaliencyHeaderSize + 4 * i));
    if (!std::isfinite(values[i])) throw InvalidArgument("saliency file contains a non-finite value");
  }
  return SaliencyMap(static_cast<int>(w), static_cast<int>(h), std::move(values));
}

inline void write_saliency_file(const std::string& path, const SaliencyMap& map) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  const std::string bytes = encode_saliency(map);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing '" + path + "'");
}

inline SaliencyMap read_saliency_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open saliency file '" + path + "'");
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_saliency(bytes);
}

}  // namespace boxlens
