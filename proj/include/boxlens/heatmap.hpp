// Copyright 2026 The BoxLens Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "boxlens/error.hpp"
#include "boxlens/image.hpp"
#include "boxlens/log.hpp"
#include "boxlens/saliency_map.hpp"

namespace boxlens {

inline constexpr int kHeatmapLutVersion = 1;

using Rgb = std::array<float, 3>;

/// LUT version 1: 256 entries, blue -> green over the lower half and
/// green -> red over the upper half.
inline const std::array<Rgb, 256>& heatmap_lut() {
  static const std::array<Rgb, 256> lut = [] {
    std::array<Rgb, 256> t{};
    for (int i = 0; i < 256; ++i) {
      const float x = static_cast<float>(i) / 255.0f;
      if (x < 0.5f) {
        t[static_cast<std::size_t>(i)] = {0.0f, 2.0f * x, 1.0f - 2.0f * x};
      } else {
        t[static_cast<std::size_t>(i)] = {2.0f * x - 1.0f, 2.0f - 2.0f * x, 0.0f};
      }
    }
    return t;
  }();
  return lut;
}

struct Heatmap {
  ImageRaster image;                     // RGB overlay
  std::vector<std::uint8_t> lut_index;   // per pixel
  bool degenerate = false;               // constant map
};

/// Min-max normalizes the map, looks each pixel up in the LUT and
/// alpha-blends the color over the base image. A constant map renders as
/// the middle LUT entry everywhere.
inline Heatmap render_heatmap(const SaliencyMap& map, const ImageRaster& base, double alpha) {
  if (map.width() != base.width() || map.height() != base.height()) {
    throw InvalidArgument("render_heatmap: map and base image sizes differ");
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidArgument("render_heatmap: alpha out of [0,1]");
  const auto v = map.values();
  const auto [lo_it, hi_it] = std::minmax_element(v.begin(), v.end());
  const double lo = *lo_it, hi = *hi_it;

  Heatmap out;
  out.degenerate = !(hi > lo);
  if (out.degenerate) warn("saliency map is constant; heatmap rendered as a uniform overlay");
  out.lut_index.resize(v.size());
  for (std::size_t p = 0; p < v.size(); ++p) {
    if (out.degenerate) {
      out.lut_index[p] = 128;
    } else {
      const double t = (v[p] - lo) / (hi - lo);
      out.lut_index[p] = static_cast<std::uint8_t>(std::clamp(std::lround(t * 255.0), 0L, 255L));
    }
  }

  const ImageRaster rgb = to_rgb(base);
  const auto& lut = heatmap_lut();
  std::vector<float> data(v.size() * 3);
  const float a = static_cast<float>(alpha);
  for (std::size_t p = 0; p < v.size(); ++p) {
    const Rgb& c = lut[out.lut_index[p]];
    for (std::size_t k = 0; k < 3; ++k) {
      data[3 * p + k] = std::clamp((1.0f - a) * rgb.at_pixel(p, static_cast<int>(k)) + a * c[k], 0.0f, 1.0f);
    }
  }
  out.image = ImageRaster(base.width(), base.height(), 3, std::move(data));
  return out;
}

}  // namespace boxlens
