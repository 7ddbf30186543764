// Copyright 2026 The BoxLens Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "boxlens/error.hpp"

namespace boxlens {

/// Row-major, interleaved raster of samples in [0,1]. Masks are
/// single-channel rasters; images have one or three channels.
class ImageRaster {
 public:
  ImageRaster() = default;

  /// Constant-filled raster.
  ImageRaster(int width, int height, int channels, float value = 0.0f)
      : width_(width), height_(height), channels_(channels) {
    check_shape();
    check_sample(value);
    data_.assign(sample_count(), value);
  }

  ImageRaster(int width, int height, int channels, std::vector<float> data)
      : width_(width), height_(height), channels_(channels), data_(std::move(data)) {
    check_shape();
    if (data_.size() != sample_count()) {
      throw InvalidArgument("raster data length " + std::to_string(data_.size()) +
                            " does not match " + std::to_string(width_) + "x" +
                            std::to_string(height_) + "x" + std::to_string(channels_));
    }
    for (float v : data_) check_sample(v);
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int channels() const noexcept { return channels_; }
  std::size_t pixel_count() const noexcept {
    return static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_);
  }
  bool empty() const noexcept { return data_.empty(); }

  std::span<const float> data() const noexcept { return data_; }

  float at(int x, int y, int c = 0) const noexcept {
    return data_[index(x, y, c)];
  }
  /// Sample at flat pixel index `p` (row-major), channel `c`.
  float at_pixel(std::size_t p, int c = 0) const noexcept {
    return data_[p * static_cast<std::size_t>(channels_) + static_cast<std::size_t>(c)];
  }

  void set(int x, int y, int c, float v) {
    check_sample(v);
    data_[index(x, y, c)] = v;
  }
  void set_pixel(std::size_t p, int c, float v) {
    check_sample(v);
    data_[p * static_cast<std::size_t>(channels_) + static_cast<std::size_t>(c)] = v;
  }

  bool same_size(const ImageRaster& other) const noexcept {
    return width_ == other.width_ && height_ == other.height_;
  }

  friend bool operator==(const ImageRaster&, const ImageRaster&) = default;

 private:
  std::size_t sample_count() const noexcept {
    return pixel_count() * static_cast<std::size_t>(channels_);
  }
  std::size_t index(int x, int y, int c) const noexcept {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
            static_cast<std::size_t>(x)) * static_cast<std::size_t>(channels_) +
           static_cast<std::size_t>(c);
  }
  void check_shape() const {
    if (width_ <= 0 || height_ <= 0) throw InvalidArgument("raster dimensions must be positive");
    if (channels_ != 1 && channels_ != 3) throw InvalidArgument("raster must have 1 or 3 channels");
  }
  static void check_sample(float v) {
    if (!std::isfinite(v) || v < 0.0f || v > 1.0f) {
      throw InvalidArgument("raster sample out of [0,1]: " + std::to_string(v));
    }
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 1;
  std::vector<float> data_;
};

/// Bilinear interpolation with corner-aligned sampling: output corners map
/// exactly onto input corners.
inline ImageRaster bilinear_resize(const ImageRaster& src, int out_w, int out_h) {
  if (src.empty()) throw InvalidArgument("bilinear_resize: empty source");
  if (src.channels() != 1) throw InvalidArgument("bilinear_resize: single-channel raster required");
  if (out_w < 1 || out_h < 1) throw InvalidArgument("bilinear_resize: output dimensions must be >= 1");

  const int in_w = src.width();
  const int in_h = src.height();
  if (in_w == out_w && in_h == out_h) return src;

  // Per-axis source coordinate tables.
  auto axis = [](int in, int out) {
    std::vector<std::pair<int, double>> t(static_cast<std::size_t>(out));
    const double scale = (out > 1 && in > 1) ? double(in - 1) / double(out - 1) : 0.0;
    for (int i = 0; i < out; ++i) {
      const double s = i * scale;
      int i0 = static_cast<int>(std::floor(s));
      i0 = std::clamp(i0, 0, in - 1);
      t[static_cast<std::size_t>(i)] = {i0, s - i0};
    }
    return t;
  };
  const auto xs = axis(in_w, out_w);
  const auto ys = axis(in_h, out_h);

  const auto in = src.data();
  float lo = in[0], hi = in[0];
  for (float v : in) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }

  std::vector<float> out(static_cast<std::size_t>(out_w) * static_cast<std::size_t>(out_h));
  for (int y = 0; y < out_h; ++y) {
    const auto [y0, fy] = ys[static_cast<std::size_t>(y)];
    const int y1 = std::min(y0 + 1, in_h - 1);
    const float* r0 = &in[static_cast<std::size_t>(y0) * static_cast<std::size_t>(in_w)];
    const float* r1 = &in[static_cast<std::size_t>(y1) * static_cast<std::size_t>(in_w)];
    for (int x = 0; x < out_w; ++x) {
      const auto [x0, fx] = xs[static_cast<std::size_t>(x)];
      const int x1 = std::min(x0 + 1, in_w - 1);
      const double top = r0[x0] + fx * (r0[x1] - r0[x0]);
      const double bot = r1[x0] + fx * (r1[x1] - r1[x0]);
      const double v = top + fy * (bot - top);
      out[static_cast<std::size_t>(y) * static_cast<std::size_t>(out_w) + static_cast<std::size_t>(x)] =
          std::clamp(static_cast<float>(v), lo, hi);
    }
  }
  return ImageRaster(out_w, out_h, 1, std::move(out));
}

/// CIELAB triple, D65 white.
struct Lab {
  double l = 0.0;
  double a = 0.0;
  double b = 0.0;
};

inline Lab srgb_to_lab(double r, double g, double b) {
  auto linear = [](double c) {
    return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
  };
  const double rl = linear(r), gl = linear(g), bl = linear(b);
  // sRGB -> XYZ (D65), normalized by the reference white.
  const double x = (0.4124564 * rl + 0.3575761 * gl + 0.1804375 * bl) / 0.95047;
  const double y = (0.2126729 * rl + 0.7151522 * gl + 0.0721750 * bl) / 1.00000;
  const double z = (0.0193339 * rl + 0.1191920 * gl + 0.9503041 * bl) / 1.08883;
  auto f = [](double t) {
    constexpr double eps = 216.0 / 24389.0;
    constexpr double kappa = 24389.0 / 27.0;
    return t > eps ? std::cbrt(t) : (kappa * t + 16.0) / 116.0;
  };
  const double fx = f(x), fy = f(y), fz = f(z);
  return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

/// Converts an sRGB raster into CIELAB. Returned values are interleaved
/// (L, a, b) per pixel; they are outside [0,1] so a plain vector is used.
inline std::vector<Lab> rgb_to_lab(const ImageRaster& img) {
  if (img.channels() != 3) throw InvalidArgument("rgb_to_lab: 3-channel image required");
  std::vector<Lab> out(img.pixel_count());
  for (std::size_t p = 0; p < out.size(); ++p) {
    out[p] = srgb_to_lab(img.at_pixel(p, 0), img.at_pixel(p, 1), img.at_pixel(p, 2));
  }
  return out;
}

/// Gray images are expanded to RGB; RGB images are returned unchanged.
inline ImageRaster to_rgb(const ImageRaster& img) {
  if (img.channels() == 3) return img;
  std::vector<float> data(img.pixel_count() * 3);
  for (std::size_t p = 0; p < img.pixel_count(); ++p) {
    const float v = img.at_pixel(p);
    data[3 * p] = data[3 * p + 1] = data[3 * p + 2] = v;
  }
  return ImageRaster(img.width(), img.height(), 3, std::move(data));
}

/// Rec. 709 relative luminance of one pixel (the sample itself for gray).
inline double luminance(const ImageRaster& img, std::size_t p) {
  if (img.channels() == 1) return img.at_pixel(p);
  return 0.2126 * img.at_pixel(p, 0) + 0.7152 * img.at_pixel(p, 1) + 0.0722 * img.at_pixel(p, 2);
}

/// Per-channel mean of an image.
inline std::array<float, 3> channel_means(const ImageRaster& img) {
  std::array<double, 3> sum{};
  for (std::size_t p = 0; p < img.pixel_count(); ++p) {
    for (int c = 0; c < img.channels(); ++c) sum[static_cast<std::size_t>(c)] += img.at_pixel(p, c);
  }
  std::array<float, 3> mean{};
  for (int c = 0; c < img.channels(); ++c) {
    mean[static_cast<std::size_t>(c)] =
        static_cast<float>(sum[static_cast<std::size_t>(c)] / static_cast<double>(img.pixel_count()));
  }
  if (img.channels() == 1) mean[1] = mean[2] = mean[0];
  return mean;
}

}  // namespace boxlens
