// Copyright 2026 The BoxLens Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "boxlens/error.hpp"
#include "boxlens/image.hpp"
#include "boxlens/rng.hpp"
#include "boxlens/slic.hpp"

namespace boxlens {

enum class MaskKind { sliding_window, rise, mfpp };

inline std::string_view to_string(MaskKind k) noexcept {
  switch (k) {
    case MaskKind::sliding_window: return "sliding_window";
    case MaskKind::rise: return "rise";
    case MaskKind::mfpp: return "mfpp";
  }
  return "unknown";
}

struct SlidingWindowParams {
  int window = 32;
  int stride = 8;
};

struct RiseParams {
  int grid_h = 16;
  int grid_w = 16;
  double keep_prob = 0.25;
};

struct MfppParams {
  std::vector<int> scales{50, 100, 200};
  double keep_prob = 0.25;
  double compactness = 10.0;
  int iterations = 10;
};

/// Occlusion masks for one image size. Masks are produced on demand from
/// (kind, params, seed, index), so a batch is cheap to hold, can be read from
/// many threads, and any mask can be regenerated in isolation.
class MaskBatch {
 public:
  using Params = std::variant<SlidingWindowParams, RiseParams, MfppParams>;

  static MaskBatch sliding_window(int height, int width, const SlidingWindowParams& p) {
    if (height < 1 || width < 1) throw InvalidArgument("mask dimensions must be positive");
    if (p.stride < 1 || p.stride > p.window || p.window > std::min(height, width)) {
      throw InvalidArgument("sliding window requires 1 <= stride <= window <= min(H, W)");
    }
    MaskBatch b(MaskKind::sliding_window, height, width, p, 0);
    b.windows_y_ = positions(height, p.window, p.stride);
    b.windows_x_ = positions(width, p.window, p.stride);
    b.count_ = static_cast<std::size_t>(b.windows_y_) * static_cast<std::size_t>(b.windows_x_);
    return b;
  }

  static MaskBatch rise(int height, int width, const RiseParams& p, std::size_t n, std::uint64_t seed) {
    if (height < 1 || width < 1) throw InvalidArgument("mask dimensions must be positive");
    if (n < 1) throw InvalidArgument("mask count must be >= 1");
    if (p.grid_h < 1 || p.grid_w < 1) throw InvalidArgument("RISE grid must be at least 1x1");
    if (!(p.keep_prob >= 0.0 && p.keep_prob <= 1.0)) throw InvalidArgument("keep probability out of [0,1]");
    if (height / p.grid_h == 0 || width / p.grid_w == 0) {
      throw InvalidArgument("RISE grid is finer than the image (cell size would be 0)");
    }
    MaskBatch b(MaskKind::rise, height, width, p, seed);
    b.count_ = n;
    return b;
  }

  static MaskBatch mfpp(const ImageRaster& img, const MfppParams& p, std::size_t n, std::uint64_t seed) {
    if (n < 1) throw InvalidArgument("mask count must be >= 1");
    if (p.scales.empty()) throw InvalidArgument("MFPP needs at least one scale");
    for (std::size_t i = 0; i < p.scales.size(); ++i) {
      if (p.scales[i] < 1) throw InvalidArgument("MFPP scales must be >= 1");
      if (i > 0 && p.scales[i] <= p.scales[i - 1]) {
        throw InvalidArgument("MFPP scales must be strictly increasing");
      }
    }
    if (!(p.keep_prob >= 0.0 && p.keep_prob <= 1.0)) throw InvalidArgument("keep probability out of [0,1]");
    MaskBatch b(MaskKind::mfpp, img.height(), img.width(), p, seed);
    b.count_ = n;
    auto segs = std::make_shared<std::vector<Segmentation>>();
    segs->reserve(p.scales.size());
    for (int scale : p.scales) {
      segs->push_back(slic_segment(img, SlicParams{scale, p.compactness, p.iterations}));
    }
    b.segmentations_ = std::move(segs);
    return b;
  }

  MaskKind kind() const noexcept { return kind_; }
  std::size_t count() const noexcept { return count_; }
  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::uint64_t seed() const noexcept { return seed_; }
  const Params& params() const noexcept { return params_; }

  /// Per-scale segmentations (MFPP only).
  const std::vector<Segmentation>& segmentations() const {
    if (!segmentations_) throw InvalidArgument("segmentations are only defined for MFPP batches");
    return *segmentations_;
  }
  /// Index into segmentations() used by mask `i`: scales are assigned round-robin.
  std::size_t scale_of(std::size_t i) const { return i % segmentations().size(); }

  ImageRaster mask(std::size_t i) const {
    if (i >= count_) throw InvalidArgument("mask index out of range");
    switch (kind_) {
      case MaskKind::sliding_window: return sliding_mask(i);
      case MaskKind::rise: return rise_mask(i);
      case MaskKind::mfpp: return mfpp_mask(i);
    }
    throw Error("unreachable mask kind");
  }

 private:
  MaskBatch(MaskKind kind, int height, int width, Params params, std::uint64_t seed)
      : kind_(kind), height_(height), width_(width), params_(std::move(params)), seed_(seed) {}

  /// Window start offsets are 0, s, 2s, ... for ceil((extent - w) / s) + 1
  /// positions; the last window may overhang the border and is clipped.
  static int positions(int extent, int window, int stride) {
    return (extent - window + stride - 1) / stride + 1;
  }

  ImageRaster sliding_mask(std::size_t i) const {
    const auto& p = std::get<SlidingWindowParams>(params_);
    const int iy = static_cast<int>(i / static_cast<std::size_t>(windows_x_));
    const int ix = static_cast<int>(i % static_cast<std::size_t>(windows_x_));
    const int y0 = iy * p.stride, x0 = ix * p.stride;
    const int y1 = std::min(height_, y0 + p.window), x1 = std::min(width_, x0 + p.window);
    std::vector<float> data(static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_), 1.0f);
    for (int y = y0; y < y1; ++y) {
      for (int x = x0; x < x1; ++x) {
        data[static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x)] = 0.0f;
      }
    }
    return ImageRaster(width_, height_, 1, std::move(data));
  }

  // Binary h x w grid, bilinearly upsampled to ((h+1)C_H) x ((w+1)C_W) and
  // cropped to H x W at a random integer offset in [0,C_H) x [0,C_W).
  ImageRaster rise_mask(std::size_t i) const {
    const auto& p = std::get<RiseParams>(params_);
    Rng rng = substream(seed_, i);
    std::vector<float> grid(static_cast<std::size_t>(p.grid_h) * static_cast<std::size_t>(p.grid_w));
    for (float& g : grid) g = bernoulli(rng, p.keep_prob) ? 1.0f : 0.0f;
    const int cell_h = height_ / p.grid_h;
    const int cell_w = width_ / p.grid_w;
    const int oy = static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(cell_h)));
    const int ox = static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(cell_w)));

    const ImageRaster up = bilinear_resize(ImageRaster(p.grid_w, p.grid_h, 1, std::move(grid)),
                                           (p.grid_w + 1) * cell_w, (p.grid_h + 1) * cell_h);
    std::vector<float> data(static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_));
    for (int y = 0; y < height_; ++y) {
      for (int x = 0; x < width_; ++x) {
        data[static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x)] =
            up.at(x + ox, y + oy);
      }
    }
    return ImageRaster(width_, height_, 1, std::move(data));
  }

  ImageRaster mfpp_mask(std::size_t i) const {
    const auto& p = std::get<MfppParams>(params_);
    const Segmentation& seg = (*segmentations_)[scale_of(i)];
    Rng rng = substream(seed_, i);
    std::vector<float> keep(static_cast<std::size_t>(seg.count));
    for (float& k : keep) k = bernoulli(rng, p.keep_prob) ? 1.0f : 0.0f;
    std::vector<float> data(seg.labels.size());
    for (std::size_t q = 0; q < data.size(); ++q) data[q] = keep[static_cast<std::size_t>(seg.labels[q])];
    return ImageRaster(width_, height_, 1, std::move(data));
  }

  MaskKind kind_;
  int height_;
  int width_;
  Params params_;
  std::uint64_t seed_;
  std::size_t count_ = 0;
  int windows_y_ = 0;
  int windows_x_ = 0;
  std::shared_ptr<const std::vector<Segmentation>> segmentations_;
};

inline MaskBatch gen_sliding_window_masks(int height, int width, const SlidingWindowParams& p) {
  return MaskBatch::sliding_window(height, width, p);
}

inline MaskBatch gen_rise_masks(int height, int width, const RiseParams& p, std::size_t n,
                                std::uint64_t seed) {
  return MaskBatch::rise(height, width, p, n, seed);
}

inline MaskBatch gen_mfpp_masks(const ImageRaster& img, const MfppParams& p, std::size_t n,
                                std::uint64_t seed) {
  return MaskBatch::mfpp(img, p, n, seed);
}

/// Element-wise I * M, applied to every channel.
inline ImageRaster apply_mask(const ImageRaster& img, const ImageRaster& mask) {
  if (!img.same_size(mask) || mask.channels() != 1) {
    throw InvalidArgument("apply_mask: mask must be single-channel and match the image size");
  }
  std::vector<float> out(img.data().begin(), img.data().end());
  const int ch = img.channels();
  for (std::size_t p = 0; p < img.pixel_count(); ++p) {
    const float m = mask.at_pixel(p);
    for (int c = 0; c < ch; ++c) out[p * static_cast<std::size_t>(ch) + static_cast<std::size_t>(c)] *= m;
  }
  return ImageRaster(img.width(), img.height(), ch, std::move(out));
}

/// I * M + fill * (1 - M): occluded pixels take `fill` instead of black.
inline ImageRaster apply_mask(const ImageRaster& img, const ImageRaster& mask,
                              const std::array<float, 3>& fill) {
  if (!img.same_size(mask) || mask.channels() != 1) {
    throw InvalidArgument("apply_mask: mask must be single-channel and match the image size");
  }
  std::vector<float> out(img.data().begin(), img.data().end());
  const int ch = img.channels();
  for (std::size_t p = 0; p < img.pixel_count(); ++p) {
    const float m = mask.at_pixel(p);
    for (int c = 0; c < ch; ++c) {
      float& v = out[p * static_cast<std::size_t>(ch) + static_cast<std::size_t>(c)];
      v = std::clamp(v * m + fill[static_cast<std::size_t>(c)] * (1.0f - m), 0.0f, 1.0f);
    }
  }
  return ImageRaster(img.width(), img.height(), ch, std::move(out));
}

}  // namespace boxlens
