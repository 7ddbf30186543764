// Copyright 2026 The BoxLens Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "boxlens/detection.hpp"
#include "boxlens/error.hpp"

namespace boxlens {

/// Per-pixel importance for one target detection. Values are finite but not
/// range-limited: surrogate-model maps may carry negative weights.
class SaliencyMap {
 public:
  SaliencyMap() = default;

  SaliencyMap(int width, int height, std::vector<float> values,
              std::optional<Detection> target = std::nullopt, std::string method_tag = {})
      : width_(width), height_(height), values_(std::move(values)),
        target_(std::move(target)), method_tag_(std::move(method_tag)) {
    if (width_ <= 0 || height_ <= 0) throw InvalidArgument("saliency map dimensions must be positive");
    if (values_.size() != static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_)) {
      throw InvalidArgument("saliency map size mismatch");
    }
    for (float v : values_) {
      if (!std::isfinite(v)) throw InvalidArgument("saliency map value is not finite");
    }
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t pixel_count() const noexcept { return values_.size(); }
  std::span<const float> values() const noexcept { return values_; }
  float at(int x, int y) const noexcept {
    return values_[static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
                   static_cast<std::size_t>(x)];
  }
  const std::optional<Detection>& target() const noexcept { return target_; }
  const std::string& method_tag() const noexcept { return method_tag_; }

  bool all_non_negative() const noexcept {
    for (float v : values_) {
      if (v < 0.0f) return false;
    }
    return true;
  }

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<float> values_;
  std::optional<Detection> target_;
  std::string method_tag_;
};

}  // namespace boxlens
