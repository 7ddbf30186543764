// Copyright 2026 The BoxLens Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "boxlens/error.hpp"

namespace boxlens {

/// Axis-aligned box in continuous pixel coordinates. (x1, y1) is the
/// inclusive top-left corner, (x2, y2) the exclusive bottom-right one, so a
/// w-by-h box has area exactly w*h.
struct BBox {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  bool valid() const noexcept {
    return std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) &&
           std::isfinite(y2) && x1 <= x2 && y1 <= y2;
  }
  double width() const noexcept { return x2 - x1; }
  double height() const noexcept { return y2 - y1; }
  double area() const noexcept { return width() * height(); }

  /// True when the center of pixel (x, y) lies inside the box.
  bool contains_pixel(int x, int y) const noexcept {
    const double cx = x + 0.5;
    const double cy = y + 0.5;
    return cx >= x1 && cx < x2 && cy >= y1 && cy < y2;
  }

  BBox clamped(double width, double height) const noexcept {
    return {std::clamp(x1, 0.0, width), std::clamp(y1, 0.0, height),
            std::clamp(x2, 0.0, width), std::clamp(y2, 0.0, height)};
  }

  friend bool operator==(const BBox&, const BBox&) = default;
};

/// Intersection over union. A zero-area union yields 0.
inline double iou(const BBox& a, const BBox& b) noexcept {
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  const double inter = (iw > 0.0 && ih > 0.0) ? iw * ih : 0.0;
  const double uni = a.area() + b.area() - inter;
  if (!(uni > 0.0)) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

/// Cosine of the angle between two class-probability vectors.
inline double cosine_similarity(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw InvalidArgument("cosine_similarity: length mismatch");
  double dot = 0.0, pp = 0.0, qq = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    dot += p[i] * q[i];
    pp += p[i] * p[i];
    qq += q[i] * q[i];
  }
  if (!(pp > 0.0) || !(qq > 0.0)) throw InvalidArgument("degenerate probability vector");
  return std::clamp(dot / (std::sqrt(pp) * std::sqrt(qq)), -1.0, 1.0);
}

/// One post-NMS detector output. With `class_probs` present this is the full
/// output form [L, O, P]; without it the detector runs in reduced-output mode
/// [L, O, C] and only the winning class label is known.
class Detection {
 public:
  Detection(BBox bbox, double objectness, int class_id,
            std::optional<std::vector<double>> class_probs = std::nullopt)
      : bbox_(bbox), objectness_(objectness), class_id_(class_id),
        class_probs_(std::move(class_probs)) {
    if (!bbox_.valid()) throw InvalidArgument("invalid bounding box");
    if (!std::isfinite(objectness_) || objectness_ < 0.0 || objectness_ > 1.0) {
      throw InvalidArgument("objectness out of range");
    }
    if (class_id_ < 0) throw InvalidArgument("negative class id");
    if (class_probs_) {
      const auto& probs = *class_probs_;
      if (probs.empty()) throw InvalidArgument("empty class probability vector");
      for (double v : probs) {
        if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
          throw InvalidArgument("class probability out of range");
        }
      }
      if (static_cast<std::size_t>(class_id_) >= probs.size()) {
        throw InvalidArgument("class id outside class probability vector");
      }
      const double best = *std::max_element(probs.begin(), probs.end());
      if (probs[static_cast<std::size_t>(class_id_)] != best) {
        throw InvalidArgument("class id is not the argmax of class probabilities");
      }
    }
  }

  const BBox& bbox() const noexcept { return bbox_; }
  double objectness() const noexcept { return objectness_; }
  int class_id() const noexcept { return class_id_; }
  const std::optional<std::vector<double>>& class_probs() const noexcept { return class_probs_; }
  bool has_class_probs() const noexcept { return class_probs_.has_value(); }

  friend bool operator==(const Detection&, const Detection&) = default;

 private:
  BBox bbox_;
  double objectness_;
  int class_id_;
  std::optional<std::vector<double>> class_probs_;
};

}  // namespace boxlens
