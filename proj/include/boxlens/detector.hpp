// Copyright 2026 The BoxLens Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

#include "boxlens/detection.hpp"
#include "boxlens/image.hpp"

namespace boxlens {

struct DetectorCapabilities {
  /// Full [L, O, P] output when true, reduced [L, O, C] output otherwise.
  bool has_class_probs = false;
  int num_classes = 1;
  /// Threshold the detector applies before reporting; informational here,
  /// the toolkit never filters again.
  double confidence_threshold = 0.7;
};

/// A black-box object detector. Implementations return post-NMS,
/// threshold-filtered detections and throw TransportError when the backend
/// fails (as opposed to returning an empty list).
class Detector {
 public:
  virtual ~Detector() = default;

  virtual DetectorCapabilities capabilities() const = 0;
  virtual std::vector<Detection> detect(const ImageRaster& img) = 0;

  /// Number of detect() calls that may be in flight at once.
  virtual std::size_t max_concurrency() const { return 1; }
};

}  // namespace boxlens
