// Copyright 2026 The BoxLens Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <span>
#include <string_view>

#include "boxlens/detection.hpp"
#include "boxlens/error.hpp"

namespace boxlens {

/// `full` scores IoU * cosine(class probs) * objectness and needs class
/// probability vectors on both sides. `adapted` drops the class term and is
/// what reduced-output detectors support.
enum class SimilarityMode { full, adapted };

inline std::string_view to_string(SimilarityMode m) noexcept {
  return m == SimilarityMode::full ? "full" : "adapted";
}

inline double similarity_score(const Detection& target, const Detection& proposal, SimilarityMode mode) {
  const double s_loc = iou(target.bbox(), proposal.bbox());
  if (mode == SimilarityMode::adapted) return s_loc * proposal.objectness();
  if (!target.has_class_probs() || !proposal.has_class_probs()) {
    throw InvalidArgument("full similarity requires class probabilities on target and proposal");
  }
  const double s_cls = std::max(0.0, cosine_similarity(*target.class_probs(), *proposal.class_probs()));
  return s_loc * s_cls * proposal.objectness();
}

/// Best similarity between the target and any proposal of one masked image;
/// 0 when there are no proposals.
inline double per_mask_weight(const Detection& target, std::span<const Detection> proposals,
                              SimilarityMode mode) {
  double best = 0.0;
  for (const auto& p : proposals) best = std::max(best, similarity_score(target, p, mode));
  return best;
}

}  // namespace boxlens
