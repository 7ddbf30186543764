// Copyright 2026 The BoxLens Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <exception>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "boxlens/detection.hpp"
#include "boxlens/detector.hpp"
#include "boxlens/error.hpp"
#include "boxlens/image.hpp"
#include "boxlens/saliency_map.hpp"

namespace boxlens {

/// True when the saliency argmax (first in row-major order on ties) lies in
/// `gt_box`, membership by pixel center.
inline bool pointing_game(const SaliencyMap& map, const BBox& gt_box) {
  const auto v = map.values();
  if (v.empty()) throw InvalidArgument("pointing_game: empty map");
  const auto it = std::max_element(v.begin(), v.end());  // first maximum
  const auto p = static_cast<std::size_t>(it - v.begin());
  const int x = static_cast<int>(p % static_cast<std::size_t>(map.width()));
  const int y = static_cast<int>(p / static_cast<std::size_t>(map.width()));
  return gt_box.contains_pixel(x, y);
}

/// Fraction of total saliency mass inside `gt_box` (pixel-center membership).
inline double ebpg(const SaliencyMap& map, const BBox& gt_box) {
  if (!map.all_non_negative()) throw InvalidArgument("ebpg: saliency map has negative values");
  double inside = 0.0, total = 0.0;
  for (int y = 0; y < map.height(); ++y) {
    for (int x = 0; x < map.width(); ++x) {
      const double s = map.at(x, y);
      total += s;
      if (gt_box.contains_pixel(x, y)) inside += s;
    }
  }
  if (!(total > 0.0)) throw InvalidArgument("undefined EBPG: saliency map is all zero");
  return inside / total;
}

/// Area under a deletion curve sampled at uniform fraction steps: the mean.
inline double auc(std::span<const double> scores) {
  if (scores.empty()) throw InvalidArgument("auc: empty score list");
  return std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(scores.size());
}

enum class DeletionFill { black, gray, mean };

inline std::string_view to_string(DeletionFill f) noexcept {
  switch (f) {
    case DeletionFill::black: return "black";
    case DeletionFill::gray: return "gray";
    case DeletionFill::mean: return "mean";
  }
  return "black";
}

inline std::optional<DeletionFill> parse_deletion_fill(std::string_view s) noexcept {
  if (s == "black") return DeletionFill::black;
  if (s == "gray") return DeletionFill::gray;
  if (s == "mean") return DeletionFill::mean;
  return std::nullopt;
}

struct DeletionConfig {
  std::size_t steps = 100;
  DeletionFill fill = DeletionFill::black;
  /// IoU a proposal must exceed to count for the target in the D-variants.
  double gamma = 0.5;
  int target_class = 0;
  BBox target_box;
};

/// plain: proposals of the target class count. d: they must also overlap
/// the target box with IoU > gamma.
enum class DeletionVariant { plain, d };

struct DeletionCurve {
  std::vector<double> scores;
  std::vector<double> fractions;
  double auc = 0.0;
};

struct DeletionResult {
  DeletionCurve plain;
  DeletionCurve d;
  /// Removed-pixel percentage at the first step with no qualifying proposal; 100 if never.
  double min_subset_pct = 100.0;
  double d_min_subset_pct = 100.0;
};

/// Pixel indices by descending saliency, ties kept in row-major order.
inline std::vector<std::size_t> rank_pixels(const SaliencyMap& map) {
  std::vector<std::size_t> order(map.pixel_count());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto v = map.values();
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] > v[b]; });
  return order;
}

/// Runs one deletion sweep and scores both variants from the same detector
/// calls: for k = 1..K the top ceil(k*HW/K) ranked pixels are replaced by the
/// fill and the detector is queried on the result.
inline DeletionResult evaluate_deletion(const ImageRaster& img, const SaliencyMap& map, Detector& detector,
                                        const DeletionConfig& cfg) {
  if (map.width() != img.width() || map.height() != img.height()) {
    throw InvalidArgument("deletion: saliency map and image sizes differ");
  }
  const std::size_t hw = img.pixel_count();
  const std::size_t k_steps = cfg.steps;
  if (k_steps < 1) throw InvalidArgument("deletion: steps must be >= 1");
  if (k_steps > hw) throw InvalidArgument("deletion: more steps than pixels");
  if (!(cfg.gamma >= 0.0 && cfg.gamma <= 1.0)) throw InvalidArgument("deletion: gamma out of [0,1]");

  std::array<float, 3> fill{};
  switch (cfg.fill) {
    case DeletionFill::black: fill = {0.0f, 0.0f, 0.0f}; break;
    case DeletionFill::gray: fill = {0.5f, 0.5f, 0.5f}; break;
    case DeletionFill::mean: fill = channel_means(img); break;
  }

  const auto order = rank_pixels(map);
  ImageRaster work = img;
  const int ch = img.channels();

  DeletionResult r;
  r.plain.scores.reserve(k_steps);
  r.d.scores.reserve(k_steps);
  bool plain_gone = false, d_gone = false;
  std::size_t removed = 0;
  for (std::size_t k = 1; k <= k_steps; ++k) {
    const std::size_t target_count = (k * hw + k_steps - 1) / k_steps;
    for (; removed < target_count; ++removed) {
      for (int c = 0; c < ch; ++c) work.set_pixel(order[removed], c, fill[static_cast<std::size_t>(c)]);
    }
    std::vector<Detection> proposals;
    try {
      proposals = detector.detect(work);
    } catch (const std::exception& e) {
      throw DeletionError(k, r.plain.scores, r.d.scores, e.what());
    }

    double score = 0.0, d_score = 0.0;
    bool any = false, d_any = false;
    for (const auto& p : proposals) {
      if (p.class_id() != cfg.target_class) continue;
      any = true;
      score = std::max(score, p.objectness());
      if (iou(cfg.target_box, p.bbox()) > cfg.gamma) {
        d_any = true;
        d_score = std::max(d_score, p.objectness());
      }
    }
    const double fraction = static_cast<double>(target_count) / static_cast<double>(hw);
    r.plain.scores.push_back(score);
    r.d.scores.push_back(d_score);
    r.plain.fractions.push_back(fraction);
    r.d.fractions.push_back(fraction);
    if (!any && !plain_gone) {
      plain_gone = true;
      r.min_subset_pct = 100.0 * fraction;
    }
    if (!d_any && !d_gone) {
      d_gone = true;
      r.d_min_subset_pct = 100.0 * fraction;
    }
  }
  r.plain.auc = auc(r.plain.scores);
  r.d.auc = auc(r.d.scores);
  return r;
}

inline DeletionCurve deletion_curve(const ImageRaster& img, const SaliencyMap& map, Detector& detector,
                                    const DeletionConfig& cfg, DeletionVariant variant) {
  auto r = evaluate_deletion(img, map, detector, cfg);
  return variant == DeletionVariant::plain ? std::move(r.plain) : std::move(r.d);
}

inline double min_subset(const ImageRaster& img, const SaliencyMap& map, Detector& detector,
                         const DeletionConfig& cfg, DeletionVariant variant) {
  const auto r = evaluate_deletion(img, map, detector, cfg);
  return variant == DeletionVariant::plain ? r.min_subset_pct : r.d_min_subset_pct;
}

}  // namespace boxlens
