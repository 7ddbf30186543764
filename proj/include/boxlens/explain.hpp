// Copyright 2026 The BoxLens Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "boxlens/detection.hpp"
#include "boxlens/detector.hpp"
#include "boxlens/error.hpp"
#include "boxlens/image.hpp"
#include "boxlens/log.hpp"
#include "boxlens/masks.hpp"
#include "boxlens/parallel.hpp"
#include "boxlens/saliency_map.hpp"
#include "boxlens/similarity.hpp"

namespace boxlens {

enum class Method { rise, drise, dmfpp, dsliding, lime };

inline constexpr std::array<std::string_view, 5> kMethodNames{"rise", "drise", "dmfpp", "dsliding", "lime"};

inline std::string_view to_string(Method m) noexcept { return kMethodNames[static_cast<std::size_t>(m)]; }

inline std::optional<Method> parse_method(std::string_view name) noexcept {
  for (std::size_t i = 0; i < kMethodNames.size(); ++i) {
    if (kMethodNames[i] == name) return static_cast<Method>(i);
  }
  return std::nullopt;
}

/// Per-pixel divisor of the weighted mask sum: the pixel's own mask sum
/// (weighted mean of the weights over masks keeping it), or the mask count.
enum class Normalization { mask_sum, count };

inline std::string_view to_string(Normalization n) noexcept {
  return n == Normalization::mask_sum ? "mask_sum" : "count";
}

/// Similarity selection; `automatic` picks full scoring when the detector
/// reports class probabilities and the target carries them.
enum class SimilarityChoice { automatic, full, adapted };

inline std::string_view to_string(SimilarityChoice s) noexcept {
  switch (s) {
    case SimilarityChoice::automatic: return "auto";
    case SimilarityChoice::full: return "full";
    case SimilarityChoice::adapted: return "adapted";
  }
  return "auto";
}

struct ExplainConfig {
  Method method = Method::drise;
  std::size_t num_masks = 5000;
  std::uint64_t seed = 0;
  SimilarityChoice similarity = SimilarityChoice::automatic;
  Normalization normalization = Normalization::mask_sum;
  /// Gray level written into occluded pixels.
  float fill = 0.0f;
  RiseParams rise;
  SlidingWindowParams sliding;
  MfppParams mfpp;
  /// Upper bound on concurrent detector queries (further capped by the detector).
  std::size_t workers = 1;
  /// Masks generated and queried per accumulation round.
  std::size_t block_size = 64;
};

/// Streaming form of the weighted mask sum. Accumulation happens in double
/// precision in insertion order.
class SaliencyAccumulator {
 public:
  SaliencyAccumulator(int width, int height)
      : width_(width), height_(height),
        weighted_(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), 0.0),
        coverage_(weighted_.size(), 0.0) {}

  void add(const ImageRaster& mask, double weight) {
    if (mask.width() != width_ || mask.height() != height_ || mask.channels() != 1) {
      throw InvalidArgument("accumulate_saliency: mask size mismatch");
    }
    const auto m = mask.data();
    for (std::size_t p = 0; p < weighted_.size(); ++p) {
      weighted_[p] += weight * m[p];
      coverage_[p] += m[p];
    }
    ++count_;
  }

  std::size_t count() const noexcept { return count_; }

  SaliencyMap finish(Normalization norm, std::optional<Detection> target = std::nullopt,
                     std::string tag = {}) const {
    std::vector<float> values(weighted_.size(), 0.0f);
    for (std::size_t p = 0; p < values.size(); ++p) {
      const double z = norm == Normalization::mask_sum ? coverage_[p] : static_cast<double>(count_);
      values[p] = z > 0.0 ? static_cast<float>(weighted_[p] / z) : 0.0f;
    }
    return SaliencyMap(width_, height_, std::move(values), std::move(target), std::move(tag));
  }

 private:
  int width_;
  int height_;
  std::vector<double> weighted_;
  std::vector<double> coverage_;
  std::size_t count_ = 0;
};

/// S(x,y) = sum_i w_i M_i(x,y) / Z(x,y).
inline SaliencyMap accumulate_saliency(const MaskBatch& masks, std::span<const double> weights,
                                       Normalization norm) {
  if (weights.size() != masks.count()) throw InvalidArgument("accumulate_saliency: weight count mismatch");
  SaliencyAccumulator acc(masks.width(), masks.height());
  for (std::size_t i = 0; i < masks.count(); ++i) acc.add(masks.mask(i), weights[i]);
  return acc.finish(norm);
}

inline SimilarityMode resolve_similarity(SimilarityChoice choice, const DetectorCapabilities& caps,
                                         const Detection& target) {
  switch (choice) {
    case SimilarityChoice::adapted: return SimilarityMode::adapted;
    case SimilarityChoice::full:
      if (!caps.has_class_probs || !target.has_class_probs()) {
        throw InvalidArgument("full similarity requires a detector reporting class probabilities");
      }
      return SimilarityMode::full;
    case SimilarityChoice::automatic:
      return caps.has_class_probs && target.has_class_probs() ? SimilarityMode::full
                                                              : SimilarityMode::adapted;
  }
  return SimilarityMode::adapted;
}

/// Classification-only weight used by plain RISE on a detector: the highest
/// objectness among proposals of the target's class, ignoring location.
inline double class_score_weight(const Detection& target, std::span<const Detection> proposals) {
  double best = 0.0;
  for (const auto& p : proposals) {
    if (p.class_id() == target.class_id()) best = std::max(best, p.objectness());
  }
  return best;
}

/// Masks for a perturbation method, sized to `img`.
inline MaskBatch make_masks(const ImageRaster& img, const ExplainConfig& cfg) {
  switch (cfg.method) {
    case Method::rise:
    case Method::drise:
      return MaskBatch::rise(img.height(), img.width(), cfg.rise, cfg.num_masks, cfg.seed);
    case Method::dmfpp: return MaskBatch::mfpp(img, cfg.mfpp, cfg.num_masks, cfg.seed);
    case Method::dsliding: return MaskBatch::sliding_window(img.height(), img.width(), cfg.sliding);
    case Method::lime: break;
  }
  throw InvalidArgument("method '" + std::string(to_string(cfg.method)) + "' does not use a mask batch");
}

/// Warns unless the detector, run on the unmasked image, reproduces a
/// detection of the target's class with IoU >= 0.9.
inline void check_target(const ImageRaster& img, const Detection& target, Detector& detector) {
  const auto dets = detector.detect(img);
  for (const auto& d : dets) {
    if (d.class_id() == target.class_id() && iou(d.bbox(), target.bbox()) >= 0.9) return;
  }
  warn("target (class " + std::to_string(target.class_id()) +
       ") is not reproduced by the detector on the unmasked image");
}

/// Mask-perturbation explanation (rise, drise, dmfpp, dsliding): query the
/// detector on every masked image, turn each response into a scalar weight
/// and accumulate the weighted masks.
///
/// Masks are processed in blocks: a block is generated, queried with up to
/// `workers` concurrent calls, then accumulated in index order. The map is
/// therefore identical for every worker count.
inline SaliencyMap explain_perturbation(const ImageRaster& img, const Detection& target, Detector& detector,
                                        const ExplainConfig& cfg) {
  if (cfg.method == Method::lime) throw InvalidArgument("use explain_lime for the lime method");
  if (cfg.block_size == 0) throw InvalidArgument("block size must be positive");
  const std::array<float, 3> fill{cfg.fill, cfg.fill, cfg.fill};
  if (!(cfg.fill >= 0.0f && cfg.fill <= 1.0f)) throw InvalidArgument("fill value out of [0,1]");

  check_target(img, target, detector);
  const DetectorCapabilities caps = detector.capabilities();
  const SimilarityMode mode = resolve_similarity(cfg.similarity, caps, target);
  const MaskBatch masks = make_masks(img, cfg);
  const std::size_t workers = std::max<std::size_t>(1, std::min(cfg.workers, detector.max_concurrency()));

  SaliencyAccumulator acc(img.width(), img.height());
  std::vector<ImageRaster> block_masks;
  std::vector<double> block_weights;
  for (std::size_t start = 0; start < masks.count(); start += cfg.block_size) {
    const std::size_t stop = std::min(masks.count(), start + cfg.block_size);
    block_masks.assign(stop - start, ImageRaster{});
    block_weights.assign(stop - start, 0.0);
    parallel_for(start, stop, workers, [&](std::size_t i) {
      ImageRaster m = masks.mask(i);
      std::vector<Detection> proposals;
      try {
        proposals = detector.detect(apply_mask(img, m, fill));
      } catch (const std::exception& e) {
        std::throw_with_nested(MaskQueryError(i, e.what()));
      }
      block_weights[i - start] = cfg.method == Method::rise ? class_score_weight(target, proposals)
                                                            : per_mask_weight(target, proposals, mode);
      block_masks[i - start] = std::move(m);
    });
    for (std::size_t i = start; i < stop; ++i) acc.add(block_masks[i - start], block_weights[i - start]);
  }
  return acc.finish(cfg.normalization, target, std::string(to_string(cfg.method)));
}

}  // namespace boxlens
