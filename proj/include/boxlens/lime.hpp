// Copyright 2026 The BoxLens Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <optional>
#include <string>
#include <vector>

#include "boxlens/detection.hpp"
#include "boxlens/detector.hpp"
#include "boxlens/error.hpp"
#include "boxlens/image.hpp"
#include "boxlens/log.hpp"
#include "boxlens/parallel.hpp"
#include "boxlens/rng.hpp"
#include "boxlens/saliency_map.hpp"
#include "boxlens/similarity.hpp"
#include "boxlens/slic.hpp"

namespace boxlens {

struct LimeConfig {
  int segments = 100;
  std::size_t samples = 1000;
  double kernel_width = 0.25;
  double ridge_lambda = 1.0;
  double compactness = 10.0;
  int iterations = 10;
  /// Fill for dropped segments; the per-channel image mean when unset.
  std::optional<std::array<float, 3>> fill;
  std::size_t workers = 1;
};

/// Everything the surrogate fit saw, for inspection and testing.
struct LimeFit {
  Segmentation segmentation;
  std::vector<std::vector<std::uint8_t>> samples;  // one 0/1 entry per segment
  std::vector<double> responses;
  std::vector<double> kernel_weights;
  std::vector<double> coefficients;  // one per segment
  double intercept = 0.0;
  SaliencyMap map;
};

/// exp(-d^2 / width^2) with d = 1 - cos(z, 1) = 1 - sqrt(|z| / S).
inline double lime_kernel(std::size_t kept, std::size_t segments, double kernel_width) {
  const double cos = kept == 0 ? 0.0 : std::sqrt(static_cast<double>(kept) / static_cast<double>(segments));
  const double d = 1.0 - cos;
  return std::exp(-(d * d) / (kernel_width * kernel_width));
}

/// Minimizes sum_i pi_i (y_i - w.z_i - b)^2 + lambda |w|^2 (intercept not
/// penalized). Returns [w..., b].
inline std::vector<double> weighted_ridge(const std::vector<std::vector<std::uint8_t>>& design,
                                          const std::vector<double>& y, const std::vector<double>& pi,
                                          double lambda) {
  if (design.empty()) throw InvalidArgument("weighted_ridge: no samples");
  const auto d = static_cast<Eigen::Index>(design.front().size());
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(d + 1, d + 1);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(d + 1);
  Eigen::VectorXd row(d + 1);
  for (std::size_t i = 0; i < design.size(); ++i) {
    for (Eigen::Index j = 0; j < d; ++j) row[j] = design[i][static_cast<std::size_t>(j)];
    row[d] = 1.0;
    a.noalias() += pi[i] * row * row.transpose();
    rhs.noalias() += pi[i] * y[i] * row;
  }
  for (Eigen::Index j = 0; j < d; ++j) a(j, j) += lambda;

  Eigen::VectorXd sol;
  if (lambda > 0.0) {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
    if (ldlt.info() != Eigen::Success) throw Error("weighted_ridge: factorization failed");
    sol = ldlt.solve(rhs);
  } else {
    Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
    lu.setThreshold(1e-12);
    if (!lu.isInvertible()) {
      throw InvalidArgument("surrogate normal equations are singular; use a positive ridge_lambda");
    }
    sol = lu.solve(rhs);
  }
  return {sol.data(), sol.data() + sol.size()};
}

/// LIME surrogate for one detection: superpixels are switched on/off at
/// random (probability 1/2 each), the detector response on each perturbed
/// image is scored with the adapted similarity against the target, and a
/// kernel-weighted ridge regression maps segment presence to response.
inline LimeFit fit_lime(const ImageRaster& img, const Detection& target, Detector& detector,
                        const LimeConfig& cfg, std::uint64_t seed) {
  if (cfg.segments < 2) throw InvalidArgument("LIME needs at least 2 segments");
  if (cfg.samples < 1) throw InvalidArgument("LIME needs at least 1 sample");
  if (!(cfg.kernel_width > 0.0)) throw InvalidArgument("kernel width must be positive");
  if (!(cfg.ridge_lambda >= 0.0)) throw InvalidArgument("ridge lambda must be non-negative");
  if (cfg.samples < static_cast<std::size_t>(cfg.segments)) {
    warn("LIME sample count is below the segment count; the surrogate is underdetermined");
  }

  LimeFit fit;
  fit.segmentation = slic_segment(img, SlicParams{cfg.segments, cfg.compactness, cfg.iterations});
  const auto& seg = fit.segmentation;
  const std::size_t s = static_cast<std::size_t>(seg.count);
  const std::array<float, 3> fill = cfg.fill.value_or(channel_means(img));
  const int ch = img.channels();

  fit.samples.resize(cfg.samples);
  for (std::size_t i = 0; i < cfg.samples; ++i) {
    Rng rng = substream(seed, i);
    auto& z = fit.samples[i];
    z.resize(s);
    for (auto& v : z) v = bernoulli(rng, 0.5) ? 1 : 0;
  }

  fit.responses.assign(cfg.samples, 0.0);
  fit.kernel_weights.assign(cfg.samples, 0.0);
  const std::size_t workers = std::max<std::size_t>(1, std::min(cfg.workers, detector.max_concurrency()));
  parallel_for(0, cfg.samples, workers, [&](std::size_t i) {
    const auto& z = fit.samples[i];
    std::vector<float> data(img.data().begin(), img.data().end());
    std::size_t kept = 0;
    for (auto v : z) kept += v;
    for (std::size_t p = 0; p < seg.labels.size(); ++p) {
      if (z[static_cast<std::size_t>(seg.labels[p])]) continue;
      for (int c = 0; c < ch; ++c) data[p * static_cast<std::size_t>(ch) + static_cast<std::size_t>(c)] = fill[static_cast<std::size_t>(c)];
    }
    std::vector<Detection> proposals;
    try {
      proposals = detector.detect(ImageRaster(img.width(), img.height(), ch, std::move(data)));
    } catch (const std::exception& e) {
      std::throw_with_nested(MaskQueryError(i, e.what()));
    }
    fit.responses[i] = per_mask_weight(target, proposals, SimilarityMode::adapted);
    fit.kernel_weights[i] = lime_kernel(kept, s, cfg.kernel_width);
  });

  auto sol = weighted_ridge(fit.samples, fit.responses, fit.kernel_weights, cfg.ridge_lambda);
  fit.intercept = sol.back();
  sol.pop_back();
  fit.coefficients = std::move(sol);

  std::vector<float> values(seg.labels.size());
  for (std::size_t p = 0; p < values.size(); ++p) {
    values[p] = static_cast<float>(fit.coefficients[static_cast<std::size_t>(seg.labels[p])]);
  }
  fit.map = SaliencyMap(img.width(), img.height(), std::move(values), target, "lime");
  return fit;
}

inline SaliencyMap explain_lime(const ImageRaster& img, const Detection& target, Detector& detector,
                                const LimeConfig& cfg, std::uint64_t seed) {
  return fit_lime(img, target, detector, cfg, seed).map;
}

}  // namespace boxlens
