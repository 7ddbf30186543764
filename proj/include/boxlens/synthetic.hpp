// Copyright 2026 The BoxLens Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "boxlens/detection.hpp"
#include "boxlens/detector.hpp"
#include "boxlens/error.hpp"
#include "boxlens/image.hpp"

namespace boxlens {

struct SyntheticObject {
  int class_id = 0;
  BBox bbox;
  /// Flat row-major pixel indices whose visibility drives objectness.
  std::vector<std::size_t> evidence;
  std::array<float, 3> color{1.0f, 1.0f, 1.0f};
};

/// Ground truth for the oracle detector: each object is reported with
/// objectness equal to the visible fraction of its evidence pixels.
struct SyntheticScene {
  int width = 0;
  int height = 0;
  int num_classes = 1;
  double emission_threshold = 0.0;
  bool has_class_probs = true;
  std::array<float, 3> background{0.5f, 0.5f, 0.5f};
  std::vector<SyntheticObject> objects;

  void validate() const {
    if (width < 1 || height < 1) throw InvalidArgument("scene dimensions must be positive");
    if (num_classes < 1) throw InvalidArgument("scene needs at least one class");
    if (!(emission_threshold >= 0.0 && emission_threshold <= 1.0)) {
      throw InvalidArgument("emission threshold out of [0,1]");
    }
    const std::size_t n = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    for (const auto& o : objects) {
      if (o.class_id < 0 || o.class_id >= num_classes) throw InvalidArgument("object class id out of range");
      if (!o.bbox.valid()) throw InvalidArgument("object bounding box is invalid");
      if (o.evidence.empty()) throw InvalidArgument("object evidence set is empty");
      for (std::size_t p : o.evidence) {
        if (p >= n) throw InvalidArgument("evidence pixel outside the image");
      }
      for (float c : o.color) {
        if (!(c >= 0.0f && c <= 1.0f)) throw InvalidArgument("object color out of [0,1]");
      }
    }
    for (float c : background) {
      if (!(c >= 0.0f && c <= 1.0f)) throw InvalidArgument("background color out of [0,1]");
    }
  }

  /// Background everywhere, object color on evidence pixels (later objects win).
  ImageRaster render() const {
    validate();
    const std::size_t n = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    std::vector<float> data(n * 3);
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t c = 0; c < 3; ++c) data[3 * p + c] = background[c];
    }
    for (const auto& o : objects) {
      for (std::size_t p : o.evidence) {
        for (std::size_t c = 0; c < 3; ++c) data[3 * p + c] = o.color[c];
      }
    }
    return ImageRaster(width, height, 3, std::move(data));
  }

  /// All pixels whose centers fall inside `box`.
  std::vector<std::size_t> pixels_in(const BBox& box) const {
    std::vector<std::size_t> out;
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        if (box.contains_pixel(x, y)) {
          out.push_back(static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
                        static_cast<std::size_t>(x));
        }
      }
    }
    return out;
  }
};

/// Smoothed one-hot vector: 0.9 on `class_id`, the rest spread evenly.
inline std::vector<double> smoothed_one_hot(int class_id, int num_classes) {
  if (num_classes == 1) return {1.0};
  std::vector<double> probs(static_cast<std::size_t>(num_classes),
                            0.1 / static_cast<double>(num_classes - 1));
  probs[static_cast<std::size_t>(class_id)] = 0.9;
  return probs;
}

/// Visible fraction of one object's evidence: mean over evidence pixels of
/// the masked/original luminance ratio, clamped to [0,1], with 0/0 -> 0.
inline double evidence_visibility(const SyntheticObject& obj, const ImageRaster& masked,
                                  const ImageRaster& original) {
  double sum = 0.0;
  for (std::size_t p : obj.evidence) {
    const double orig = luminance(original, p);
    if (orig <= 0.0) continue;
    sum += std::clamp(luminance(masked, p) / orig, 0.0, 1.0);
  }
  return sum / static_cast<double>(obj.evidence.size());
}

/// Oracle detection rule. An object is reported when its visibility v is
/// positive and at least the emission threshold; objectness is v.
inline std::vector<Detection> synthetic_detect(const SyntheticScene& scene, const ImageRaster& masked,
                                               const ImageRaster& original) {
  if (!masked.same_size(original)) throw InvalidArgument("synthetic_detect: image size mismatch");
  if (masked.width() != scene.width || masked.height() != scene.height) {
    throw InvalidArgument("synthetic_detect: image does not match the scene size");
  }
  std::vector<Detection> out;
  for (const auto& obj : scene.objects) {
    const double v = evidence_visibility(obj, masked, original);
    if (v > 0.0 && v >= scene.emission_threshold) {
      std::optional<std::vector<double>> probs;
      if (scene.has_class_probs) probs = smoothed_one_hot(obj.class_id, scene.num_classes);
      out.emplace_back(obj.bbox, v, obj.class_id, std::move(probs));
    }
  }
  return out;
}

class SyntheticDetector final : public Detector {
 public:
  explicit SyntheticDetector(SyntheticScene scene)
      : scene_(std::move(scene)), original_(scene_.render()) {}

  SyntheticDetector(SyntheticScene scene, ImageRaster original)
      : scene_(std::move(scene)), original_(std::move(original)) {
    scene_.validate();
    if (original_.width() != scene_.width || original_.height() != scene_.height) {
      throw InvalidArgument("synthetic detector: original image does not match the scene size");
    }
  }

  DetectorCapabilities capabilities() const override {
    return {scene_.has_class_probs, scene_.num_classes, scene_.emission_threshold};
  }
  std::vector<Detection> detect(const ImageRaster& img) override {
    return synthetic_detect(scene_, img, original_);
  }
  std::size_t max_concurrency() const override { return std::numeric_limits<std::size_t>::max(); }

  const SyntheticScene& scene() const noexcept { return scene_; }
  const ImageRaster& original() const noexcept { return original_; }

 private:
  SyntheticScene scene_;
  ImageRaster original_;
};

namespace detail {
inline std::array<float, 3> parse_color(const nlohmann::json& j) {
  if (j.is_number()) {
    const float v = j.get<float>();
    return {v, v, v};
  }
  if (j.is_array() && j.size() == 3) return {j[0].get<float>(), j[1].get<float>(), j[2].get<float>()};
  throw InvalidArgument("color must be a number or an [r, g, b] array");
}

inline BBox parse_box(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 4) throw InvalidArgument("box must be [x1, y1, x2, y2]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}
}  // namespace detail

/// Scene file layout:
///   {"width": W, "height": H, "num_classes": K, "emission_threshold": t,
///    "has_class_probs": bool, "background": v | [r,g,b],
///    "objects": [{"class_id": c, "bbox": [x1,y1,x2,y2], "color": v | [r,g,b],
///                 "evidence": "bbox" | {"rect": [x1,y1,x2,y2]} | [[x,y], ...]}]}
/// Evidence defaults to every pixel whose center lies in the bbox.
inline SyntheticScene scene_from_json(const nlohmann::json& j) {
  try {
    SyntheticScene s;
    s.width = j.at("width").get<int>();
    s.height = j.at("height").get<int>();
    s.num_classes = j.value("num_classes", 1);
    s.emission_threshold = j.value("emission_threshold", 0.0);
    s.has_class_probs = j.value("has_class_probs", true);
    if (j.contains("background")) s.background = detail::parse_color(j["background"]);
    for (const auto& o : j.value("objects", nlohmann::json::array())) {
      SyntheticObject obj;
      obj.class_id = o.value("class_id", 0);
      obj.bbox = detail::parse_box(o.at("bbox"));
      if (o.contains("color")) obj.color = detail::parse_color(o["color"]);
      const nlohmann::json ev = o.value("evidence", nlohmann::json("bbox"));
      if (ev.is_string()) {
        if (ev.get<std::string>() != "bbox") throw InvalidArgument("unknown evidence keyword");
        obj.evidence = s.pixels_in(obj.bbox);
      } else if (ev.is_object()) {
        obj.evidence = s.pixels_in(detail::parse_box(ev.at("rect")));
      } else {
        for (const auto& xy : ev) {
          const int x = xy.at(0).get<int>(), y = xy.at(1).get<int>();
          if (x < 0 || y < 0 || x >= s.width || y >= s.height) {
            throw InvalidArgument("evidence pixel outside the image");
          }
          obj.evidence.push_back(static_cast<std::size_t>(y) * static_cast<std::size_t>(s.width) +
                                 static_cast<std::size_t>(x));
        }
      }
      s.objects.push_back(std::move(obj));
    }
    s.validate();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed scene: ") + e.what());
  }
}

inline SyntheticScene load_scene(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open scene file '" + path + "'");
  try {
    return scene_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument("malformed scene file '" + path + "': " + e.what());
  }
}

}  // namespace boxlens
