// Copyright 2026 The BoxLens Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "boxlens/config.hpp"
#include "boxlens/error.hpp"
#include "boxlens/explain.hpp"
#include "boxlens/heatmap.hpp"
#include "boxlens/lime.hpp"
#include "boxlens/log.hpp"
#include "boxlens/manifest.hpp"
#include "boxlens/masks.hpp"
#include "boxlens/metrics.hpp"
#include "boxlens/parallel.hpp"
#include "boxlens/png_io.hpp"
#include "boxlens/protocol_client.hpp"
#include "boxlens/report.hpp"
#include "boxlens/saliency_file.hpp"
#include "boxlens/synthetic.hpp"

namespace boxlens {

namespace fs = std::filesystem;

/// Message of `e` followed by the messages of any nested exceptions.
inline std::string describe(const std::exception& e) {
  std::string out = e.what();
  try {
    std::rethrow_if_nested(e);
  } catch (const std::exception& inner) {
    out += ": " + describe(inner);
  } catch (...) {
    out += ": unknown error";
  }
  return out;
}

/// A detector built from a spec string, `synthetic:<scene.json>` or
/// `exec:<command line>`.
class DetectorSource {
 public:
  DetectorSource(const std::string& spec, const ClientOptions& options) : spec_(spec) {
    if (spec.rfind("synthetic:", 0) == 0) {
      const std::string path = spec.substr(10);
      scene_ = load_scene(path);
      record_ = {{"kind", "synthetic"},
                 {"scene", path},
                 {"width", scene_->width},
                 {"height", scene_->height},
                 {"num_classes", scene_->num_classes},
                 {"has_class_probs", scene_->has_class_probs},
                 {"confidence_threshold", scene_->emission_threshold}};
    } else if (spec.rfind("exec:", 0) == 0) {
      const std::string command = spec.substr(5);
      if (command.empty()) throw ConfigError("empty command in detector spec '" + spec + "'");
      external_ = std::make_shared<ExternalDetector>(command, options);
      record_ = {{"kind", "exec"}, {"command", command}, {"handshake", protocol::to_json(external_->handshake())}};
    } else {
      throw ConfigError("bad detector spec '" + spec + "'; expected synthetic:<scene> or exec:<command>");
    }
  }

  /// Detector to query for `img`. Synthetic detectors measure visibility
  /// against `img` itself.
  std::shared_ptr<Detector> for_image(const ImageRaster& img) const {
    if (external_) return external_;
    return std::make_shared<SyntheticDetector>(*scene_, img);
  }

  std::optional<ImageRaster> scene_image() const {
    if (!scene_) return std::nullopt;
    return scene_->render();
  }

  const std::string& spec() const noexcept { return spec_; }
  const nlohmann::json& record() const noexcept { return record_; }

 private:
  std::string spec_;
  std::optional<SyntheticScene> scene_;
  std::shared_ptr<ExternalDetector> external_;
  nlohmann::json record_;
};

/// A user-chosen detection to explain. An empty image id applies to every image.
struct TargetSpec {
  std::string image_id;
  Detection detection;
};

inline std::vector<TargetSpec> targets_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw ConfigError("targets must be a JSON array");
  std::vector<TargetSpec> out;
  for (const auto& t : j) {
    try {
      nlohmann::json d = t;
      if (d.contains("bbox")) {
        const auto& b = d["bbox"];
        d["x1"] = b.at(0);
        d["y1"] = b.at(1);
        d["x2"] = b.at(2);
        d["y2"] = b.at(3);
      }
      if (!d.contains("objectness")) d["objectness"] = 1.0;
      if (!d.contains("class_id")) d["class_id"] = 0;
      out.push_back({t.value("image_id", ""), protocol::parse_detection(d)});
    } catch (const std::exception& e) {
      throw ConfigError(std::string("bad target: ") + e.what());
    }
  }
  return out;
}

struct ExplainRequest {
  RunConfig config;
  std::string detector_spec;
  std::vector<std::string> images;  // PNG paths; empty means the synthetic scene
  std::optional<std::vector<TargetSpec>> targets;
  std::string out_dir;
};

namespace detail {

inline std::vector<ManifestImage> plan_images(const std::vector<std::string>& paths) {
  std::vector<ManifestImage> out;
  std::set<std::string> used;
  for (const auto& p : paths) {
    std::string id = fs::path(p).stem().string();
    if (id.empty()) id = "image";
    const std::string base = id;
    for (int k = 2; used.count(id) != 0; ++k) id = base + "_" + std::to_string(k);
    used.insert(id);
    out.push_back({id, fs::absolute(p).string(), 0, 0});
  }
  return out;
}

inline ImageRaster load_image(const ManifestImage& info, const DetectorSource& source) {
  if (info.path.empty()) {
    auto img = source.scene_image();
    if (!img) throw InvalidArgument("image '" + info.id + "' has no path and the detector has no scene");
    return *img;
  }
  return read_png(info.path);
}

/// Detector spec with any synthetic scene path made absolute, so a manifest
/// can be replayed from another working directory.
inline std::string absolute_spec(const std::string& spec) {
  if (spec.rfind("synthetic:", 0) == 0) return "synthetic:" + fs::absolute(spec.substr(10)).string();
  return spec;
}

struct ImageOutcome {
  ManifestImage info;
  std::vector<ManifestTarget> targets;
  std::vector<ManifestFailure> failures;
};

inline ImageOutcome explain_image(const RunConfig& cfg, const DetectorSource& source, ManifestImage info,
                                  const std::optional<std::vector<TargetSpec>>& user_targets,
                                  const fs::path& out_dir) {
  ImageOutcome out{info, {}, {}};
  ImageRaster img;
  std::shared_ptr<Detector> detector;
  std::vector<Detection> targets;
  try {
    img = load_image(info, source);
    out.info.width = img.width();
    out.info.height = img.height();
    detector = source.for_image(img);
    if (user_targets) {
      for (const auto& t : *user_targets) {
        if (t.image_id.empty() || t.image_id == info.id) targets.push_back(t.detection);
      }
    } else {
      for (auto& d : detector->detect(img)) {
        if (d.objectness() >= cfg.confidence_threshold) targets.push_back(std::move(d));
      }
    }
  } catch (const std::exception& e) {
    out.failures.push_back({info.id, std::nullopt, describe(e)});
    return out;
  }

  for (std::size_t k = 0; k < targets.size(); ++k) {
    const int idx = static_cast<int>(k);
    ManifestTarget rec{info.id, idx, targets[k], "", ""};
    try {
      ExplainConfig ecfg = cfg.explain;
      SaliencyMap map = ecfg.method == Method::lime
                            ? explain_lime(img, targets[k], *detector, cfg.lime, ecfg.seed)
                            : explain_perturbation(img, targets[k], *detector, ecfg);
      const std::string stem = info.id + "_t" + std::to_string(idx);
      write_saliency_file((out_dir / (stem + ".salm")).string(), map);
      rec.saliency = stem + ".salm";
      const Heatmap hm = render_heatmap(map, img, cfg.heatmap_alpha);
      write_png((out_dir / (stem + ".png")).string(), hm.image);
      rec.heatmap = stem + ".png";
    } catch (const std::exception& e) {
      out.failures.push_back({info.id, idx, describe(e)});
    }
    out.targets.push_back(std::move(rec));
  }
  return out;
}

inline RunManifest explain_all(const RunConfig& cfg, const DetectorSource& source,
                               std::vector<ManifestImage> images,
                               const std::optional<std::vector<TargetSpec>>& user_targets,
                               const std::string& out_dir, bool record_user_targets) {
  RunManifest m;
  m.started_at = utc_timestamp();
  m.config = cfg;
  m.detector_spec = source.spec();
  m.detector_record = source.record();
  m.user_targets = record_user_targets;
  fs::create_directories(out_dir);

  std::vector<ImageOutcome> outcomes(images.size());
  const std::size_t workers = std::max<std::size_t>(1, std::min(cfg.explain.workers, images.size()));
  parallel_for(0, images.size(), workers, [&](std::size_t i) {
    outcomes[i] = explain_image(cfg, source, images[i], user_targets, out_dir);
  });
  for (auto& o : outcomes) {
    m.images.push_back(o.info);
    for (auto& t : o.targets) m.targets.push_back(std::move(t));
    for (auto& f : o.failures) {
      warn("image '" + f.image_id + "': " + f.error);
      m.failures.push_back(std::move(f));
    }
  }
  m.finished_at = utc_timestamp();
  write_json_file((fs::path(out_dir) / "manifest.json").string(), to_json(m));
  return m;
}

}  // namespace detail

/// Explains every target of every image, writing `<id>_t<k>.salm`,
/// `<id>_t<k>.png` and `manifest.json` into `out_dir`. Failures of single
/// images or targets are recorded in the manifest and the run continues.
inline RunManifest run_explain(const ExplainRequest& req) {
  const std::string spec = detail::absolute_spec(req.detector_spec);
  DetectorSource source(spec, req.config.detector);
  std::vector<ManifestImage> images = detail::plan_images(req.images);
  if (images.empty()) {
    if (!source.scene_image()) throw ConfigError("no input images given");
    images.push_back({kSceneImageId, "", 0, 0});
  }
  return detail::explain_all(req.config, source, std::move(images), req.targets, req.out_dir,
                             req.targets.has_value());
}

/// Re-executes a recorded run with its configuration, images and targets.
inline RunManifest rerun_explain(const RunManifest& prior, const std::string& out_dir,
                                 const std::optional<std::string>& detector_override = std::nullopt) {
  DetectorSource source(detector_override.value_or(prior.detector_spec), prior.config.detector);
  std::vector<ManifestImage> images;
  for (const auto& im : prior.images) images.push_back({im.id, im.path, 0, 0});
  std::vector<TargetSpec> targets;
  for (const auto& t : prior.targets) targets.push_back({t.image_id, t.detection});
  // Images that produced no targets the first time stay target-free.
  return detail::explain_all(prior.config, source, std::move(images), targets, out_dir, prior.user_targets);
}

struct EvaluateRequest {
  RunConfig config;
  std::string manifest_path;
  std::optional<std::string> detector_spec;  // the manifest's detector when unset
  std::string out_dir;
};

struct EvaluateOutcome {
  MetricReport report;
  nlohmann::json manifest;
};

/// Scores every target of an explain manifest: deletion and D-deletion
/// curves, min-subset, pointing game and EBPG against the target box.
/// Writes report.csv, report.json and evaluate_manifest.json.
inline EvaluateOutcome run_evaluate(const EvaluateRequest& req) {
  const std::string started = utc_timestamp();
  const RunManifest m = load_manifest(req.manifest_path);
  const fs::path base = fs::path(req.manifest_path).parent_path();
  const std::string spec = req.detector_spec ? detail::absolute_spec(*req.detector_spec) : m.detector_spec;

  std::map<std::string, ManifestImage> images;
  for (const auto& im : m.images) images[im.id] = im;

  EvaluateOutcome out;
  std::unique_ptr<DetectorSource> source;
  std::map<std::string, ImageRaster> loaded;
  for (const auto& t : m.targets) {
    MetricRow row;
    row.image_id = t.image_id;
    row.target_idx = t.target_idx;
    row.class_id = t.detection.class_id();
    const fs::path sal = base / t.saliency;
    if (t.saliency.empty() || !fs::exists(sal)) {
      row.skipped = true;
      row.note = "missing saliency";
      out.report.rows.push_back(std::move(row));
      continue;
    }
    if (!source) source = std::make_unique<DetectorSource>(spec, req.config.detector);
    auto it = loaded.find(t.image_id);
    if (it == loaded.end()) {
      const auto im = images.find(t.image_id);
      if (im == images.end()) throw InvalidArgument("manifest target refers to unknown image '" + t.image_id + "'");
      it = loaded.emplace(t.image_id, detail::load_image(im->second, *source)).first;
    }
    const ImageRaster& img = it->second;
    const SaliencyMap map = read_saliency_file(sal.string());
    if (map.width() != img.width() || map.height() != img.height()) {
      throw InvalidArgument("saliency '" + t.saliency + "' does not match the size of image '" + t.image_id + "'");
    }
    DeletionConfig dcfg = req.config.metrics;
    dcfg.target_class = t.detection.class_id();
    dcfg.target_box = t.detection.bbox();
    try {
      auto detector = source->for_image(img);
      const DeletionResult del = evaluate_deletion(img, map, *detector, dcfg);
      row.deletion = del.plain.auc;
      row.d_deletion = del.d.auc;
      row.min_subset_pct = del.min_subset_pct;
      row.d_min_subset_pct = del.d_min_subset_pct;
      row.curve = del.plain;
      row.d_curve = del.d;
    } catch (const std::exception& e) {
      row.skipped = true;
      row.note = describe(e);
      warn("target " + t.image_id + "#" + std::to_string(t.target_idx) + " skipped: " + row.note);
      out.report.rows.push_back(std::move(row));
      continue;
    }
    row.pg = pointing_game(map, dcfg.target_box);
    // Mass-based EBPG needs a non-negative map; signed maps are clipped.
    std::vector<float> clipped(map.values().begin(), map.values().end());
    for (auto& v : clipped) v = std::max(v, 0.0f);
    const SaliencyMap pos(map.width(), map.height(), std::move(clipped));
    if (pos.all_non_negative() && std::any_of(pos.values().begin(), pos.values().end(), [](float v) { return v > 0; })) {
      row.ebpg = ebpg(pos, dcfg.target_box);
    } else {
      warn("target " + t.image_id + "#" + std::to_string(t.target_idx) + ": map has no positive mass; EBPG set to 0");
      row.ebpg = 0.0;
    }
    out.report.rows.push_back(std::move(row));
  }

  fs::create_directories(req.out_dir);
  const fs::path dir(req.out_dir);
  {
    std::ofstream csv(dir / "report.csv", std::ios::trunc);
    if (!csv) throw Error("cannot write report.csv");
    csv << out.report.to_csv();
  }
  write_json_file((dir / "report.json").string(), out.report.to_json());
  out.manifest = {{"toolkit", "boxlens"},
                  {"version", kToolkitVersion},
                  {"config_hash", config_hash(req.config)},
                  {"config", to_json(req.config)},
                  {"gamma", req.config.metrics.gamma},
                  {"detector", {{"spec", spec}}},
                  {"source_manifest", fs::absolute(req.manifest_path).string()},
                  {"rows", out.report.rows.size()},
                  {"reports", {"report.csv", "report.json"}},
                  {"started_at", started},
                  {"finished_at", utc_timestamp()}};
  write_json_file((dir / "evaluate_manifest.json").string(), out.manifest);
  return out;
}

/// Writes the first `count` masks of the configured method as 8-bit gray
/// PNGs named mask_000000.png, mask_000001.png, ...
inline std::size_t run_masks(const RunConfig& cfg, const ImageRaster& img, std::size_t count,
                             const std::string& out_dir) {
  if (cfg.explain.method == Method::lime) throw ConfigError("method 'lime' does not use occlusion masks");
  const MaskBatch masks = make_masks(img, cfg.explain);
  const std::size_t n = std::min(count, masks.count());
  fs::create_directories(out_dir);
  char name[32];
  for (std::size_t i = 0; i < n; ++i) {
    std::snprintf(name, sizeof(name), "mask_%06zu.png", i);
    write_png((fs::path(out_dir) / name).string(), masks.mask(i));
  }
  return n;
}

/// Concatenates the per-target rows of several report CSVs.
inline MetricReport merge_reports(const std::vector<std::string>& paths) {
  MetricReport merged;
  for (const auto& p : paths) {
    std::ifstream in(p);
    if (!in) throw InvalidArgument("cannot open report '" + p + "'");
    MetricReport r = MetricReport::from_csv(in);
    merged.rows.insert(merged.rows.end(), r.rows.begin(), r.rows.end());
  }
  return merged;
}

}  // namespace boxlens
