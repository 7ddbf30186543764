// Copyright 2026 The BoxLens Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "boxlens/config.hpp"
#include "boxlens/detection.hpp"
#include "boxlens/error.hpp"
#include "boxlens/protocol.hpp"

namespace boxlens {

/// Image id used for the rendered scene of a synthetic detector.
inline constexpr const char* kSceneImageId = "scene";

struct ManifestImage {
  std::string id;
  std::string path;  // empty for the rendered synthetic scene
  int width = 0;
  int height = 0;
};

struct ManifestTarget {
  std::string image_id;
  int target_idx = 0;
  Detection detection;
  std::string saliency;  // relative to the manifest directory; empty if not produced
  std::string heatmap;
};

struct ManifestFailure {
  std::string image_id;
  std::optional<int> target_idx;
  std::string error;
};

struct RunManifest {
  std::string version = kToolkitVersion;
  RunConfig config;
  std::string detector_spec;
  nlohmann::json detector_record;
  bool user_targets = false;
  std::vector<ManifestImage> images;
  std::vector<ManifestTarget> targets;
  std::vector<ManifestFailure> failures;
  std::string started_at;
  std::string finished_at;
};

inline std::string utc_timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline nlohmann::json to_json(const RunManifest& m) {
  using nlohmann::json;
  json images = json::array();
  for (const auto& im : m.images) {
    images.push_back({{"id", im.id}, {"path", im.path}, {"width", im.width}, {"height", im.height}});
  }
  json targets = json::array();
  for (const auto& t : m.targets) {
    targets.push_back({{"image_id", t.image_id},
                       {"target_idx", t.target_idx},
                       {"detection", protocol::to_json(t.detection)},
                       {"saliency", t.saliency},
                       {"heatmap", t.heatmap}});
  }
  json failures = json::array();
  for (const auto& f : m.failures) {
    json e = {{"image_id", f.image_id}, {"error", f.error}};
    e["target_idx"] = f.target_idx ? json(*f.target_idx) : json(nullptr);
    failures.push_back(std::move(e));
  }
  const json cfg = to_json(m.config);
  return {{"toolkit", "boxlens"},
          {"version", m.version},
          {"config_hash", config_hash(m.config)},
          {"config", cfg},
          {"method", cfg["method"]},
          {"seed", m.config.explain.seed},
          {"detector", {{"spec", m.detector_spec}, {"record", m.detector_record}}},
          {"user_targets", m.user_targets},
          {"images", images},
          {"targets", targets},
          {"failures", failures},
          {"started_at", m.started_at},
          {"finished_at", m.finished_at}};
}

inline RunManifest manifest_from_json(const nlohmann::json& j) {
  try {
    RunManifest m;
    m.version = j.at("version").get<std::string>();
    m.config = config_from_json(j.at("config"));
    if (j.contains("config_hash") && j["config_hash"].get<std::string>() != config_hash(m.config)) {
      throw InvalidArgument("manifest config_hash does not match its config");
    }
    m.detector_spec = j.at("detector").at("spec").get<std::string>();
    m.detector_record = j.at("detector").value("record", nlohmann::json::object());
    m.user_targets = j.value("user_targets", false);
    for (const auto& im : j.at("images")) {
      m.images.push_back({im.at("id").get<std::string>(), im.at("path").get<std::string>(),
                          im.at("width").get<int>(), im.at("height").get<int>()});
    }
    for (const auto& t : j.at("targets")) {
      m.targets.push_back({t.at("image_id").get<std::string>(), t.at("target_idx").get<int>(),
                           protocol::parse_detection(t.at("detection")), t.value("saliency", ""),
                           t.value("heatmap", "")});
    }
    for (const auto& f : j.value("failures", nlohmann::json::array())) {
      ManifestFailure fail{f.at("image_id").get<std::string>(), std::nullopt, f.at("error").get<std::string>()};
      if (f.contains("target_idx") && !f["target_idx"].is_null()) fail.target_idx = f["target_idx"].get<int>();
      m.failures.push_back(std::move(fail));
    }
    m.started_at = j.value("started_at", "");
    m.finished_at = j.value("finished_at", "");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed manifest: ") + e.what());
  } catch (const ProtocolError& e) {
    throw InvalidArgument(std::string("malformed manifest target: ") + e.what());
  }
}

inline void write_json_file(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << j.dump(2) << '\n';
  if (!out) throw Error("failed writing '" + path + "'");
}

inline RunManifest load_manifest(const std::string& path) { return manifest_from_json(read_json_file(path)); }

}  // namespace boxlens
