// Copyright 2026 The BoxLens Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <openssl/evp.h>

#include <array>
#include <cctype>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <string>
#include <type_traits>
#include <vector>

#include <nlohmann/json.hpp>

#include "boxlens/error.hpp"
#include "boxlens/explain.hpp"
#include "boxlens/lime.hpp"
#include "boxlens/metrics.hpp"
#include "boxlens/protocol_client.hpp"

namespace boxlens {

inline constexpr const char* kToolkitVersion = "0.1.0";

/// Bad configuration: unknown key, wrong type or out-of-range value.
class ConfigError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

/// Fully resolved run configuration.
struct RunConfig {
  ExplainConfig explain;
  LimeConfig lime;
  /// Metric settings; target class and box are filled per target.
  DeletionConfig metrics;
  double confidence_threshold = 0.7;
  double heatmap_alpha = 0.5;
  ClientOptions detector;
};

inline std::string method_list() {
  std::string out;
  for (auto name : kMethodNames) {
    if (!out.empty()) out += ", ";
    out += name;
  }
  return out;
}

inline nlohmann::json to_json(const RunConfig& c) {
  using nlohmann::json;
  json lime_fill = "mean";
  if (c.lime.fill) lime_fill = json::array({(*c.lime.fill)[0], (*c.lime.fill)[1], (*c.lime.fill)[2]});
  return {
      {"method", std::string(to_string(c.explain.method))},
      {"seed", c.explain.seed},
      {"num_masks", c.explain.num_masks},
      {"similarity", std::string(to_string(c.explain.similarity))},
      {"normalization", std::string(to_string(c.explain.normalization))},
      {"fill", c.explain.fill},
      {"workers", c.explain.workers},
      {"block_size", c.explain.block_size},
      {"confidence_threshold", c.confidence_threshold},
      {"heatmap_alpha", c.heatmap_alpha},
      {"rise", {{"grid_h", c.explain.rise.grid_h}, {"grid_w", c.explain.rise.grid_w},
                {"keep_prob", c.explain.rise.keep_prob}}},
      {"sliding", {{"window", c.explain.sliding.window}, {"stride", c.explain.sliding.stride}}},
      {"mfpp", {{"scales", c.explain.mfpp.scales}, {"keep_prob", c.explain.mfpp.keep_prob},
                {"compactness", c.explain.mfpp.compactness}, {"iterations", c.explain.mfpp.iterations}}},
      {"lime", {{"segments", c.lime.segments}, {"samples", c.lime.samples},
                {"kernel_width", c.lime.kernel_width}, {"ridge_lambda", c.lime.ridge_lambda},
                {"compactness", c.lime.compactness}, {"iterations", c.lime.iterations},
                {"fill", lime_fill}}},
      {"metrics", {{"steps", c.metrics.steps}, {"fill", std::string(to_string(c.metrics.fill))},
                   {"gamma", c.metrics.gamma}}},
      {"detector", {{"timeout_ms", c.detector.timeout.count()}, {"max_in_flight", c.detector.max_in_flight}}},
  };
}

namespace detail {

inline void reject_unknown(const nlohmann::json& j, const nlohmann::json& schema, const std::string& prefix) {
  for (const auto& [key, value] : j.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!schema.contains(key)) throw ConfigError("unknown config key '" + path + "'");
    if (schema[key].is_object()) {
      if (!value.is_object()) throw ConfigError("config key '" + path + "' must be an object");
      reject_unknown(value, schema[key], path);
    }
  }
}

template <typename T>
T get(const nlohmann::json& j, const std::string& path) {
  try {
    if constexpr (std::is_integral_v<T>) {
      if (!j.is_number_integer()) throw ConfigError("");
      if constexpr (std::is_unsigned_v<T>) {
        if (j.is_number_integer() && !j.is_number_unsigned() && j.get<std::int64_t>() < 0) throw ConfigError("");
      }
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!j.is_number()) throw ConfigError("");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!j.is_string()) throw ConfigError("");
    }
    return j.get<T>();
  } catch (const std::exception&) {
    throw ConfigError("config key '" + path + "' has the wrong type");
  }
}

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

}  // namespace detail

/// Overlays `j` onto the defaults and validates the result.
inline RunConfig config_from_json(const nlohmann::json& j) {
  using detail::get;
  using detail::require;
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig c;
  detail::reject_unknown(j, to_json(c), "");

  const auto str = [&](const nlohmann::json& o, const char* key, const std::string& path,
                       const std::string& fallback) {
    return o.contains(key) ? get<std::string>(o[key], path) : fallback;
  };
  const auto field = [&]<typename T>(const nlohmann::json& o, const char* key, const std::string& path, T& out) {
    if (o.contains(key)) out = get<T>(o[key], path);
  };

  const std::string method = str(j, "method", "method", std::string(to_string(c.explain.method)));
  const auto m = parse_method(method);
  if (!m) throw ConfigError("unknown method '" + method + "'; valid methods: " + method_list());
  c.explain.method = *m;

  field(j, "seed", "seed", c.explain.seed);
  field(j, "num_masks", "num_masks", c.explain.num_masks);
  const std::string sim = str(j, "similarity", "similarity", "auto");
  if (sim == "auto") c.explain.similarity = SimilarityChoice::automatic;
  else if (sim == "full") c.explain.similarity = SimilarityChoice::full;
  else if (sim == "adapted") c.explain.similarity = SimilarityChoice::adapted;
  else throw ConfigError("unknown similarity '" + sim + "'; valid: auto, full, adapted");
  const std::string norm = str(j, "normalization", "normalization", "mask_sum");
  if (norm == "mask_sum") c.explain.normalization = Normalization::mask_sum;
  else if (norm == "count") c.explain.normalization = Normalization::count;
  else throw ConfigError("unknown normalization '" + norm + "'; valid: mask_sum, count");
  field(j, "fill", "fill", c.explain.fill);
  field(j, "workers", "workers", c.explain.workers);
  field(j, "block_size", "block_size", c.explain.block_size);
  field(j, "confidence_threshold", "confidence_threshold", c.confidence_threshold);
  field(j, "heatmap_alpha", "heatmap_alpha", c.heatmap_alpha);

  if (j.contains("rise")) {
    const auto& r = j["rise"];
    field(r, "grid_h", "rise.grid_h", c.explain.rise.grid_h);
    field(r, "grid_w", "rise.grid_w", c.explain.rise.grid_w);
    field(r, "keep_prob", "rise.keep_prob", c.explain.rise.keep_prob);
  }
  if (j.contains("sliding")) {
    const auto& s = j["sliding"];
    field(s, "window", "sliding.window", c.explain.sliding.window);
    field(s, "stride", "sliding.stride", c.explain.sliding.stride);
  }
  if (j.contains("mfpp")) {
    const auto& f = j["mfpp"];
    if (f.contains("scales")) {
      require(f["scales"].is_array(), "config key 'mfpp.scales' must be an array");
      c.explain.mfpp.scales.clear();
      for (const auto& v : f["scales"]) c.explain.mfpp.scales.push_back(get<int>(v, "mfpp.scales"));
    }
    field(f, "keep_prob", "mfpp.keep_prob", c.explain.mfpp.keep_prob);
    field(f, "compactness", "mfpp.compactness", c.explain.mfpp.compactness);
    field(f, "iterations", "mfpp.iterations", c.explain.mfpp.iterations);
  }
  if (j.contains("lime")) {
    const auto& l = j["lime"];
    field(l, "segments", "lime.segments", c.lime.segments);
    field(l, "samples", "lime.samples", c.lime.samples);
    field(l, "kernel_width", "lime.kernel_width", c.lime.kernel_width);
    field(l, "ridge_lambda", "lime.ridge_lambda", c.lime.ridge_lambda);
    field(l, "compactness", "lime.compactness", c.lime.compactness);
    field(l, "iterations", "lime.iterations", c.lime.iterations);
    if (l.contains("fill")) {
      const auto& f = l["fill"];
      if (f.is_string() && f.get<std::string>() == "mean") {
        c.lime.fill.reset();
      } else if (f.is_number()) {
        const float g = get<float>(f, "lime.fill");
        c.lime.fill = std::array<float, 3>{g, g, g};
      } else if (f.is_array() && f.size() == 3) {
        c.lime.fill = std::array<float, 3>{get<float>(f[0], "lime.fill"), get<float>(f[1], "lime.fill"),
                                           get<float>(f[2], "lime.fill")};
      } else {
        throw ConfigError("config key 'lime.fill' must be \"mean\", a number or an [r,g,b] array");
      }
    }
  }
  if (j.contains("metrics")) {
    const auto& mt = j["metrics"];
    field(mt, "steps", "metrics.steps", c.metrics.steps);
    const std::string fill = str(mt, "fill", "metrics.fill", "black");
    const auto df = parse_deletion_fill(fill);
    if (!df) throw ConfigError("unknown metrics.fill '" + fill + "'; valid: black, gray, mean");
    c.metrics.fill = *df;
    field(mt, "gamma", "metrics.gamma", c.metrics.gamma);
  }
  if (j.contains("detector")) {
    const auto& d = j["detector"];
    if (d.contains("timeout_ms")) {
      c.detector.timeout = std::chrono::milliseconds(get<std::int64_t>(d["timeout_ms"], "detector.timeout_ms"));
    }
    field(d, "max_in_flight", "detector.max_in_flight", c.detector.max_in_flight);
  }

  const auto in01 = [](double v) { return v >= 0.0 && v <= 1.0; };
  require(c.explain.num_masks >= 1, "num_masks must be >= 1");
  require(in01(c.explain.fill), "fill must be in [0,1]");
  require(c.explain.workers >= 1, "workers must be >= 1");
  require(c.explain.block_size >= 1, "block_size must be >= 1");
  require(in01(c.confidence_threshold), "confidence_threshold must be in [0,1]");
  require(in01(c.heatmap_alpha), "heatmap_alpha must be in [0,1]");
  require(c.explain.rise.grid_h >= 1 && c.explain.rise.grid_w >= 1, "rise grid must be at least 1x1");
  require(in01(c.explain.rise.keep_prob), "rise.keep_prob must be in [0,1]");
  require(c.explain.sliding.window >= 1 && c.explain.sliding.stride >= 1, "sliding window and stride must be >= 1");
  require(!c.explain.mfpp.scales.empty(), "mfpp.scales must not be empty");
  for (std::size_t i = 0; i < c.explain.mfpp.scales.size(); ++i) {
    require(c.explain.mfpp.scales[i] >= 1, "mfpp.scales entries must be >= 1");
    require(i == 0 || c.explain.mfpp.scales[i] > c.explain.mfpp.scales[i - 1],
            "mfpp.scales must be strictly increasing");
  }
  require(in01(c.explain.mfpp.keep_prob), "mfpp.keep_prob must be in [0,1]");
  require(c.explain.mfpp.compactness > 0.0 && c.lime.compactness > 0.0, "compactness must be positive");
  require(c.explain.mfpp.iterations >= 1 && c.lime.iterations >= 1, "iterations must be >= 1");
  require(c.lime.segments >= 2, "lime.segments must be >= 2");
  require(c.lime.samples >= 1, "lime.samples must be >= 1");
  require(c.lime.kernel_width > 0.0, "lime.kernel_width must be positive");
  require(c.lime.ridge_lambda >= 0.0, "lime.ridge_lambda must be non-negative");
  if (c.lime.fill) {
    for (float v : *c.lime.fill) require(in01(v), "lime.fill must be in [0,1]");
  }
  require(c.metrics.steps >= 1, "metrics.steps must be >= 1");
  require(in01(c.metrics.gamma), "metrics.gamma must be in [0,1]");
  require(c.detector.timeout.count() > 0, "detector.timeout_ms must be positive");
  require(c.detector.max_in_flight >= 1, "detector.max_in_flight must be >= 1");
  c.lime.workers = c.explain.workers;
  return c;
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("'" + path + "' is not valid JSON: " + e.what());
  }
}

inline RunConfig load_config(const std::string& path) { return config_from_json(read_json_file(path)); }

/// Dotted paths of every leaf key, e.g. "rise.grid_h".
inline std::vector<std::string> flatten_keys(const nlohmann::json& j, const std::string& prefix = "") {
  std::vector<std::string> out;
  for (const auto& [key, value] : j.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (value.is_object()) {
      auto sub = flatten_keys(value, path);
      out.insert(out.end(), sub.begin(), sub.end());
    } else {
      out.push_back(path);
    }
  }
  return out;
}

/// Sets a dotted key from command-line text, typed after the default value
/// at that path. Arrays take comma-separated lists.
inline void set_config_value(nlohmann::json& j, const std::string& path, const std::string& text) {
  const nlohmann::json defaults = to_json(RunConfig{});
  const nlohmann::json::json_pointer ptr("/" + [&] {
    std::string p = path;
    for (auto& ch : p) if (ch == '.') ch = '/';
    return p;
  }());
  if (!defaults.contains(ptr)) throw ConfigError("unknown config key '" + path + "'");
  const auto& ref = defaults[ptr];
  nlohmann::json value;
  const auto parse_scalar = [&](const std::string& s, const nlohmann::json& kind) -> nlohmann::json {
    if (kind.is_string()) {
      // lime.fill also takes a gray level
      if (!s.empty() && (std::isdigit(static_cast<unsigned char>(s[0])) || s[0] == '.')) {
        try {
          return nlohmann::json::parse(s);
        } catch (const std::exception&) {
        }
      }
      return s;
    }
    try {
      auto v = nlohmann::json::parse(s);
      if (!v.is_number() && !v.is_boolean()) throw ConfigError("");
      return v;
    } catch (const std::exception&) {
      throw ConfigError("value '" + s + "' for '" + path + "' is not a number");
    }
  };
  if (ref.is_array()) {
    value = nlohmann::json::array();
    std::size_t start = 0;
    while (start <= text.size()) {
      const auto comma = text.find(',', start);
      const std::string part = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
      value.push_back(parse_scalar(part, ref.empty() ? nlohmann::json(0) : ref[0]));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
  } else {
    value = parse_scalar(text, ref);
  }
  j[ptr] = value;
}

inline std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 failed");
  }
  std::string out;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof(buf), "%02x", md[i]);
    out += buf;
  }
  return out;
}

/// Hash of the canonical (key-sorted, compact) resolved configuration.
inline std::string config_hash(const RunConfig& c) { return sha256_hex(to_json(c).dump()); }

}  // namespace boxlens
