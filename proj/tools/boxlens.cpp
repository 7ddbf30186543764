// Copyright 2026 The BoxLens Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

// boxlens command-line driver.
//
//   boxlens explain  --detector SPEC --out DIR [--config FILE] [IMAGE...]
//   boxlens explain  --manifest FILE --out DIR
//   boxlens evaluate --manifest FILE --out DIR [--config FILE]
//   boxlens masks    --out DIR [--image PNG | --detector synthetic:SCENE | --size WxH]
//   boxlens report   --out FILE [--json FILE] CSV...
//
// Every config key is also a flag, e.g. --num_masks 1000 or --rise.grid_h 8.
// Exit codes: 0 success, 1 runtime failure, 2 usage or config error.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "boxlens/config.hpp"
#include "boxlens/error.hpp"
#include "boxlens/log.hpp"
#include "boxlens/manifest.hpp"
#include "boxlens/png_io.hpp"
#include "boxlens/runner.hpp"

namespace {

using namespace boxlens;

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

/// Config-key flags registered on one subcommand.
struct ConfigFlags {
  std::string config_path;
  std::map<std::string, std::string> values;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
    for (const auto& key : flatten_keys(to_json(RunConfig{}))) {
      cmd->add_option("--" + key, values[key], "config key " + key)->group("Config keys");
    }
  }

  bool any_set(const CLI::App* cmd) const {
    for (const auto& [key, v] : values) {
      if (cmd->count("--" + key) > 0) return true;
    }
    return false;
  }

  /// `base`, then the config file, then BOXLENS_SEED, then flags.
  RunConfig resolve(const CLI::App* cmd, nlohmann::json base = nlohmann::json::object()) const {
    nlohmann::json j = std::move(base);
    if (!config_path.empty()) {
      const nlohmann::json file = read_json_file(config_path);
      if (!file.is_object()) throw ConfigError("config must be a JSON object");
      j.merge_patch(file);
    }
    if (const char* env = std::getenv("BOXLENS_SEED"); env != nullptr && *env != '\0') {
      j["seed"] = parse_seed(env);
    }
    for (const auto& [key, v] : values) {
      if (cmd->count("--" + key) > 0) set_config_value(j, key, v);
    }
    return config_from_json(j);
  }

  static std::uint64_t parse_seed(const std::string& text) {
    try {
      std::size_t used = 0;
      if (!text.empty() && text[0] == '-') throw std::invalid_argument("negative");
      const auto v = std::stoull(text, &used, 10);
      if (used != text.size()) throw std::invalid_argument("trailing characters");
      return v;
    } catch (const std::exception&) {
      throw ConfigError("BOXLENS_SEED must be a non-negative integer, got '" + text + "'");
    }
  }
};

int report_failures(const RunManifest& m) {
  std::size_t done = 0;
  for (const auto& t : m.targets) done += t.saliency.empty() ? 0 : 1;
  std::cout << "explained " << done << " target(s) across " << m.images.size()
            << " image(s)";
  if (!m.failures.empty()) std::cout << ", " << m.failures.size() << " failure(s)";
  std::cout << '\n';
  return m.failures.empty() ? kExitOk : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"boxlens: black-box saliency explanations for object detectors"};
  app.set_version_flag("--version", std::string(kToolkitVersion));
  app.require_subcommand(1);

  // explain
  auto* explain = app.add_subcommand("explain", "Compute saliency maps for detections");
  ConfigFlags explain_flags;
  explain_flags.attach(explain);
  std::string detector_spec, out_dir, targets_path, manifest_path;
  std::vector<std::string> images;
  explain->add_option("--detector", detector_spec, "synthetic:<scene.json> or exec:<command>");
  explain->add_option("--out", out_dir, "output directory")->required();
  explain->add_option("--targets", targets_path, "JSON list of detections to explain")->check(CLI::ExistingFile);
  explain->add_option("--manifest", manifest_path, "replay a previous run")->check(CLI::ExistingFile);
  explain->add_option("images", images, "input PNG images");

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Score saliency maps of an explain run");
  ConfigFlags evaluate_flags;
  evaluate_flags.attach(evaluate);
  std::string eval_manifest, eval_out, eval_detector;
  evaluate->add_option("--manifest", eval_manifest, "manifest written by explain")->required()->check(
      CLI::ExistingFile);
  evaluate->add_option("--out", eval_out, "output directory")->required();
  evaluate->add_option("--detector", eval_detector, "detector spec (default: the manifest's)");

  // masks
  auto* masks = app.add_subcommand("masks", "Export occlusion masks as PNG for inspection");
  ConfigFlags masks_flags;
  masks_flags.attach(masks);
  std::string mask_out, mask_image, mask_detector, mask_size;
  std::size_t mask_count = 16;
  masks->add_option("--out", mask_out, "output directory")->required();
  masks->add_option("--image", mask_image, "image the masks are built for")->check(CLI::ExistingFile);
  masks->add_option("--detector", mask_detector, "synthetic:<scene.json> to use the rendered scene");
  masks->add_option("--size", mask_size, "WxH for image-independent masks");
  masks->add_option("--count", mask_count, "number of masks to write")->capture_default_str();

  // report
  auto* report = app.add_subcommand("report", "Merge metric CSVs and recompute averages");
  std::vector<std::string> report_inputs;
  std::string report_out, report_json;
  report->add_option("inputs", report_inputs, "report CSV files")->required()->check(CLI::ExistingFile);
  report->add_option("--out", report_out, "merged CSV path")->required();
  report->add_option("--json", report_json, "also write the merged report as JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*explain) {
      if (!manifest_path.empty()) {
        if (explain_flags.any_set(explain) || !explain_flags.config_path.empty() || !images.empty() ||
            !targets_path.empty()) {
          std::cerr << "boxlens: --manifest replays a run; config, images and targets come from it\n";
          return kExitUsage;
        }
        const RunManifest prior = load_manifest(manifest_path);
        if (const char* env = std::getenv("BOXLENS_SEED");
            env != nullptr && *env != '\0' && ConfigFlags::parse_seed(env) != prior.config.explain.seed) {
          warn("BOXLENS_SEED ignored: replaying the manifest's seed " + std::to_string(prior.config.explain.seed));
        }
        std::optional<std::string> override_spec;
        if (!detector_spec.empty()) override_spec = detector_spec;
        return report_failures(rerun_explain(prior, out_dir, override_spec));
      }
      if (detector_spec.empty()) {
        std::cerr << "boxlens: explain needs --detector (or --manifest)\n";
        return kExitUsage;
      }
      ExplainRequest req;
      req.config = explain_flags.resolve(explain);
      req.detector_spec = detector_spec;
      req.images = images;
      req.out_dir = out_dir;
      if (!targets_path.empty()) req.targets = targets_from_json(read_json_file(targets_path));
      return report_failures(run_explain(req));
    }

    if (*evaluate) {
      EvaluateRequest req;
      req.config = evaluate_flags.resolve(evaluate, to_json(load_manifest(eval_manifest).config));
      req.manifest_path = eval_manifest;
      if (!eval_detector.empty()) req.detector_spec = eval_detector;
      req.out_dir = eval_out;
      const auto outcome = run_evaluate(req);
      std::cout << "evaluated " << outcome.report.rows.size() << " target(s)\n";
      return kExitOk;
    }

    if (*masks) {
      const RunConfig cfg = masks_flags.resolve(masks);
      const int sources = !mask_image.empty() + !mask_detector.empty() + !mask_size.empty();
      if (sources != 1) {
        std::cerr << "boxlens: masks needs exactly one of --image, --detector, --size\n";
        return kExitUsage;
      }
      ImageRaster img;
      if (!mask_image.empty()) {
        img = read_png(mask_image);
      } else if (!mask_detector.empty()) {
        const DetectorSource src(mask_detector, cfg.detector);
        if (!src.scene_image()) throw ConfigError("--detector for masks must be synthetic:<scene>");
        img = *src.scene_image();
      } else {
        int w = 0, h = 0;
        char x = 0;
        std::istringstream in(mask_size);
        if (!(in >> w >> x >> h) || x != 'x' || w < 1 || h < 1 || !in.eof()) {
          throw ConfigError("--size must look like 64x48");
        }
        img = ImageRaster(w, h, 3, 0.5f);
      }
      const auto n = run_masks(cfg, img, mask_count, mask_out);
      std::cout << "wrote " << n << " mask(s)\n";
      return kExitOk;
    }

    if (*report) {
      const MetricReport merged = merge_reports(report_inputs);
      std::ofstream out(report_out, std::ios::trunc);
      if (!out) throw Error("cannot write '" + report_out + "'");
      out << merged.to_csv();
      if (!report_json.empty()) write_json_file(report_json, merged.to_json());
      std::cout << "merged " << merged.rows.size() << " row(s)\n";
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    std::cerr << "boxlens: config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "boxlens: error: " << describe(e) << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
