// Copyright 2026 The BoxLens Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "boxlens/error.hpp"
#include "boxlens/metrics.hpp"

namespace boxlens {

/// One evaluated (image, target) pair. Skipped rows carry no metric values.
struct MetricRow {
  std::string image_id;
  int target_idx = 0;
  int class_id = 0;
  bool skipped = false;
  std::string note;  // reason for skipping
  double deletion = 0.0;
  double d_deletion = 0.0;
  double min_subset_pct = 100.0;
  double d_min_subset_pct = 100.0;
  bool pg = false;
  double ebpg = 0.0;
  DeletionCurve curve;
  DeletionCurve d_curve;
};

struct MetricSummary {
  std::size_t count = 0;
  double deletion = 0.0;
  double d_deletion = 0.0;
  double min_subset_pct = 0.0;
  double d_min_subset_pct = 0.0;
  double pg = 0.0;  // hit rate
  double ebpg = 0.0;
};

inline const char* kReportHeader =
    "image_id,target_idx,class_id,deletion,d_deletion,min_subset_pct,d_min_subset_pct,pg,ebpg,status";

class MetricReport {
 public:
  std::vector<MetricRow> rows;

  /// Per-class averages over non-skipped rows.
  std::map<int, MetricSummary> per_class() const {
    std::map<int, MetricSummary> out;
    for (const auto& r : rows) {
      if (!r.skipped) add(out[r.class_id], r);
    }
    for (auto& [c, s] : out) finish(s);
    return out;
  }

  MetricSummary overall() const {
    MetricSummary s;
    for (const auto& r : rows) {
      if (!r.skipped) add(s, r);
    }
    finish(s);
    return s;
  }

  /// CSV: one row per target, then `mean` rows per class and overall
  /// (class_id `all`). With no targets only the header is written.
  std::string to_csv() const {
    std::ostringstream out;
    out << kReportHeader << '\n';
    for (const auto& r : rows) {
      out << r.image_id << ',' << r.target_idx << ',' << r.class_id << ',';
      if (r.skipped) {
        out << ",,,,,,skipped\n";
        continue;
      }
      out << num(r.deletion) << ',' << num(r.d_deletion) << ',' << num(r.min_subset_pct) << ','
          << num(r.d_min_subset_pct) << ',' << (r.pg ? 1 : 0) << ',' << num(r.ebpg) << ",ok\n";
    }
    const auto write_summary = [&](const std::string& cls, const MetricSummary& s) {
      out << "mean,," << cls << ',' << num(s.deletion) << ',' << num(s.d_deletion) << ','
          << num(s.min_subset_pct) << ',' << num(s.d_min_subset_pct) << ',' << num(s.pg) << ','
          << num(s.ebpg) << ',' << s.count << '\n';
    };
    if (overall().count > 0) {
      for (const auto& [c, s] : per_class()) write_summary(std::to_string(c), s);
      write_summary("all", overall());
    }
    return out.str();
  }

  nlohmann::json to_json() const {
    nlohmann::json rows_json = nlohmann::json::array();
    for (const auto& r : rows) {
      nlohmann::json j = {{"image_id", r.image_id},
                          {"target_idx", r.target_idx},
                          {"class_id", r.class_id},
                          {"status", r.skipped ? "skipped" : "ok"}};
      if (r.skipped) {
        j["note"] = r.note;
      } else {
        j["deletion"] = r.deletion;
        j["d_deletion"] = r.d_deletion;
        j["min_subset_pct"] = r.min_subset_pct;
        j["d_min_subset_pct"] = r.d_min_subset_pct;
        j["pg"] = r.pg;
        j["ebpg"] = r.ebpg;
        j["deletion_curve"] = {{"fractions", r.curve.fractions}, {"scores", r.curve.scores}};
        j["d_deletion_curve"] = {{"fractions", r.d_curve.fractions}, {"scores", r.d_curve.scores}};
      }
      rows_json.push_back(std::move(j));
    }
    nlohmann::json classes = nlohmann::json::object();
    for (const auto& [c, s] : per_class()) classes[std::to_string(c)] = summary_json(s);
    return {{"rows", rows_json}, {"per_class", classes}, {"overall", summary_json(overall())}};
  }

  /// Parses per-target rows of a CSV written by to_csv(); summary rows are ignored.
  static MetricReport from_csv(std::istream& in) {
    MetricReport rep;
    std::string line;
    if (!std::getline(in, line) || line != kReportHeader) throw InvalidArgument("not a metric report CSV");
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::vector<std::string> f;
      std::stringstream ss(line);
      std::string cell;
      while (std::getline(ss, cell, ',')) f.push_back(cell);
      if (!line.empty() && line.back() == ',') f.emplace_back();
      if (f.size() != 10) throw InvalidArgument("malformed report row: " + line);
      if (f[0] == "mean" && f[1].empty()) continue;
      MetricRow r;
      try {
        r.image_id = f[0];
        r.target_idx = std::stoi(f[1]);
        r.class_id = std::stoi(f[2]);
        r.skipped = f[9] == "skipped";
        if (!r.skipped) {
          r.deletion = std::stod(f[3]);
          r.d_deletion = std::stod(f[4]);
          r.min_subset_pct = std::stod(f[5]);
          r.d_min_subset_pct = std::stod(f[6]);
          r.pg = f[7] == "1";
          r.ebpg = std::stod(f[8]);
        }
      } catch (const std::logic_error&) {
        throw InvalidArgument("malformed report row: " + line);
      }
      rep.rows.push_back(std::move(r));
    }
    return rep;
  }

 private:
  static std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
  }
  static void add(MetricSummary& s, const MetricRow& r) {
    ++s.count;
    s.deletion += r.deletion;
    s.d_deletion += r.d_deletion;
    s.min_subset_pct += r.min_subset_pct;
    s.d_min_subset_pct += r.d_min_subset_pct;
    s.pg += r.pg ? 1.0 : 0.0;
    s.ebpg += r.ebpg;
  }
  static void finish(MetricSummary& s) {
    if (s.count == 0) return;
    const double n = static_cast<double>(s.count);
    s.deletion /= n;
    s.d_deletion /= n;
    s.min_subset_pct /= n;
    s.d_min_subset_pct /= n;
    s.pg /= n;
    s.ebpg /= n;
  }
  static nlohmann::json summary_json(const MetricSummary& s) {
    return {{"count", s.count},         {"deletion", s.deletion},
            {"d_deletion", s.d_deletion}, {"min_subset_pct", s.min_subset_pct},
            {"d_min_subset_pct", s.d_min_subset_pct}, {"pg", s.pg},
            {"ebpg", s.ebpg}};
  }
};

}  // namespace boxlens
