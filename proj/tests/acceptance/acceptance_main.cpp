// Copyright 2026 The BoxLens Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "boxlens/explain.hpp"
#include "boxlens/lime.hpp"
#include "boxlens/metrics.hpp"
#include "boxlens/runner.hpp"
#include "boxlens/synthetic.hpp"
#include "test_util.hpp"

namespace {

using namespace boxlens;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

SaliencyMap ranking_map(int w, int h, const std::vector<std::size_t>& first) {
  std::vector<float> v(static_cast<std::size_t>(w * h), 0.0f);
  for (std::size_t i = 0; i < first.size(); ++i) v[first[i]] = static_cast<float>(first.size() - i);
  return SaliencyMap(w, h, std::move(v));
}

SyntheticScene two_same_class(double threshold) {
  SyntheticScene s;
  s.width = 64;
  s.height = 64;
  s.emission_threshold = threshold;
  s.background = {0.2f, 0.2f, 0.2f};
  for (const BBox& b : {BBox{6, 10, 26, 30}, BBox{36, 30, 58, 54}}) {
    SyntheticObject o;
    o.bbox = b;
    o.evidence = s.pixels_in(b);
    o.color = {0.9f, 0.8f, 0.7f};
    s.objects.push_back(o);
  }
  s.validate();
  return s;
}

Outcome exact_deletion_oracle() {
  const auto t0 = Clock::now();
  SyntheticScene s;
  s.width = 2;
  s.height = 2;
  s.emission_threshold = 0.0;
  SyntheticObject o;
  o.bbox = {0, 0, 2, 2};
  o.evidence = {0, 1, 2, 3};
  s.objects.push_back(o);
  s.validate();
  SyntheticDetector det(s);
  DeletionConfig cfg;
  cfg.steps = 4;
  cfg.target_box = o.bbox;
  const auto r = evaluate_deletion(s.render(), ranking_map(2, 2, o.evidence), det, cfg);
  // Oracle: after removing k of the 4 evidence pixels the visible fraction is (4-k)/4.
  std::vector<double> want;
  for (int k = 1; k <= 4; ++k) want.push_back((4.0 - k) / 4.0);
  double want_auc = 0;
  for (double v : want) want_auc += v / 4.0;
  const double secs = seconds_since(t0);
  const bool ok = r.plain.scores == want && std::abs(r.plain.auc - 0.375) <= 1e-9 &&
                  std::abs(want_auc - 0.375) <= 1e-12 && secs < 1.0;
  return {ok, fmt("curve (%.4g, %.4g, %.4g, %.4g) auc %.12f in %.3fs", r.plain.scores[0], r.plain.scores[1],
                  r.plain.scores[2], r.plain.scores[3], r.plain.auc, secs)};
}

Outcome d_vs_plain_ordering() {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int violations = 0;
  for (int t = 0; t < 200; ++t) {
    SyntheticScene s;
    s.width = 8 + static_cast<int>(u(rng) * 17);
    s.height = 8 + static_cast<int>(u(rng) * 17);
    s.num_classes = 2;
    s.emission_threshold = u(rng) < 0.5 ? 0.0 : u(rng) * 0.8;
    const int n_obj = 1 + static_cast<int>(u(rng) * 3);
    for (int k = 0; k < n_obj; ++k) {
      SyntheticObject o;
      const double x1 = std::floor(u(rng) * (s.width - 2)), y1 = std::floor(u(rng) * (s.height - 2));
      const double x2 = x1 + 2 + std::floor(u(rng) * (s.width - x1 - 1));
      const double y2 = y1 + 2 + std::floor(u(rng) * (s.height - y1 - 1));
      o.bbox = {x1, y1, std::min<double>(x2, s.width), std::min<double>(y2, s.height)};
      o.class_id = u(rng) < 0.7 ? 0 : 1;
      o.evidence = s.pixels_in(o.bbox);
      const float c = 0.4f + 0.6f * static_cast<float>(u(rng));
      o.color = {c, c, c};
      s.objects.push_back(o);
    }
    s.validate();
    SyntheticDetector det(s);
    std::vector<float> v(static_cast<std::size_t>(s.width * s.height));
    for (auto& x : v) x = static_cast<float>(u(rng));
    const auto& target = s.objects[static_cast<std::size_t>(u(rng) * n_obj)];
    DeletionConfig cfg;
    cfg.steps = 1 + static_cast<std::size_t>(u(rng) * 20);
    cfg.gamma = u(rng);
    cfg.fill = static_cast<DeletionFill>(static_cast<int>(u(rng) * 3));
    cfg.target_class = target.class_id;
    cfg.target_box = target.bbox;
    const auto r = evaluate_deletion(s.render(), SaliencyMap(s.width, s.height, v), det, cfg);
    if (r.d.auc > r.plain.auc || r.d_min_subset_pct > r.min_subset_pct) ++violations;
    for (std::size_t k = 0; k < r.d.scores.size(); ++k) {
      if (r.d.scores[k] > r.plain.scores[k]) ++violations;
    }
  }
  return {violations == 0, fmt("200 random scenes, %d violations", violations)};
}

Outcome multi_instance() {
  const auto t0 = Clock::now();
  const auto scene = two_same_class(0.5);
  const ImageRaster img = scene.render();
  SyntheticDetector det(scene);
  const auto targets = det.detect(img);
  if (targets.size() != 2) return {false, "scene did not produce two detections"};

  ExplainConfig cfg;
  cfg.num_masks = 1000;
  cfg.seed = 3;
  cfg.rise = {16, 16, 0.25};
  DeletionConfig dcfg;
  double a_del = 0, a_d_del = 0;
  double drise_mean = 0, rise_mean = 0;
  for (std::size_t k = 0; k < 2; ++k) {
    dcfg.target_box = targets[k].bbox();
    cfg.method = Method::drise;
    const auto drise = evaluate_deletion(img, explain_perturbation(img, targets[k], det, cfg), det, dcfg);
    cfg.method = Method::rise;
    const auto rise = evaluate_deletion(img, explain_perturbation(img, targets[k], det, cfg), det, dcfg);
    if (k == 0) {
      a_del = drise.plain.auc;
      a_d_del = drise.d.auc;
    }
    drise_mean += drise.d.auc / 2.0;
    rise_mean += rise.d.auc / 2.0;
  }
  const double secs = seconds_since(t0);
  const bool ok = a_d_del < 0.5 * a_del && drise_mean < rise_mean && secs < 30.0;
  return {ok, fmt("target A: d_deletion %.4f vs deletion %.4f; mean d_deletion D-RISE %.4f vs RISE %.4f; %.2fs",
                  a_d_del, a_del, drise_mean, rise_mean, secs)};
}

Outcome rise_statistics() {
  const auto t0 = Clock::now();
  const int h = 224, w = 224;
  const std::size_t n = 5000;
  const double p = 0.25;
  const auto masks = gen_rise_masks(h, w, {16, 16, p}, n, 99);
  std::vector<double> sum(static_cast<std::size_t>(h * w), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const ImageRaster m = masks.mask(i);
    const auto d = m.data();
    for (std::size_t q = 0; q < sum.size(); ++q) sum[q] += d[q];
  }
  double grand = 0;
  std::size_t within = 0;
  const double sigma = std::sqrt(p * (1 - p) / static_cast<double>(n));
  for (double s : sum) {
    const double mean = s / static_cast<double>(n);
    grand += mean;
    if (std::abs(mean - p) <= 5 * sigma) ++within;
  }
  grand /= static_cast<double>(sum.size());
  const double frac = static_cast<double>(within) / static_cast<double>(sum.size());
  const double secs = seconds_since(t0);
  const bool ok = grand >= 0.23 && grand <= 0.27 && frac >= 0.99 && secs < 20.0;
  return {ok, fmt("%dx%d, grand mean %.4f, %.2f%% of pixels within 5 sigma, %.2fs", w, h, grand, 100 * frac, secs)};
}

Outcome ebpg_closed_form() {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0;
  int hits = 0;
  for (int t = 0; t < 100; ++t) {
    const int w = 4 + static_cast<int>(u(rng) * 60), h = 4 + static_cast<int>(u(rng) * 60);
    const double x1 = u(rng) * (w - 1), y1 = u(rng) * (h - 1);
    const BBox box{x1, y1, x1 + 1 + u(rng) * (w - x1 - 1), y1 + 1 + u(rng) * (h - y1 - 1)};
    // Oracle: count pixel centers inside the box.
    std::size_t inside = 0;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double cx = x + 0.5, cy = y + 0.5;
        if (cx >= box.x1 && cx < box.x2 && cy >= box.y1 && cy < box.y2) ++inside;
      }
    }
    const float level = 0.01f + static_cast<float>(u(rng));
    const SaliencyMap uniform(w, h, std::vector<float>(static_cast<std::size_t>(w * h), level));
    const double want = static_cast<double>(inside) / static_cast<double>(w * h);
    if (inside > 0) worst = std::max(worst, std::abs(ebpg(uniform, box) - want));

    // Argmax constructed inside the box: noise everywhere, a peak at an inside pixel.
    std::vector<float> v(static_cast<std::size_t>(w * h));
    for (auto& x : v) x = static_cast<float>(u(rng));
    std::vector<std::size_t> in_px;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (box.contains_pixel(x, y)) in_px.push_back(static_cast<std::size_t>(y * w + x));
      }
    }
    if (in_px.empty()) {
      ++hits;  // no pixel center inside; nothing to construct
      continue;
    }
    v[in_px[static_cast<std::size_t>(u(rng) * static_cast<double>(in_px.size()))]] = 2.0f;
    hits += pointing_game(SaliencyMap(w, h, v), box) ? 1 : 0;
  }
  const bool ok = worst <= 1e-12 && hits == 100;
  return {ok, fmt("max |EBPG - area fraction| %.3g over 100 boxes; PG hit rate %.2f", worst, hits / 100.0)};
}

double mean_ebpg(const ImageRaster& img, const std::vector<Detection>& targets, Detector& det, ExplainConfig cfg) {
  double sum = 0;
  for (const auto& t : targets) sum += ebpg(explain_perturbation(img, t, det, cfg), t.bbox());
  return sum / static_cast<double>(targets.size());
}

Outcome mfpp_vs_rise() {
  const auto t0 = Clock::now();
  // Evidence regions are color-distinct, so superpixel fragments follow them.
  SyntheticScene s;
  s.width = 64;
  s.height = 64;
  s.emission_threshold = 0.5;
  s.background = {0.25f, 0.3f, 0.35f};
  const std::vector<std::pair<BBox, std::array<float, 3>>> objs{{{8, 8, 24, 24}, {0.95f, 0.2f, 0.2f}},
                                                                 {{38, 36, 58, 56}, {0.2f, 0.9f, 0.3f}}};
  for (const auto& [b, c] : objs) {
    SyntheticObject o;
    o.bbox = b;
    o.evidence = s.pixels_in(b);
    o.color = c;
    s.objects.push_back(o);
  }
  s.validate();
  const ImageRaster img = s.render();
  SyntheticDetector det(s);
  const auto targets = det.detect(img);
  if (targets.size() != 2) return {false, "scene did not produce two detections"};

  ExplainConfig cfg;
  cfg.seed = 5;
  cfg.rise = {16, 16, 0.25};
  cfg.mfpp = {{16, 32, 64}, 0.25, 10.0, 10};
  const auto run = [&](Method m, std::size_t n) {
    cfg.method = m;
    cfg.num_masks = n;
    return mean_ebpg(img, targets, det, cfg);
  };
  const double mfpp_500 = run(Method::dmfpp, 500), rise_500 = run(Method::drise, 500);
  const double mfpp_10k = run(Method::dmfpp, 10000), rise_10k = run(Method::drise, 10000);
  const double secs = seconds_since(t0);
  return {mfpp_500 >= rise_500,
          fmt("EBPG at N=500: D-MFPP %.4f, D-RISE %.4f (gap %.4f); at N=10000: D-MFPP %.4f, D-RISE %.4f (gap %.4f); "
              "%.1fs",
              mfpp_500, rise_500, mfpp_500 - rise_500, mfpp_10k, rise_10k, mfpp_10k - rise_10k, secs)};
}

// Weighted ridge solved by Gauss-Jordan elimination, independent of the library.
std::vector<double> ridge_oracle(const std::vector<std::vector<std::uint8_t>>& z, const std::vector<double>& y,
                                 double kernel_width, double lambda) {
  const std::size_t s = z.front().size(), d = s + 1;
  std::vector<std::vector<double>> a(d, std::vector<double>(d + 1, 0.0));
  for (std::size_t i = 0; i < z.size(); ++i) {
    double dot = 0, nz = 0;
    for (auto v : z[i]) {
      dot += v;
      nz += v * v;
    }
    const double cos = nz > 0 ? dot / (std::sqrt(nz) * std::sqrt(static_cast<double>(s))) : 0.0;
    const double pi = std::exp(-(1 - cos) * (1 - cos) / (kernel_width * kernel_width));
    std::vector<double> x(z[i].begin(), z[i].end());
    x.push_back(1.0);
    for (std::size_t r = 0; r < d; ++r) {
      for (std::size_t c = 0; c < d; ++c) a[r][c] += pi * x[r] * x[c];
      a[r][d] += pi * x[r] * y[i];
    }
  }
  for (std::size_t r = 0; r < s; ++r) a[r][r] += lambda;
  for (std::size_t col = 0; col < d; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < d; ++r) {
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    }
    std::swap(a[col], a[piv]);
    for (std::size_t r = 0; r < d; ++r) {
      if (r == col) continue;
      const double f = a[r][col] / a[col][col];
      for (std::size_t c = col; c <= d; ++c) a[r][c] -= f * a[col][c];
    }
  }
  std::vector<double> out(d);
  for (std::size_t r = 0; r < d; ++r) out[r] = a[r][d] / a[r][r];
  return out;
}

Outcome lime_recovery() {
  // Four color quadrants; SLIC with 4 segments recovers them.
  const int w = 32, h = 32;
  const std::array<std::array<float, 3>, 4> colors{{{0.9f, 0.1f, 0.1f}, {0.1f, 0.9f, 0.1f},
                                                    {0.1f, 0.1f, 0.9f}, {0.9f, 0.9f, 0.1f}}};
  std::vector<float> px;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const auto& c = colors[static_cast<std::size_t>((y >= h / 2) * 2 + (x >= w / 2))];
      px.insert(px.end(), c.begin(), c.end());
    }
  }
  const ImageRaster img(w, h, 3, px);
  LimeConfig cfg;
  cfg.segments = 4;
  cfg.samples = 1000;
  const auto seg = slic_segment(img, SlicParams{cfg.segments, cfg.compactness, cfg.iterations});
  if (seg.count != 4) return {false, fmt("segmentation produced %d segments", seg.count)};

  // Planted linear response over segment presence, weights (1, 1, 0, 0) in
  // segment order, scaled into [0, 1].
  const std::array<double, 4> planted{1, 1, 0, 0};
  std::vector<std::size_t> probe(4);
  for (std::size_t p = seg.labels.size(); p-- > 0;) probe[static_cast<std::size_t>(seg.labels[p])] = p;
  const Detection target({0, 0, double(w), double(h)}, 1.0, 0);
  testing::FunctionDetector det([&](const ImageRaster& im) {
    double y = 0;
    for (std::size_t s = 0; s < 4; ++s) {
      const std::size_t q = probe[s];
      const bool kept = im.data()[3 * q] == img.data()[3 * q] && im.data()[3 * q + 1] == img.data()[3 * q + 1] &&
                        im.data()[3 * q + 2] == img.data()[3 * q + 2];
      y += planted[s] * (kept ? 1.0 : 0.0);
    }
    std::vector<Detection> out;
    if (y > 0) out.emplace_back(target.bbox(), y / 2.0, 0);
    return out;
  });
  const auto fit = fit_lime(img, target, det, cfg, 17);
  const auto& c = fit.coefficients;
  const auto oracle = ridge_oracle(fit.samples, fit.responses, cfg.kernel_width, cfg.ridge_lambda);
  double max_dev = 0;
  for (std::size_t j = 0; j < 4; ++j) max_dev = std::max(max_dev, std::abs(c[j] - oracle[j]));
  const double top = std::min(c[0], c[1]);
  const double bottom = std::max(std::abs(c[2]), std::abs(c[3]));
  const bool rank_ok = top > std::max(c[2], c[3]);
  const bool ok = rank_ok && top >= 3.0 * bottom && max_dev <= 1e-6;
  return {ok, fmt("weights (%.4f, %.4f, %.4f, %.4f), separation %.3g, max deviation from WLS oracle %.3g", c[0], c[1],
                  c[2], c[3], bottom > 0 ? top / bottom : INFINITY, max_dev)};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome determinism() {
  testing::TempDir dir;
  {
    std::ofstream(dir.str("scene.json")) << R"({"width": 40, "height": 32, "num_classes": 2,
      "objects": [{"class_id": 0, "bbox": [3, 4, 17, 18], "color": [0.9, 0.3, 0.2]},
                  {"class_id": 1, "bbox": [22, 10, 37, 28], "color": [0.2, 0.5, 0.9]}]})";
  }
  std::size_t compared = 0, identical = 0;
  for (Method m : {Method::rise, Method::drise, Method::dmfpp, Method::dsliding, Method::lime}) {
    const std::string name(to_string(m));
    ExplainRequest req;
    req.config.explain.method = m;
    req.config.explain.num_masks = 200;
    req.config.explain.seed = 12345;
    req.config.explain.workers = 3;
    req.config.explain.rise = {8, 8, 0.25};
    req.config.explain.mfpp.scales = {8, 16};
    req.config.explain.sliding = {8, 4};
    req.config.lime.segments = 12;
    req.config.lime.samples = 150;
    req.config.lime.workers = 3;
    req.detector_spec = "synthetic:" + dir.str("scene.json");
    req.out_dir = dir.str(name + "_a");
    const auto first = run_explain(req);
    const auto replay = rerun_explain(load_manifest(dir.str(name + "_a/manifest.json")), dir.str(name + "_b"));
    for (const auto& t : first.targets) {
      ++compared;
      const auto a = slurp(dir.path() / (name + "_a") / t.saliency);
      const auto b = slurp(dir.path() / (name + "_b") / t.saliency);
      if (!a.empty() && a == b) ++identical;
    }
    if (replay.targets.size() != first.targets.size()) return {false, name + ": replay changed the target list"};
  }
  return {compared == 10 && identical == compared,
          fmt("%zu of %zu saliency files byte-identical on replay (5 methods)", identical, compared)};
}

Outcome scale_invariance() {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::vector<std::function<float(float)>> monotone{
      [](float v) { return std::exp(v / 64.0f); }, [](float v) { return std::sqrt(v); },
      [](float v) { return v * v * v; }, [](float v) { return 3.0f * v + 7.0f; },
      [](float v) { return std::log1p(v); }};
  int pg_mismatch = 0;
  double ebpg_dev = 0, ebpg_dev_real = 0;
  for (int t = 0; t < 200; ++t) {
    const int w = 8 + static_cast<int>(u(rng) * 40), h = 8 + static_cast<int>(u(rng) * 40);
    // 8-bit style integer saliency: exactly representable under the scalings below.
    std::vector<float> v(static_cast<std::size_t>(w * h));
    for (auto& x : v) x = std::floor(static_cast<float>(u(rng)) * 256.0f);
    v[static_cast<std::size_t>(u(rng) * static_cast<double>(v.size()))] = 255.0f;
    const SaliencyMap base(w, h, v);
    const double x1 = u(rng) * (w - 1), y1 = u(rng) * (h - 1);
    const BBox box{x1, y1, x1 + 1 + u(rng) * (w - x1 - 1), y1 + 1 + u(rng) * (h - y1 - 1)};
    const bool pg = pointing_game(base, box);
    const double e = ebpg(base, box);

    const std::array<float, 5> exact_scales{0.25f, 3.0f, 0.75f, 1024.0f, 5.0f / 64.0f};
    for (float c : exact_scales) {
      std::vector<float> sv(v);
      for (auto& x : sv) x *= c;
      const SaliencyMap scaled(w, h, sv);
      pg_mismatch += pointing_game(scaled, box) != pg;
      ebpg_dev = std::max(ebpg_dev, std::abs(ebpg(scaled, box) - e));
    }
    // Arbitrary real factors round each stored float; reported, not asserted.
    const float c = static_cast<float>(0.01 + 50 * u(rng));
    std::vector<float> sv(v);
    for (auto& x : sv) x *= c;
    ebpg_dev_real = std::max(ebpg_dev_real, std::abs(ebpg(SaliencyMap(w, h, sv), box) - e));
    pg_mismatch += pointing_game(SaliencyMap(w, h, sv), box) != pg;

    for (const auto& f : monotone) {
      std::vector<float> tv(v);
      for (auto& x : tv) x = f(x);
      pg_mismatch += pointing_game(SaliencyMap(w, h, tv), box) != pg;
    }
  }
  return {pg_mismatch == 0 && ebpg_dev <= 1e-12,
          fmt("200 maps: PG mismatches %d; max EBPG change %.3g under exact scalings (%.3g for arbitrary real factors)",
              pg_mismatch, ebpg_dev, ebpg_dev_real)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, Outcome (*)()>> criteria{
      {"exact deletion oracle", exact_deletion_oracle},
      {"D-variant never exceeds plain deletion", d_vs_plain_ordering},
      {"multi-instance discrimination", multi_instance},
      {"RISE mask statistics", rise_statistics},
      {"EBPG closed form and pointing game", ebpg_closed_form},
      {"D-MFPP vs D-RISE at low mask counts", mfpp_vs_rise},
      {"LIME surrogate recovery", lime_recovery},
      {"determinism via manifest replay", determinism},
      {"scale invariance of localization metrics", scale_invariance},
  };
  set_warning_handler([](const std::string&) {});
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + describe(e)};
    }
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
