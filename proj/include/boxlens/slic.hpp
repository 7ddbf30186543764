// Copyright 2026 The BoxLens Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <queue>
#include <tuple>
#include <utility>
#include <vector>

#include "boxlens/error.hpp"
#include "boxlens/image.hpp"

namespace boxlens {

/// A partition of an image into `count` labelled segments 0..count-1.
struct Segmentation {
  int width = 0;
  int height = 0;
  std::vector<int> labels;  // row-major
  int count = 0;

  int at(int x, int y) const noexcept {
    return labels[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
                  static_cast<std::size_t>(x)];
  }

  std::vector<std::size_t> segment_sizes() const {
    std::vector<std::size_t> sizes(static_cast<std::size_t>(count), 0);
    for (int l : labels) ++sizes[static_cast<std::size_t>(l)];
    return sizes;
  }
};

struct SlicParams {
  int segments = 100;
  double compactness = 10.0;
  int iterations = 10;
};

namespace detail {

/// Labels 4-connected components of `labels`; returns the component count.
inline int connected_components(int w, int h, const std::vector<int>& labels,
                                std::vector<int>& comp) {
  comp.assign(labels.size(), -1);
  int n = 0;
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < labels.size(); ++start) {
    if (comp[start] >= 0) continue;
    comp[start] = n;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      const int x = static_cast<int>(p % static_cast<std::size_t>(w));
      const int y = static_cast<int>(p / static_cast<std::size_t>(w));
      const std::size_t nb[4] = {p - 1, p + 1, p - static_cast<std::size_t>(w),
                                 p + static_cast<std::size_t>(w)};
      const bool ok[4] = {x > 0, x + 1 < w, y > 0, y + 1 < h};
      for (int k = 0; k < 4; ++k) {
        if (ok[k] && comp[nb[k]] < 0 && labels[nb[k]] == labels[p]) {
          comp[nb[k]] = n;
          stack.push_back(nb[k]);
        }
      }
    }
    ++n;
  }
  return n;
}

/// Splits labels into 4-connected segments, then merges segments smaller
/// than `min_size` (and, while more than `max_count` remain, the smallest
/// ones) into their largest adjacent segment. Final ids follow row-major
/// order of first appearance.
inline Segmentation enforce_connectivity(int w, int h, const std::vector<int>& labels,
                                         std::size_t min_size, std::size_t max_count) {
  std::vector<int> comp;
  const int n = connected_components(w, h, labels, comp);

  std::vector<std::size_t> size(static_cast<std::size_t>(n), 0);
  for (int c : comp) ++size[static_cast<std::size_t>(c)];

  std::vector<std::vector<int>> adj(static_cast<std::size_t>(n));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * static_cast<std::size_t>(w) +
                            static_cast<std::size_t>(x);
      const int a = comp[p];
      if (x + 1 < w && comp[p + 1] != a) {
        adj[static_cast<std::size_t>(a)].push_back(comp[p + 1]);
        adj[static_cast<std::size_t>(comp[p + 1])].push_back(a);
      }
      if (y + 1 < h && comp[p + static_cast<std::size_t>(w)] != a) {
        const int b = comp[p + static_cast<std::size_t>(w)];
        adj[static_cast<std::size_t>(a)].push_back(b);
        adj[static_cast<std::size_t>(b)].push_back(a);
      }
    }
  }

  std::vector<int> parent(static_cast<std::size_t>(n));
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int c) {
    while (parent[static_cast<std::size_t>(c)] != c) {
      parent[static_cast<std::size_t>(c)] =
          parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(c)])];
      c = parent[static_cast<std::size_t>(c)];
    }
    return c;
  };

  using Entry = std::pair<std::size_t, int>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;
  for (int c = 0; c < n; ++c) heap.emplace(size[static_cast<std::size_t>(c)], c);
  std::size_t roots = static_cast<std::size_t>(n);

  while (!heap.empty() && roots > 1) {
    const auto [sz, c] = heap.top();
    heap.pop();
    if (find(c) != c || size[static_cast<std::size_t>(c)] != sz) continue;
    if (sz >= min_size && roots <= max_count) break;

    int best = -1;
    for (int nb : adj[static_cast<std::size_t>(c)]) {
      const int r = find(nb);
      if (r == c) continue;
      if (best < 0 || size[static_cast<std::size_t>(r)] > size[static_cast<std::size_t>(best)] ||
          (size[static_cast<std::size_t>(r)] == size[static_cast<std::size_t>(best)] && r < best)) {
        best = r;
      }
    }
    if (best < 0) continue;
    parent[static_cast<std::size_t>(c)] = best;
    size[static_cast<std::size_t>(best)] += sz;
    auto& dst = adj[static_cast<std::size_t>(best)];
    auto& src = adj[static_cast<std::size_t>(c)];
    dst.insert(dst.end(), src.begin(), src.end());
    src.clear();
    src.shrink_to_fit();
    std::sort(dst.begin(), dst.end());
    dst.erase(std::unique(dst.begin(), dst.end()), dst.end());
    heap.emplace(size[static_cast<std::size_t>(best)], best);
    --roots;
  }

  Segmentation seg;
  seg.width = w;
  seg.height = h;
  seg.labels.resize(labels.size());
  std::vector<int> remap(static_cast<std::size_t>(n), -1);
  for (std::size_t p = 0; p < labels.size(); ++p) {
    const int r = find(comp[p]);
    if (remap[static_cast<std::size_t>(r)] < 0) remap[static_cast<std::size_t>(r)] = seg.count++;
    seg.labels[p] = remap[static_cast<std::size_t>(r)];
  }
  return seg;
}

}  // namespace detail

/// SLIC superpixels: k-means in (L, a, b, x, y) from a regular grid of
/// roughly `k` seeds with spacing S = sqrt(HW/k), using the distance
/// d_lab + (compactness / S) * d_xy, a fixed number of iterations and a
/// connectivity pass. The result has between 1 and 2k segments.
inline Segmentation slic_segment(const ImageRaster& img, const SlicParams& params) {
  const int k = params.segments;
  if (k < 1) throw InvalidArgument("slic_segment: segment count must be >= 1");
  const int w = img.width();
  const int h = img.height();
  const std::size_t n = img.pixel_count();
  if (static_cast<std::size_t>(k) > n) {
    throw InvalidArgument("slic_segment: more segments requested than pixels");
  }
  if (params.iterations < 0) throw InvalidArgument("slic_segment: negative iteration count");
  if (!(params.compactness >= 0.0)) throw InvalidArgument("slic_segment: negative compactness");

  const std::vector<Lab> lab = rgb_to_lab(to_rgb(img));
  const double step = std::sqrt(static_cast<double>(n) / k);

  const int ny = std::clamp(static_cast<int>(std::lround(h / step)), 1, std::min(h, k));
  const int nx = std::clamp(static_cast<int>(std::lround(static_cast<double>(k) / ny)), 1, w);
  const int centers = nx * ny;

  struct Center {
    double l, a, b, x, y;
  };
  std::vector<Center> ctr(static_cast<std::size_t>(centers));
  for (int iy = 0; iy < ny; ++iy) {
    for (int ix = 0; ix < nx; ++ix) {
      const double cx = (ix + 0.5) * w / nx - 0.5;
      const double cy = (iy + 0.5) * h / ny - 0.5;
      const int px = std::clamp(static_cast<int>(std::lround(cx)), 0, w - 1);
      const int py = std::clamp(static_cast<int>(std::lround(cy)), 0, h - 1);
      const Lab& c = lab[static_cast<std::size_t>(py) * static_cast<std::size_t>(w) +
                         static_cast<std::size_t>(px)];
      ctr[static_cast<std::size_t>(iy * nx + ix)] = {c.l, c.a, c.b, cx, cy};
    }
  }

  std::vector<int> labels(n);
  for (int y = 0; y < h; ++y) {
    const int iy = std::min(ny - 1, y * ny / h);
    for (int x = 0; x < w; ++x) {
      const int ix = std::min(nx - 1, x * nx / w);
      labels[static_cast<std::size_t>(y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x)] =
          iy * nx + ix;
    }
  }

  const double spatial_weight = params.compactness / step;
  const double half_x = std::max(step, static_cast<double>(w) / nx);
  const double half_y = std::max(step, static_cast<double>(h) / ny);
  std::vector<double> dist(n);
  for (int it = 0; it < params.iterations; ++it) {
    std::fill(dist.begin(), dist.end(), std::numeric_limits<double>::infinity());
    for (int c = 0; c < centers; ++c) {
      const Center& cc = ctr[static_cast<std::size_t>(c)];
      const int x0 = std::max(0, static_cast<int>(std::floor(cc.x - half_x)));
      const int x1 = std::min(w - 1, static_cast<int>(std::ceil(cc.x + half_x)));
      const int y0 = std::max(0, static_cast<int>(std::floor(cc.y - half_y)));
      const int y1 = std::min(h - 1, static_cast<int>(std::ceil(cc.y + half_y)));
      for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
          const std::size_t p = static_cast<std::size_t>(y) * static_cast<std::size_t>(w) +
                                static_cast<std::size_t>(x);
          const Lab& v = lab[p];
          const double dl = v.l - cc.l, da = v.a - cc.a, db = v.b - cc.b;
          const double dx = x - cc.x, dy = y - cc.y;
          const double d = std::sqrt(dl * dl + da * da + db * db) +
                           spatial_weight * std::sqrt(dx * dx + dy * dy);
          if (d < dist[p]) {
            dist[p] = d;
            labels[p] = c;
          }
        }
      }
    }

    std::vector<Center> sum(static_cast<std::size_t>(centers), Center{0, 0, 0, 0, 0});
    std::vector<std::size_t> cnt(static_cast<std::size_t>(centers), 0);
    for (std::size_t p = 0; p < n; ++p) {
      auto& s = sum[static_cast<std::size_t>(labels[p])];
      s.l += lab[p].l;
      s.a += lab[p].a;
      s.b += lab[p].b;
      s.x += static_cast<double>(p % static_cast<std::size_t>(w));
      s.y += static_cast<double>(p / static_cast<std::size_t>(w));
      ++cnt[static_cast<std::size_t>(labels[p])];
    }
    for (int c = 0; c < centers; ++c) {
      const std::size_t m = cnt[static_cast<std::size_t>(c)];
      if (m == 0) continue;
      const auto& s = sum[static_cast<std::size_t>(c)];
      const double inv = 1.0 / static_cast<double>(m);
      ctr[static_cast<std::size_t>(c)] = {s.l * inv, s.a * inv, s.b * inv, s.x * inv, s.y * inv};
    }
  }

  const double quarter = step / 4.0;
  const auto min_size = std::max<std::size_t>(1, static_cast<std::size_t>(quarter * quarter));
  return detail::enforce_connectivity(w, h, labels, min_size, 2 * static_cast<std::size_t>(k));
}

inline Segmentation slic_segment(const ImageRaster& img, int segments,
                                 double compactness = 10.0, int iterations = 10) {
  return slic_segment(img, SlicParams{segments, compactness, iterations});
}

}  // namespace boxlens
