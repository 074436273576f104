#include "kinetrack/motion.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "kinetrack/error.h"

namespace kinetrack {

DifferenceImage frame_difference(const FrameBuffer& current, const FrameBuffer& past) {
  if (current.width() != past.width() || current.height() != past.height()) {
    std::ostringstream os;
    os << "frame " << current.index() << " is " << current.width() << "x" << current.height()
       << " but frame " << past.index() << " is " << past.width() << "x" << past.height();
    throw Error(ErrorKind::DimensionMismatch, os.str());
  }
  DifferenceImage diff;
  diff.width = current.width();
  diff.height = current.height();
  diff.base_index = current.index();
  diff.gap = current.index() - past.index();
  diff.values.resize(current.pixels().size());
  const auto cur = current.pixels();
  const auto old = past.pixels();
  for (size_t i = 0; i < diff.values.size(); ++i) diff.values[i] = cur[i] - old[i];
  return diff;
}

KernelTaps gaussian_taps(double variance) {
  KernelTaps taps;
  if (!(variance > 0.0)) {
    taps.weights = {1.0};
    return taps;
  }
  taps.radius = static_cast<int>(std::floor(3.0 * std::sqrt(variance)));
  taps.weights.resize(2 * taps.radius + 1);
  for (int u = -taps.radius; u <= taps.radius; ++u) {
    taps.weights[u + taps.radius] = std::exp(-0.5 * u * u / variance);
  }
  const double mass = std::accumulate(taps.weights.begin(), taps.weights.end(), 0.0);
  for (double& w : taps.weights) w /= mass;
  return taps;
}

SmoothedResponse adaptive_smooth(const DifferenceImage& diff, const SceneCalibration& cal,
                                 Rectify rectify) {
  const int w = diff.width;
  const int h = diff.height;
  std::vector<double> source(diff.values.begin(), diff.values.end());
  if (rectify == Rectify::BeforeSmoothing) {
    for (double& v : source) v = std::abs(v);
  }

  SmoothedResponse out;
  out.width = w;
  out.height = h;
  out.values.assign(source.size(), 0.0);

  // The kernel depends only on the output row, so the 2-D sum factors into a
  // vertical pass followed by a horizontal pass, both with row-y taps.
  std::vector<double> column_pass(w);
  for (int y = 0; y < h; ++y) {
    const KernelTaps tv = gaussian_taps(sigma_v(cal, y));
    const KernelTaps tu = gaussian_taps(sigma_u(cal, y));

    std::fill(column_pass.begin(), column_pass.end(), 0.0);
    const int v_lo = std::max(-tv.radius, -y);
    const int v_hi = std::min(tv.radius, h - 1 - y);
    for (int v = v_lo; v <= v_hi; ++v) {
      const double g = tv.weights[v + tv.radius];
      const double* row = &source[static_cast<size_t>(y + v) * w];
      for (int x = 0; x < w; ++x) column_pass[x] += g * row[x];
    }

    double* dst = &out.values[static_cast<size_t>(y) * w];
    for (int x = 0; x < w; ++x) {
      const int u_lo = std::max(-tu.radius, -x);
      const int u_hi = std::min(tu.radius, w - 1 - x);
      double acc = 0.0;
      for (int u = u_lo; u <= u_hi; ++u) acc += tu.weights[u + tu.radius] * column_pass[x + u];
      dst[x] = std::abs(acc);
    }
  }
  return out;
}

namespace {

// Union-find over pixel indices, used for two-pass component labeling.
class DisjointSets {
 public:
  explicit DisjointSets(size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }

  size_t find(size_t i) {
    while (parent_[i] != i) {
      parent_[i] = parent_[parent_[i]];
      i = parent_[i];
    }
    return i;
  }

  void unite(size_t a, size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (a < b) std::swap(a, b);
    parent_[a] = b;  // smaller index is the root
  }

 private:
  std::vector<size_t> parent_;
};

}  // namespace

std::vector<MotionRegion> threshold_and_label(const SmoothedResponse& resp, double threshold,
                                              int min_area, int frame_index) {
  const int w = resp.width;
  const int h = resp.height;
  const size_t n = static_cast<size_t>(w) * h;
  std::vector<char> on(n);
  for (size_t i = 0; i < n; ++i) on[i] = resp.values[i] > threshold;

  DisjointSets sets(n);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const size_t i = static_cast<size_t>(y) * w + x;
      if (!on[i]) continue;
      // Already-visited 8-neighbours: W, NW, N, NE.
      if (x > 0 && on[i - 1]) sets.unite(i, i - 1);
      if (y > 0) {
        const size_t up = i - w;
        if (on[up]) sets.unite(i, up);
        if (x > 0 && on[up - 1]) sets.unite(i, up - 1);
        if (x + 1 < w && on[up + 1]) sets.unite(i, up + 1);
      }
    }
  }

  // Roots are the first pixel of their component in row-major order, so
  // regions come out ordered by their top-left-most pixel.
  std::vector<int> slot(n, -1);
  std::vector<MotionRegion> regions;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const size_t i = static_cast<size_t>(y) * w + x;
      if (!on[i]) continue;
      const size_t root = sets.find(i);
      if (slot[root] < 0) {
        slot[root] = static_cast<int>(regions.size());
        MotionRegion r;
        r.frame_index = frame_index;
        r.bbox = {x, y, x, y};
        regions.push_back(std::move(r));
      }
      MotionRegion& r = regions[slot[root]];
      r.mask.push_back({x, y});
      r.bbox.x_min = std::min(r.bbox.x_min, x);
      r.bbox.x_max = std::max(r.bbox.x_max, x);
      r.bbox.y_max = y;
    }
  }

  std::erase_if(regions, [&](const MotionRegion& r) { return r.area() < min_area; });
  for (size_t k = 0; k < regions.size(); ++k) regions[k].id = static_cast<int>(k);
  return regions;
}

std::vector<MotionRegion> detect_motion_regions(const FrameBuffer& current,
                                                const FrameBuffer& past,
                                                const SceneCalibration& cal,
                                                const MotionParams& params) {
  const DifferenceImage diff = frame_difference(current, past);
  const SmoothedResponse resp = adaptive_smooth(diff, cal, params.rectify);
  return threshold_and_label(resp, params.threshold, params.min_area, current.index());
}

std::vector<int> label_map(const std::vector<MotionRegion>& regions, int width, int height) {
  std::vector<int> labels(static_cast<size_t>(width) * height, -1);
  for (size_t k = 0; k < regions.size(); ++k) {
    for (const Pixel& p : regions[k].mask) {
      labels[static_cast<size_t>(p.y) * width + p.x] = static_cast<int>(k);
    }
  }
  return labels;
}

}  // namespace kinetrack
