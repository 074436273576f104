#include "kinetrack/features.h"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numbers>

#include "kinetrack/error.h"

namespace kinetrack {

bool point_order(const InterestPoint& a, const InterestPoint& b) {
  if (a.y != b.y) return a.y < b.y;
  if (a.x != b.x) return a.x < b.x;
  return a.scale < b.scale;
}

FrameBuffer gaussian_blur(const FrameBuffer& in, double sigma) {
  if (!(sigma > 0.0)) return in;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(2 * radius + 1);
  double mass = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    mass += k[i + radius];
  }
  for (double& v : k) v /= mass;

  const int w = in.width();
  const int h = in.height();
  FrameBuffer tmp(w, h, in.index());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * in.at_clamped(x + i, y);
      tmp.at(x, y) = static_cast<float>(acc);
    }
  }
  FrameBuffer out(w, h, in.index());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * tmp.at_clamped(x, y + i);
      out.at(x, y) = static_cast<float>(acc);
    }
  }
  return out;
}

namespace {

FrameBuffer crop(const FrameBuffer& frame, const BoundingBox& box) {
  FrameBuffer out(box.x_max - box.x_min + 1, box.y_max - box.y_min + 1, frame.index());
  for (int y = box.y_min; y <= box.y_max; ++y) {
    for (int x = box.x_min; x <= box.x_max; ++x) out.at(x - box.x_min, y - box.y_min) = frame.at(x, y);
  }
  return out;
}

FrameBuffer downsample(const FrameBuffer& in) {
  const int w = std::max(1, in.width() / 2);
  const int h = std::max(1, in.height() / 2);
  FrameBuffer out(w, h, in.index());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) out.at(x, y) = in.at(2 * x, 2 * y);
  }
  return out;
}

FrameBuffer subtract(const FrameBuffer& a, const FrameBuffer& b) {
  FrameBuffer out(a.width(), a.height(), a.index());
  auto o = out.pixels();
  auto pa = a.pixels();
  auto pb = b.pixels();
  for (size_t i = 0; i < o.size(); ++i) o[i] = pa[i] - pb[i];
  return out;
}

bool is_extremum(const std::vector<FrameBuffer>& dog, int level, int x, int y) {
  const float v = dog[level].at(x, y);
  const bool is_max = v > 0.0f;
  for (int dl = -1; dl <= 1; ++dl) {
    const FrameBuffer& d = dog[level + dl];
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        if (dl == 0 && dx == 0 && dy == 0) continue;
        const float n = d.at(x + dx, y + dy);
        if (is_max ? !(v > n) : !(v < n)) return false;
      }
    }
  }
  return true;
}

bool passes_edge_test(const FrameBuffer& d, int x, int y, double ratio) {
  if (ratio <= 0.0) return true;
  const double v = d.at(x, y);
  const double dxx = d.at(x + 1, y) + d.at(x - 1, y) - 2.0 * v;
  const double dyy = d.at(x, y + 1) + d.at(x, y - 1) - 2.0 * v;
  const double dxy =
      0.25 * (d.at(x + 1, y + 1) - d.at(x - 1, y + 1) - d.at(x + 1, y - 1) + d.at(x - 1, y - 1));
  const double trace = dxx + dyy;
  const double det = dxx * dyy - dxy * dxy;
  if (det <= 0.0) return false;
  return trace * trace / det < (ratio + 1.0) * (ratio + 1.0) / ratio;
}

// Vertex offset of the parabola through (-1, a), (0, b), (1, c), clamped.
double parabolic_offset(double a, double b, double c) {
  const double denom = a - 2.0 * b + c;
  if (denom == 0.0) return 0.0;
  return std::clamp(0.5 * (a - c) / denom, -0.5, 0.5);
}

// Region index per pixel after dilating every mask by `radius` in the
// chessboard metric. Contested pixels go to the closest region, then the
// lower index.
std::vector<int> dilated_labels(const std::vector<MotionRegion>& regions, int w, int h,
                                int radius) {
  std::vector<int> label(static_cast<size_t>(w) * h, -1);
  std::vector<int> dist(label.size(), -1);
  std::deque<Pixel> queue;
  for (size_t k = 0; k < regions.size(); ++k) {
    for (const Pixel& p : regions[k].mask) {
      const size_t i = static_cast<size_t>(p.y) * w + p.x;
      if (label[i] < 0) {
        label[i] = static_cast<int>(k);
        dist[i] = 0;
        queue.push_back(p);
      }
    }
  }
  // Breadth-first layers; within a layer a pixel keeps the lowest label.
  while (!queue.empty()) {
    const Pixel p = queue.front();
    queue.pop_front();
    const size_t i = static_cast<size_t>(p.y) * w + p.x;
    if (dist[i] >= radius) continue;
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        const int nx = p.x + dx;
        const int ny = p.y + dy;
        if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
        const size_t j = static_cast<size_t>(ny) * w + nx;
        if (dist[j] < 0) {
          dist[j] = dist[i] + 1;
          label[j] = label[i];
          queue.push_back({nx, ny});
        } else if (dist[j] == dist[i] + 1 && label[i] < label[j]) {
          label[j] = label[i];
        }
      }
    }
  }
  return label;
}

}  // namespace

std::vector<InterestPoint> detect(const FrameBuffer& frame, const std::vector<MotionRegion>& regions,
                                  const FeatureParams& params, DetectionStats* stats) {
  std::vector<InterestPoint> points;
  if (regions.empty()) return points;

  const int W = frame.width();
  const int H = frame.height();
  const std::vector<int> gate = dilated_labels(regions, W, H, params.gate_radius);
  const int levels = params.intervals + 3;
  const double k = std::pow(2.0, 1.0 / params.intervals);

  for (size_t r = 0; r < regions.size(); ++r) {
    const BoundingBox& bb = regions[r].bbox;
    const BoundingBox window{std::max(0, bb.x_min - params.crop_margin),
                             std::max(0, bb.y_min - params.crop_margin),
                             std::min(W - 1, bb.x_max + params.crop_margin),
                             std::min(H - 1, bb.y_max + params.crop_margin)};
    FrameBuffer base = crop(frame, window);
    if (stats) stats->pixel_visits += static_cast<std::int64_t>(base.pixels().size());

    const double initial = std::sqrt(std::max(
        0.0, params.base_sigma * params.base_sigma - params.assumed_blur * params.assumed_blur));
    FrameBuffer octave_base = gaussian_blur(base, initial);

    for (int o = 0; o < params.octaves; ++o) {
      if (octave_base.width() < 3 || octave_base.height() < 3) break;
      std::vector<FrameBuffer> gauss{octave_base};
      for (int i = 1; i < levels; ++i) {
        const double prev = params.base_sigma * std::pow(k, i - 1);
        const double next = prev * k;
        gauss.push_back(gaussian_blur(gauss.back(), std::sqrt(next * next - prev * prev)));
      }
      std::vector<FrameBuffer> dog;
      for (int i = 0; i + 1 < levels; ++i) dog.push_back(subtract(gauss[i + 1], gauss[i]));

      const int step = 1 << o;
      const int ow = octave_base.width();
      const int oh = octave_base.height();
      for (int level = 1; level <= params.intervals; ++level) {
        const FrameBuffer& d = dog[level];
        for (int y = 1; y + 1 < oh; ++y) {
          for (int x = 1; x + 1 < ow; ++x) {
            const float v = d.at(x, y);
            if (std::abs(v) < params.contrast_threshold) continue;
            if (!is_extremum(dog, level, x, y)) continue;
            if (!passes_edge_test(d, x, y, params.edge_ratio)) continue;

            const double fx =
                x + parabolic_offset(d.at(x - 1, y), v, d.at(x + 1, y));
            const double fy =
                y + parabolic_offset(d.at(x, y - 1), v, d.at(x, y + 1));
            InterestPoint p;
            p.x = window.x_min + fx * step;
            p.y = window.y_min + fy * step;
            p.scale = params.base_sigma * std::pow(k, level) * step;
            p.frame_index = frame.index();
            p.response = v;

            const int px = std::clamp(static_cast<int>(std::lround(p.x)), 0, W - 1);
            const int py = std::clamp(static_cast<int>(std::lround(p.y)), 0, H - 1);
            if (gate[static_cast<size_t>(py) * W + px] != static_cast<int>(r)) continue;
            p.region_id = regions[r].id;
            points.push_back(p);
          }
        }
      }
      octave_base = downsample(gauss[params.intervals]);
    }
  }
  std::sort(points.begin(), points.end(), point_order);
  return points;
}

namespace {

double bilinear(const FrameBuffer& f, double x, double y) {
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const double ax = x - x0;
  const double ay = y - y0;
  return (1 - ay) * ((1 - ax) * f.at_clamped(x0, y0) + ax * f.at_clamped(x0 + 1, y0)) +
         ay * ((1 - ax) * f.at_clamped(x0, y0 + 1) + ax * f.at_clamped(x0 + 1, y0 + 1));
}

}  // namespace

Descriptor describe(const FrameBuffer& frame, const InterestPoint& point) {
  constexpr int kSamples = 16;
  constexpr int kCells = 4;
  constexpr int kBins = 8;
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  const double spacing = std::max(0.5, point.scale / 2.0);
  const double window_sigma = 0.5 * kSamples;

  std::array<double, kDescriptorSize> hist{};
  double energy = 0.0;
  for (int sy = 0; sy < kSamples; ++sy) {
    for (int sx = 0; sx < kSamples; ++sx) {
      const double ox = sx - (kSamples - 1) / 2.0;
      const double oy = sy - (kSamples - 1) / 2.0;
      const double x = point.x + ox * spacing;
      const double y = point.y + oy * spacing;
      const double gx = bilinear(frame, x + spacing, y) - bilinear(frame, x - spacing, y);
      const double gy = bilinear(frame, x, y + spacing) - bilinear(frame, x, y - spacing);
      const double mag2 = gx * gx + gy * gy;
      if (mag2 == 0.0) continue;
      energy += mag2;
      const double weight = std::exp(-(ox * ox + oy * oy) / (2.0 * window_sigma * window_sigma));
      const double mag = std::sqrt(mag2) * weight;
      double theta = std::atan2(gy, gx);
      if (theta < 0.0) theta += kTwoPi;

      // Trilinear split over (cell row, cell col, orientation).
      const double cx = (sx + 0.5) / kCells - 0.5;
      const double cy = (sy + 0.5) / kCells - 0.5;
      const double ob = theta / kTwoPi * kBins;
      const int cx0 = static_cast<int>(std::floor(cx));
      const int cy0 = static_cast<int>(std::floor(cy));
      const int ob0 = static_cast<int>(std::floor(ob));
      const double fx = cx - cx0;
      const double fy = cy - cy0;
      const double fo = ob - ob0;
      for (int iy = 0; iy <= 1; ++iy) {
        const int row = cy0 + iy;
        if (row < 0 || row >= kCells) continue;
        const double wy = iy ? fy : 1.0 - fy;
        for (int ix = 0; ix <= 1; ++ix) {
          const int col = cx0 + ix;
          if (col < 0 || col >= kCells) continue;
          const double wx = ix ? fx : 1.0 - fx;
          for (int io = 0; io <= 1; ++io) {
            const int bin = (ob0 + io) % kBins;
            const double wo = io ? fo : 1.0 - fo;
            hist[(row * kCells + col) * kBins + bin] += mag * wx * wy * wo;
          }
        }
      }
    }
  }

  auto normalize = [&hist]() {
    double n2 = 0.0;
    for (double v : hist) n2 += v * v;
    const double n = std::sqrt(n2);
    if (n > 0.0) {
      for (double& v : hist) v /= n;
    }
    return n;
  };
  if (energy < 1e-12 || normalize() < 1e-12) {
    throw Error(ErrorKind::FlatPatch, "patch has no gradient energy");
  }
  for (double& v : hist) v = std::min(v, 0.2);
  normalize();

  Descriptor d;
  for (int i = 0; i < kDescriptorSize; ++i) d.values[i] = static_cast<float>(hist[i]);
  return d;
}

double similarity(const Descriptor& a, const Descriptor& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (int i = 0; i < kDescriptorSize; ++i) {
    dot += static_cast<double>(a.values[i]) * b.values[i];
    na += static_cast<double>(a.values[i]) * a.values[i];
    nb += static_cast<double>(b.values[i]) * b.values[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), 0.0, 1.0);
}

}  // namespace kinetrack
