#pragma once

#include <functional>
#include <random>
#include <vector>

#include "doctest.h"
#include "kinetrack/clustering.h"
#include "kinetrack/error.h"
#include "kinetrack/motion.h"
#include "kinetrack/synth.h"

namespace testing {

inline kinetrack::ErrorKind error_kind(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const kinetrack::Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return kinetrack::ErrorKind::Io;
}

// Sprite moving linearly from (x0, y0) to (x1, y1) over `length` frames.
inline kinetrack::SpriteScript walker(int id, int w, int h, int x0, int y0, int x1, int y1,
                                      int length, int cell = 4) {
  kinetrack::SpriteScript s;
  s.id = id;
  s.width = w;
  s.height = h;
  s.texture_cell = cell;
  s.path = kinetrack::interpolate_path({{0, {x0, y0, 100}}, {length - 1, {x1, y1, 100}}}, length);
  return s;
}

inline kinetrack::Scenario scene(int w, int h, int length,
                                 std::vector<kinetrack::SpriteScript> sprites) {
  kinetrack::Scenario sc;
  sc.name = "test";
  sc.width = w;
  sc.height = h;
  sc.length = length;
  sc.sprites = std::move(sprites);
  return sc;
}

// A region covering every pixel of a w x h frame.
inline kinetrack::MotionRegion whole_frame(int w, int h, int frame_index = 0) {
  kinetrack::MotionRegion r;
  r.frame_index = frame_index;
  r.bbox = {0, 0, w - 1, h - 1};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) r.mask.push_back({x, y});
  }
  return r;
}

// Two rigid groups of `per_group` points on a jittered 5x4 grid that drift
// apart vertically over frames 0..frames-1. Each group scales about its anchor with the row so
// pairwise weighted distances within a group stay constant. Candidate i
// belongs to group i / per_group.
inline std::vector<kinetrack::ClusterCandidate> two_groups(uint64_t seed, double c2,
                                                           int per_group = 20, int frames = 6) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> jitter(-2.0, 2.0);
  const double ax = 80.0;
  const double ay[2] = {50.0, 76.0};
  const double vy[2] = {-1.5, 1.5};
  std::vector<kinetrack::ClusterCandidate> out;
  for (int g = 0; g < 2; ++g) {
    for (int i = 0; i < per_group; ++i) {
      const double ox = 6.0 * (i % 5 - 2) + jitter(rng);
      const double oy = 5.0 * (i / 5 % 4) - 7.5 + jitter(rng);
      std::vector<kinetrack::PixelPoint> pts;
      for (int t = 0; t < frames; ++t) {
        const double anchor_x = ax + 2.0 * t;
        const double anchor_y = ay[g] + vy[g] * t;
        const double s = (anchor_y + c2) / (ay[g] + c2);
        pts.push_back({anchor_x + ox * s, anchor_y + oy * s});
      }
      kinetrack::ClusterCandidate c;
      c.point.x = pts.back().x;
      c.point.y = pts.back().y;
      c.point.scale = 1.6;
      c.point.frame_index = frames - 1;
      c.trajectory = kinetrack::Trajectory(0, std::move(pts));
      out.push_back(std::move(c));
    }
  }
  return out;
}

}  // namespace testing
