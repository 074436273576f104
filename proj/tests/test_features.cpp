#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "helpers.h"
#include "kinetrack/features.h"

using namespace kinetrack;

namespace {

FrameBuffer textured(int w, int h, std::uint64_t seed) {
  const auto r = render(testing::scene(w, h, 2, {testing::walker(1, w - 16, h - 16, w / 2, h / 2,
                                                                  w / 2, h / 2, 2)}),
                        seed);
  return r.frames[0];
}

FrameBuffer disk(int w, int h, double cx, double cy, double radius) {
  FrameBuffer f(w, h, 0, 0.1f);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (std::hypot(x - cx, y - cy) <= radius) f.at(x, y) = 0.9f;
    }
  }
  return f;
}

struct Extremum {
  int x;
  int y;
  double sigma;
};

// Full-frame DoG extrema at the first octave, each Gaussian level blurred
// directly from the input rather than incrementally.
std::vector<Extremum> brute_force_dog(const FrameBuffer& f, const FeatureParams& p) {
  const double k = std::pow(2.0, 1.0 / p.intervals);
  std::vector<FrameBuffer> g;
  for (int i = 0; i < p.intervals + 3; ++i) {
    const double s = p.base_sigma * std::pow(k, i);
    g.push_back(gaussian_blur(f, std::sqrt(s * s - p.assumed_blur * p.assumed_blur)));
  }
  auto dog = [&](int l, int x, int y) { return g[l + 1].at(x, y) - g[l].at(x, y); };
  std::vector<Extremum> out;
  for (int l = 1; l <= p.intervals; ++l) {
    for (int y = 1; y + 1 < f.height(); ++y) {
      for (int x = 1; x + 1 < f.width(); ++x) {
        const double v = dog(l, x, y);
        if (std::abs(v) < p.contrast_threshold) continue;
        bool extremum = true;
        for (int dl = -1; dl <= 1 && extremum; ++dl) {
          for (int dy = -1; dy <= 1 && extremum; ++dy) {
            for (int dx = -1; dx <= 1; ++dx) {
              if (!dl && !dy && !dx) continue;
              const double n = dog(l + dl, x + dx, y + dy);
              if (v > 0 ? !(v > n) : !(v < n)) {
                extremum = false;
                break;
              }
            }
          }
        }
        if (extremum) out.push_back({x, y, p.base_sigma * std::pow(k, l)});
      }
    }
  }
  return out;
}

Descriptor random_descriptor(std::mt19937_64& rng) {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  std::bernoulli_distribution sparse(0.3);
  Descriptor d;
  for (float& v : d.values) v = sparse(rng) ? u(rng) : 0.0f;
  d.values[0] += 1e-3f;
  return d;
}

double norm(const Descriptor& d) {
  double n = 0.0;
  for (float v : d.values) n += static_cast<double>(v) * v;
  return std::sqrt(n);
}

// Smooth step whose gradient points along `angle`.
FrameBuffer step_edge(int w, int h, double angle) {
  FrameBuffer f(w, h);
  const double cx = w / 2.0;
  const double cy = h / 2.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double s = (x - cx) * std::cos(angle) + (y - cy) * std::sin(angle);
      f.at(x, y) = static_cast<float>(0.5 + 0.4 * std::tanh(s / 2.0));
    }
  }
  return f;
}

}  // namespace

TEST_CASE("flat frame has no interest points") {
  const FrameBuffer f(40, 40, 0, 0.5f);
  CHECK(detect(f, {testing::whole_frame(40, 40)}).empty());
}

TEST_CASE("no regions, no points") {
  CHECK(detect(textured(60, 60, 1), {}).empty());
}

TEST_CASE("bright disk is found at its center") {
  const FeatureParams params;
  for (const auto& [cx, cy] : std::vector<std::pair<double, double>>{{20, 20}, {23, 17}, {31, 26}}) {
    const FrameBuffer f = disk(48, 44, cx, cy, 2.5);
    const auto oracle = brute_force_dog(f, params);
    const bool oracle_hit = std::any_of(oracle.begin(), oracle.end(), [&](const Extremum& e) {
      return std::hypot(e.x - cx, e.y - cy) <= 2.0;
    });
    REQUIRE(oracle_hit);
    const auto points = detect(f, {testing::whole_frame(48, 44)}, params);
    const bool hit = std::any_of(points.begin(), points.end(), [&](const InterestPoint& p) {
      return std::hypot(p.x - cx, p.y - cy) <= 2.0;
    });
    CHECK(hit);
  }
}

TEST_CASE("detector agrees with the brute-force scan at the first octave") {
  // The oracle blurs each level from the input directly while the detector
  // blurs incrementally, so marginal extrema may differ.
  FeatureParams params;
  params.octaves = 1;
  params.crop_margin = 100;
  params.edge_ratio = 0.0;
  for (std::uint64_t seed : {3, 4, 5}) {
    const FrameBuffer f = textured(56, 56, seed);
    const auto oracle = brute_force_dog(f, params);
    const auto points = detect(f, {testing::whole_frame(56, 56)}, params);
    REQUIRE(oracle.size() >= 5);
    int found = 0;
    for (const Extremum& e : oracle) {
      found += std::any_of(points.begin(), points.end(), [&](const InterestPoint& p) {
        return std::abs(p.x - e.x) <= 0.5 && std::abs(p.y - e.y) <= 0.5 &&
               std::abs(p.scale - e.sigma) < 1e-9;
      });
    }
    CHECK(found >= 0.8 * static_cast<double>(oracle.size()));
    CHECK(static_cast<double>(points.size()) <= 1.25 * static_cast<double>(oracle.size()));
  }
}

TEST_CASE("points outside every region are gated out") {
  const auto r = render(testing::scene(120, 60, 2, {testing::walker(1, 24, 32, 25, 30, 25, 30, 2),
                                                    testing::walker(2, 24, 32, 90, 30, 90, 30, 2)}),
                        5);
  const FrameBuffer& f = r.frames[0];
  MotionRegion right;
  right.bbox = {70, 10, 110, 50};
  for (int y = 10; y <= 50; ++y) {
    for (int x = 70; x <= 110; ++x) right.mask.push_back({x, y});
  }
  const auto points = detect(f, {right});
  CHECK(!points.empty());
  for (const InterestPoint& p : points) CHECK(p.x >= 70 - 2);
}

TEST_CASE("every point lies near its region and passes the contrast test") {
  const FrameBuffer f = textured(90, 70, 9);
  std::vector<MotionRegion> regions(2);
  regions[0].id = 0;
  regions[0].bbox = {10, 10, 40, 35};
  for (int y = 10; y <= 35; ++y) {
    for (int x = 10; x <= 40; ++x) {
      if ((x + y) % 5) regions[0].mask.push_back({x, y});
    }
  }
  regions[1].id = 1;
  regions[1].bbox = {50, 30, 80, 60};
  for (int y = 30; y <= 60; ++y) {
    for (int x = 50; x <= 80; ++x) regions[1].mask.push_back({x, y});
  }
  const FeatureParams params;
  const auto points = detect(f, regions, params);
  REQUIRE(!points.empty());
  for (const InterestPoint& p : points) {
    REQUIRE((p.region_id == 0 || p.region_id == 1));
    const auto& mask = regions[p.region_id].mask;
    const int px = static_cast<int>(std::lround(p.x));
    const int py = static_cast<int>(std::lround(p.y));
    const bool near = std::any_of(mask.begin(), mask.end(), [&](const Pixel& q) {
      return std::max(std::abs(q.x - px), std::abs(q.y - py)) <= params.gate_radius;
    });
    CHECK(near);
    CHECK(std::abs(p.response) >= params.contrast_threshold);
    CHECK(p.scale > 0.0);
  }
  CHECK(std::is_sorted(points.begin(), points.end(), point_order));
}

TEST_CASE("detector work stays inside region windows") {
  const FrameBuffer f = textured(100, 80, 2);
  MotionRegion r;
  r.bbox = {30, 20, 49, 39};
  for (int y = 20; y <= 39; ++y) {
    for (int x = 30; x <= 49; ++x) r.mask.push_back({x, y});
  }
  FeatureParams params;
  DetectionStats stats;
  detect(f, {r}, params, &stats);
  const int side = 20 + 2 * params.crop_margin;
  CHECK(stats.pixel_visits == side * side);
}

TEST_CASE("detect and describe are deterministic") {
  const FrameBuffer f = textured(64, 64, 4);
  const auto a = detect(f, {testing::whole_frame(64, 64)});
  const auto b = detect(f, {testing::whole_frame(64, 64)});
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].x == b[i].x);
    CHECK(a[i].y == b[i].y);
    CHECK(a[i].scale == b[i].scale);
    CHECK(describe(f, a[i]).values == describe(f, b[i]).values);
  }
}

TEST_CASE("descriptors have unit norm") {
  const FrameBuffer f = textured(64, 64, 6);
  const auto points = detect(f, {testing::whole_frame(64, 64)});
  REQUIRE(!points.empty());
  for (const InterestPoint& p : points) {
    const Descriptor d = describe(f, p);
    CHECK(std::abs(norm(d) - 1.0) < 1e-6);
    CHECK(std::all_of(d.values.begin(), d.values.end(), [](float v) { return v >= 0.0f; }));
  }
}

TEST_CASE("descriptor ignores gain and offset") {
  const FrameBuffer f = textured(64, 64, 7);
  FrameBuffer half = f;
  FrameBuffer lifted = f;
  for (float& v : half.pixels()) v *= 0.5f;
  for (float& v : lifted.pixels()) v = v * 0.5f + 0.25f;
  const InterestPoint p{31.3, 29.6, 2.26, 0, 0, 0.0};
  const Descriptor a = describe(f, p);
  const Descriptor b = describe(half, p);
  const Descriptor c = describe(lifted, p);
  for (int i = 0; i < kDescriptorSize; ++i) {
    CHECK(std::abs(a.values[i] - b.values[i]) < 1e-6);
    CHECK(std::abs(b.values[i] - c.values[i]) < 1e-5);
  }
}

TEST_CASE("step edge mass sits in the bins of its gradient direction") {
  for (double angle : {0.5 * std::numbers::pi, 0.0, std::numbers::pi / 6.0, 1.3 * std::numbers::pi}) {
    const FrameBuffer f = step_edge(64, 64, angle);
    const Descriptor d = describe(f, {32.0, 32.0, 2.0, 0, 0, 0.0});
    double theta = angle;
    if (theta < 0) theta += 2.0 * std::numbers::pi;
    const int lo = static_cast<int>(std::floor(theta / (2.0 * std::numbers::pi) * 8.0)) % 8;
    const int hi = (lo + 1) % 8;
    double total = 0.0;
    double aligned = 0.0;
    for (int i = 0; i < kDescriptorSize; ++i) {
      total += d.values[i];
      if (i % 8 == lo || i % 8 == hi) aligned += d.values[i];
    }
    INFO("angle " << angle);
    CHECK(aligned / total >= 0.6);
  }
}

TEST_CASE("flat patch is rejected") {
  const FrameBuffer f(40, 40, 0, 0.3f);
  CHECK(testing::error_kind([&] { describe(f, {20, 20, 2.0, 0, 0, 0.0}); }) == ErrorKind::FlatPatch);
}

TEST_CASE("similarity properties") {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 1000; ++trial) {
    const Descriptor a = random_descriptor(rng);
    const Descriptor b = random_descriptor(rng);
    const double ab = similarity(a, b);
    CHECK(std::abs(ab - similarity(b, a)) <= 1e-12);
    CHECK(ab >= 0.0);
    CHECK(ab <= 1.0);
    CHECK(similarity(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("orthogonal descriptors have zero similarity") {
  Descriptor a;
  Descriptor b;
  a.values[3] = 1.0f;
  b.values[77] = 1.0f;
  CHECK(similarity(a, b) == 0.0);
}
