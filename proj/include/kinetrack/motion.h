#pragma once

#include <cstdint>
#include <vector>

#include "kinetrack/calibration.h"
#include "kinetrack/image.h"

namespace kinetrack {

struct Pixel {
  int x = 0;
  int y = 0;
  auto operator<=>(const Pixel&) const = default;
};

struct BoundingBox {
  int x_min = 0;
  int y_min = 0;
  int x_max = -1;  // inclusive
  int y_max = -1;

  bool empty() const { return x_max < x_min || y_max < y_min; }
  bool contains(double x, double y) const {
    return x >= x_min && x <= x_max && y >= y_min && y <= y_max;
  }
  bool operator==(const BoundingBox&) const = default;
};

// Signed pixel-wise difference of two frames `gap` steps apart.
struct DifferenceImage {
  int width = 0;
  int height = 0;
  int base_index = 0;
  int gap = 0;
  std::vector<float> values;

  float at(int x, int y) const { return values[static_cast<size_t>(y) * width + x]; }
};

struct SmoothedResponse {
  int width = 0;
  int height = 0;
  std::vector<double> values;

  double at(int x, int y) const { return values[static_cast<size_t>(y) * width + x]; }
};

// A maximal 8-connected set of above-threshold pixels. `mask` is sorted in
// row-major order; `id` is unique within its frame.
struct MotionRegion {
  int id = 0;
  int frame_index = 0;
  std::vector<Pixel> mask;
  BoundingBox bbox;

  int area() const { return static_cast<int>(mask.size()); }
};

// Where to take the absolute value of the difference signal.
enum class Rectify {
  BeforeSmoothing,  // smooth |dI|
  AfterSmoothing,   // |smooth(dI)|
};

struct MotionParams {
  int frame_gap = 2;
  double threshold = 0.04;
  int min_area = 25;
  Rectify rectify = Rectify::BeforeSmoothing;
};

DifferenceImage frame_difference(const FrameBuffer& current, const FrameBuffer& past);

// One axis of the position-dependent Gaussian: taps for offsets
// -radius..radius, truncated at three standard deviations and renormalized
// to unit mass. `variance` <= 0 gives the unit impulse.
struct KernelTaps {
  int radius = 0;
  std::vector<double> weights;
};
KernelTaps gaussian_taps(double variance);

// Smooths the difference with an axis-aligned Gaussian whose variances are
// sigma_u(y), sigma_v(y) at the output row y. Out-of-frame taps read zero.
SmoothedResponse adaptive_smooth(const DifferenceImage& diff, const SceneCalibration& cal,
                                 Rectify rectify = Rectify::BeforeSmoothing);

std::vector<MotionRegion> threshold_and_label(const SmoothedResponse& resp, double threshold,
                                              int min_area, int frame_index = 0);

std::vector<MotionRegion> detect_motion_regions(const FrameBuffer& current,
                                                const FrameBuffer& past,
                                                const SceneCalibration& cal,
                                                const MotionParams& params);

// Dense label map: region index into `regions` per pixel, -1 where no region.
std::vector<int> label_map(const std::vector<MotionRegion>& regions, int width, int height);

}  // namespace kinetrack
