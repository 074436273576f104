#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "kinetrack/image.h"
#include "kinetrack/motion.h"

namespace kinetrack {

struct InterestPoint {
  double x = 0.0;
  double y = 0.0;
  double scale = 0.0;  // Gaussian sigma in base-frame pixels
  int frame_index = 0;
  int region_id = -1;
  double response = 0.0;  // DoG value at the extremum
};

// Canonical (y, x, scale) ordering used wherever determinism matters.
bool point_order(const InterestPoint& a, const InterestPoint& b);

inline constexpr int kDescriptorSize = 128;

struct Descriptor {
  std::array<float, kDescriptorSize> values{};
};

struct FeatureParams {
  int octaves = 3;
  int intervals = 2;           // DoG levels searched per octave
  double base_sigma = 1.2;
  double assumed_blur = 0.5;   // blur already present in the input
  double contrast_threshold = 0.02;
  double edge_ratio = 10.0;    // principal-curvature ratio limit; <= 0 disables
  int gate_radius = 2;         // mask dilation used for region gating
  int crop_margin = 6;         // pixels added around each region's bbox
};

// Work counter for the region-confined detector.
struct DetectionStats {
  std::int64_t pixel_visits = 0;  // base-resolution pixels read into pyramids
};

// Scale-space extrema of a difference-of-Gaussians pyramid, computed only in
// windows around the motion regions. Output sorted by point_order.
std::vector<InterestPoint> detect(const FrameBuffer& frame, const std::vector<MotionRegion>& regions,
                                  const FeatureParams& params = {},
                                  DetectionStats* stats = nullptr);

// Upright 4x4x8 gradient-orientation histogram. Samples a 16x16 grid spaced
// scale/2 pixels apart around the point, so cells span 4 px at scale 2.
// Throws Error(FlatPatch) when the patch carries no gradient energy.
Descriptor describe(const FrameBuffer& frame, const InterestPoint& point);

// Cosine of the angle between two descriptors.
double similarity(const Descriptor& a, const Descriptor& b);

// Full-frame Gaussian blur with replicated borders; shared with the synth
// texture check and tests.
FrameBuffer gaussian_blur(const FrameBuffer& in, double sigma);

}  // namespace kinetrack
