#pragma once

#include <cstddef>

namespace kinetrack {

struct PixelPoint {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const PixelPoint&) const = default;
};

// Two image points at the same distance from the camera (one image row)
// whose world separation is known up to a common unit.
struct PointPair {
  PixelPoint a;
  PixelPoint b;
  double world_separation = 1.0;
};

inline constexpr double kDefaultC1 = 0.045;
inline constexpr double kDefaultC3 = 0.25;

// Linear perspective model. sigma_u(y) = c1*y + c2 and sigma_v(y) = c3*y + c2
// are the variances of the motion smoothing kernel at image row y; c2 is
// also the horizon offset used to weight inter-feature distances.
class SceneCalibration {
 public:
  SceneCalibration(double c1, double c2, double c3);

  double c1() const { return c1_; }
  double c2() const { return c2_; }
  double c3() const { return c3_; }

  // True when both variances are positive on every row in [0, height-1].
  bool positive_over(int height) const;

 private:
  double c1_;
  double c2_;
  double c3_;
};

// Solves c2 from two point pairs under the model "object pixel size at row y
// is proportional to (y + c2)". c1 and c3 pass through unchanged.
// Throws Error(DegenerateCalibration) for equal rows, equal pixel
// separations, mismatched world separations, or a negative solution.
SceneCalibration calibrate(const PointPair& pair_near, const PointPair& pair_far,
                           double c1 = kDefaultC1, double c3 = kDefaultC3);

// Relative object scale at row y under the calibrated model.
inline double perspective_scale(const SceneCalibration& cal, double y) { return y + cal.c2(); }

inline double sigma_u(const SceneCalibration& cal, double y) { return cal.c1() * y + cal.c2(); }
inline double sigma_v(const SceneCalibration& cal, double y) { return cal.c3() * y + cal.c2(); }

}  // namespace kinetrack
