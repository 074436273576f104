#include "kinetrack/calibration.h"

#include <cmath>
#include <sstream>

#include "kinetrack/error.h"

namespace kinetrack {

namespace {

[[noreturn]] void degenerate(const std::string& why) {
  throw Error(ErrorKind::DegenerateCalibration, why);
}

double pixel_separation(const PointPair& pair) {
  if (pair.a.y != pair.b.y) degenerate("points of a pair must share one image row");
  if (pair.a == pair.b) degenerate("points of a pair must differ");
  return std::abs(pair.a.x - pair.b.x);
}

}  // namespace

SceneCalibration::SceneCalibration(double c1, double c2, double c3) : c1_(c1), c2_(c2), c3_(c3) {
  if (!(c1 > 0.0) || !(c3 > 0.0)) degenerate("c1 and c3 must be positive");
  if (!(c2 >= 0.0) || !std::isfinite(c2)) degenerate("c2 must be finite and non-negative");
}

bool SceneCalibration::positive_over(int height) const {
  // Both variances are increasing in y, so row 0 is the binding case.
  return height > 0 && sigma_u(*this, 0.0) > 0.0 && sigma_v(*this, 0.0) > 0.0;
}

SceneCalibration calibrate(const PointPair& pair_near, const PointPair& pair_far, double c1,
                           double c3) {
  const double s1 = pixel_separation(pair_near);
  const double s2 = pixel_separation(pair_far);
  const double y1 = pair_near.a.y;
  const double y2 = pair_far.a.y;
  if (y1 == y2) degenerate("point pairs lie on the same image row");
  if (pair_near.world_separation != pair_far.world_separation) {
    degenerate("point pairs must have equal world separation");
  }
  // s1 / (y1 + c2) == s2 / (y2 + c2)  =>  c2 (s1 - s2) == s2 y1 - s1 y2
  const double denom = s1 - s2;
  if (denom == 0.0) degenerate("pixel separations are equal; perspective offset is undetermined");
  const double c2 = (s2 * y1 - s1 * y2) / denom;
  if (c2 < 0.0 || !std::isfinite(c2)) {
    std::ostringstream os;
    os << "solved horizon offset c2 = " << c2 << " is negative";
    degenerate(os.str());
  }
  return SceneCalibration(c1, c2, c3);
}

}  // namespace kinetrack
