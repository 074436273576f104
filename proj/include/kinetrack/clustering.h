#pragma once

#include <optional>
#include <span>
#include <vector>

#include "kinetrack/calibration.h"
#include "kinetrack/features.h"

namespace kinetrack {

// Contiguous per-frame positions over [first_frame, last_frame()].
class Trajectory {
 public:
  Trajectory() = default;
  Trajectory(int first_frame, std::vector<PixelPoint> points);

  int first_frame() const { return first_frame_; }
  int last_frame() const { return first_frame_ + static_cast<int>(points_.size()) - 1; }
  bool empty() const { return points_.empty(); }
  int length() const { return static_cast<int>(points_.size()); }
  const PixelPoint& at(int frame) const { return points_[frame - first_frame_]; }
  const std::vector<PixelPoint>& points() const { return points_; }

  // Restriction to [lo, hi]; empty when disjoint.
  Trajectory clipped(int lo, int hi) const;

 private:
  int first_frame_ = 0;
  std::vector<PixelPoint> points_;
};

// Variance over the common support of the perspective-weighted distance
//   w_t = |p_t - q_t| / ((y_t + y'_t) / 2 + c2).
// Throws Error(InsufficientOverlap) for fewer than two common frames and
// Error(NotComparable) when a denominator falls below epsilon_den.
double coherence(const Trajectory& a, const Trajectory& b, const SceneCalibration& cal,
                 double epsilon_den = 1.0);

// Non-throwing form for hot loops; nullopt where coherence() would throw.
std::optional<double> try_coherence(const Trajectory& a, const Trajectory& b,
                                    const SceneCalibration& cal, double epsilon_den = 1.0);

// Indices of the K candidates nearest to candidates[self] (self excluded),
// nearest first, ties broken by point_order.
std::vector<size_t> neighbor_indices(size_t self, std::span<const InterestPoint> candidates, int k);

// The K nearest candidates to `point`; candidates equal to `point` in
// position and scale are treated as the point itself and skipped.
std::vector<InterestPoint> neighbors(const InterestPoint& point,
                                     std::span<const InterestPoint> candidates, int k);

struct ClusteringParams {
  int k_neighbors = 6;
  int context_frames = 5;
  double t_coherence = 1e-4;
  double epsilon_den = 1.0;
};

// One point entering clustering: its position now, its trajectory, and the
// cluster it already belongs to (if any).
struct ClusterCandidate {
  InterestPoint point;
  Trajectory trajectory;
  std::optional<int> cluster;
};

// A group of candidate indices. Groups seeded by an existing cluster carry
// its id; new groups have no id yet.
struct ClusterGroup {
  std::optional<int> existing;
  std::vector<size_t> members;
};

// Agglomerative spatio-kinetic pass over one motion region. Points are
// visited in point_order; a point links to each neighbour (either of the two
// is among the other's K nearest) whose trajectory coherence is below
// t_coherence, unless both already sit in different clusters. Links grow clusters breadth-first from each seed.
// Returns a partition of all candidates: existing clusters first (by id),
// then new multi-point groups in creation order, then singletons.
std::vector<ClusterGroup> cluster_region(std::span<const ClusterCandidate> candidates,
                                         const SceneCalibration& cal,
                                         const ClusteringParams& params);

}  // namespace kinetrack
