#include "kinetrack/clustering.h"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <numeric>

#include "kinetrack/error.h"

namespace kinetrack {

Trajectory::Trajectory(int first_frame, std::vector<PixelPoint> points)
    : first_frame_(first_frame), points_(std::move(points)) {}

Trajectory Trajectory::clipped(int lo, int hi) const {
  lo = std::max(lo, first_frame_);
  hi = std::min(hi, last_frame());
  if (empty() || lo > hi) return {};
  return Trajectory(lo, {points_.begin() + (lo - first_frame_), points_.begin() + (hi - first_frame_ + 1)});
}

namespace {

enum class CoherenceFailure { None, InsufficientOverlap, NotComparable };

double coherence_impl(const Trajectory& a, const Trajectory& b, const SceneCalibration& cal,
                      double epsilon_den, CoherenceFailure& failure) {
  failure = CoherenceFailure::None;
  if (a.empty() || b.empty()) {
    failure = CoherenceFailure::InsufficientOverlap;
    return 0.0;
  }
  const int t1 = std::max(a.first_frame(), b.first_frame());
  const int t2 = std::min(a.last_frame(), b.last_frame());
  if (t2 - t1 + 1 < 2) {
    failure = CoherenceFailure::InsufficientOverlap;
    return 0.0;
  }
  const int n = t2 - t1 + 1;
  std::vector<double> w(n);
  for (int t = t1; t <= t2; ++t) {
    const PixelPoint& p = a.at(t);
    const PixelPoint& q = b.at(t);
    const double den = 0.5 * (p.y + q.y) + cal.c2();
    if (den < epsilon_den) {
      failure = CoherenceFailure::NotComparable;
      return 0.0;
    }
    w[t - t1] = std::hypot(p.x - q.x, p.y - q.y) / den;
  }
  // Two-pass variance; exact zero for constant w.
  const double mean = std::accumulate(w.begin(), w.end(), 0.0) / n;
  double var = 0.0;
  for (double v : w) var += (v - mean) * (v - mean);
  return var / n;
}

}  // namespace

double coherence(const Trajectory& a, const Trajectory& b, const SceneCalibration& cal,
                 double epsilon_den) {
  CoherenceFailure failure;
  const double value = coherence_impl(a, b, cal, epsilon_den, failure);
  switch (failure) {
    case CoherenceFailure::InsufficientOverlap:
      throw Error(ErrorKind::InsufficientOverlap, "trajectories share fewer than 2 frames");
    case CoherenceFailure::NotComparable:
      throw Error(ErrorKind::NotComparable, "perspective denominator below epsilon");
    case CoherenceFailure::None:
      break;
  }
  return value;
}

std::optional<double> try_coherence(const Trajectory& a, const Trajectory& b,
                                    const SceneCalibration& cal, double epsilon_den) {
  CoherenceFailure failure;
  const double value = coherence_impl(a, b, cal, epsilon_den, failure);
  if (failure != CoherenceFailure::None) return std::nullopt;
  return value;
}

namespace {

std::vector<size_t> nearest(const InterestPoint& point, std::span<const InterestPoint> candidates,
                            int k, auto&& skip) {
  std::vector<std::pair<double, size_t>> order;
  order.reserve(candidates.size());
  for (size_t i = 0; i < candidates.size(); ++i) {
    if (skip(i)) continue;
    const double dx = candidates[i].x - point.x;
    const double dy = candidates[i].y - point.y;
    order.emplace_back(dx * dx + dy * dy, i);
  }
  auto less = [&](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first < b.first;
    if (point_order(candidates[a.second], candidates[b.second])) return true;
    if (point_order(candidates[b.second], candidates[a.second])) return false;
    return a.second < b.second;
  };
  const size_t keep = std::min(order.size(), static_cast<size_t>(std::max(k, 0)));
  std::partial_sort(order.begin(), order.begin() + keep, order.end(), less);
  std::vector<size_t> out(keep);
  for (size_t i = 0; i < keep; ++i) out[i] = order[i].second;
  return out;
}

}  // namespace

std::vector<size_t> neighbor_indices(size_t self, std::span<const InterestPoint> candidates, int k) {
  return nearest(candidates[self], candidates, k, [self](size_t i) { return i == self; });
}

std::vector<InterestPoint> neighbors(const InterestPoint& point,
                                     std::span<const InterestPoint> candidates, int k) {
  const auto idx = nearest(point, candidates, k, [&](size_t i) {
    const auto& c = candidates[i];
    return c.x == point.x && c.y == point.y && c.scale == point.scale;
  });
  std::vector<InterestPoint> out;
  out.reserve(idx.size());
  for (size_t i : idx) out.push_back(candidates[i]);
  return out;
}

std::vector<ClusterGroup> cluster_region(std::span<const ClusterCandidate> candidates,
                                         const SceneCalibration& cal,
                                         const ClusteringParams& params) {
  const size_t n = candidates.size();
  std::vector<InterestPoint> points(n);
  for (size_t i = 0; i < n; ++i) points[i] = candidates[i].point;

  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return point_order(points[a], points[b]); });

  // Neighbour relation: the K nearest in either direction, nearest first.
  std::vector<std::vector<size_t>> knn(n);
  for (size_t i = 0; i < n; ++i) {
    for (size_t j : neighbor_indices(i, points, params.k_neighbors)) {
      knn[i].push_back(j);
      knn[j].push_back(i);
    }
  }
  for (size_t i = 0; i < n; ++i) {
    auto d2 = [&](size_t j) {
      const double dx = points[j].x - points[i].x;
      const double dy = points[j].y - points[i].y;
      return dx * dx + dy * dy;
    };
    auto& adj = knn[i];
    std::sort(adj.begin(), adj.end(), [&](size_t a, size_t b) {
      if (d2(a) != d2(b)) return d2(a) < d2(b);
      if (point_order(points[a], points[b])) return true;
      if (point_order(points[b], points[a])) return false;
      return a < b;
    });
    adj.erase(std::unique(adj.begin(), adj.end()), adj.end());
  }

  // Trajectories restricted to the context window around each point's frame.
  std::vector<Trajectory> context(n);
  for (size_t i = 0; i < n; ++i) {
    const int t = points[i].frame_index;
    context[i] = candidates[i].trajectory.clipped(t - params.context_frames,
                                                  t + params.context_frames);
  }
  auto coherent = [&](size_t a, size_t b) {
    const auto c = try_coherence(context[a], context[b], cal, params.epsilon_den);
    return c && *c < params.t_coherence;
  };

  // Labels: existing clusters map to 0..E-1 in id order, new groups follow.
  std::map<int, int> existing_label;
  for (const auto& c : candidates) {
    if (c.cluster) existing_label.emplace(*c.cluster, 0);
  }
  std::vector<ClusterGroup> groups;
  for (auto& [id, label] : existing_label) {
    label = static_cast<int>(groups.size());
    groups.push_back({id, {}});
  }
  std::vector<int> label(n, -1);
  for (size_t i = 0; i < n; ++i) {
    if (candidates[i].cluster) label[i] = existing_label.at(*candidates[i].cluster);
  }

  auto grow = [&](size_t seed) {
    std::deque<size_t> queue{seed};
    while (!queue.empty()) {
      const size_t u = queue.front();
      queue.pop_front();
      for (size_t q : knn[u]) {
        if (label[q] < 0 && coherent(u, q)) {
          label[q] = label[u];
          queue.push_back(q);
        }
      }
    }
  };

  for (size_t p : order) {
    if (label[p] < 0) {
      for (size_t q : knn[p]) {
        if (label[q] >= 0 && coherent(p, q)) {
          label[p] = label[q];
          break;
        }
      }
    }
    if (label[p] < 0) {
      const bool has_partner = std::any_of(knn[p].begin(), knn[p].end(),
                                           [&](size_t q) { return label[q] < 0 && coherent(p, q); });
      if (!has_partner) continue;
      label[p] = static_cast<int>(groups.size());
      groups.push_back({std::nullopt, {}});
    }
    grow(p);
  }

  for (size_t p : order) {
    if (label[p] < 0) {
      label[p] = static_cast<int>(groups.size());
      groups.push_back({std::nullopt, {}});
    }
  }
  for (size_t p : order) groups[label[p]].members.push_back(p);
  return groups;
}

}  // namespace kinetrack
