#include "kinetrack/tracking.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <iterator>
#include <map>
#include <ostream>
#include <stdexcept>

#include "json.hpp"

namespace kinetrack {

Trajectory FeatureTrack::recent_trajectory() const {
  size_t begin = appearances.size() - 1;
  while (begin > 0 && appearances[begin - 1].frame + 1 == appearances[begin].frame) --begin;
  std::vector<PixelPoint> pts;
  pts.reserve(appearances.size() - begin);
  for (size_t i = begin; i < appearances.size(); ++i) pts.push_back(appearances[i].position);
  return Trajectory(appearances[begin].frame, std::move(pts));
}

std::optional<PixelPoint> FeatureTrack::velocity() const {
  constexpr size_t kSpan = 4;
  if (appearances.size() < 2) return std::nullopt;
  const Appearance& a = appearances[appearances.size() - std::min(kSpan, appearances.size())];
  const Appearance& b = appearances.back();
  const double dt = b.frame - a.frame;
  return PixelPoint{(b.position.x - a.position.x) / dt, (b.position.y - a.position.y) / dt};
}

SearchArea::SearchArea(int frame_index, int width, int height)
    : frame_index_(frame_index),
      width_(width),
      height_(height),
      bits_(static_cast<size_t>(width) * height, 0) {}

void SearchArea::add(const std::vector<Pixel>& pixels) {
  for (const Pixel& p : pixels) {
    auto& b = bits_[static_cast<size_t>(p.y) * width_ + p.x];
    if (!b) {
      b = 1;
      ++count_;
    }
  }
}

void SearchArea::include_region(const MotionRegion& region) {
  add(region.mask);
  included_.push_back(region.id);
}

bool SearchArea::contains_pixel(int x, int y) const {
  if (x < 0 || y < 0 || x >= width_ || y >= height_) return false;
  return bits_[static_cast<size_t>(y) * width_ + x] != 0;
}

bool SearchArea::contains(const InterestPoint& point) const {
  if (std::find(included_.begin(), included_.end(), point.region_id) != included_.end() &&
      point.frame_index == frame_index_) {
    return true;
  }
  return contains_pixel(static_cast<int>(std::lround(point.x)),
                        static_cast<int>(std::lround(point.y)));
}

SearchArea build_search_area(const MotionRegion& prior_region,
                             const std::vector<MotionRegion>& next_regions, int width, int height) {
  const int next_frame = next_regions.empty() ? prior_region.frame_index + 1
                                              : next_regions.front().frame_index;
  SearchArea area(next_frame, width, height);
  area.add(prior_region.mask);
  for (const MotionRegion& r : next_regions) {
    // Cheap reject on bounding boxes before the pixel test.
    if (r.bbox.x_max < prior_region.bbox.x_min || r.bbox.x_min > prior_region.bbox.x_max ||
        r.bbox.y_max < prior_region.bbox.y_min || r.bbox.y_min > prior_region.bbox.y_max) {
      continue;
    }
    const bool touches = std::any_of(r.mask.begin(), r.mask.end(), [&](const Pixel& p) {
      return std::binary_search(prior_region.mask.begin(), prior_region.mask.end(), p,
                                [](const Pixel& a, const Pixel& b) {
                                  return a.y != b.y ? a.y < b.y : a.x < b.x;
                                });
    });
    if (touches) area.include_region(r);
  }
  return area;
}

namespace {

double displacement(const FeatureTrack& track, const InterestPoint& p) {
  const PixelPoint& q = track.latest().position;
  return std::hypot(p.x - q.x, p.y - q.y);
}

double median(std::vector<double> v) {
  const size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  if (v.size() % 2 == 1) return v[mid];
  const double hi = v[mid];
  return 0.5 * (*std::max_element(v.begin(), v.begin() + mid) + hi);
}

MotionRegion unite(const MotionRegion& a, const MotionRegion& b) {
  MotionRegion out = a;
  out.mask.clear();
  std::merge(a.mask.begin(), a.mask.end(), b.mask.begin(), b.mask.end(), std::back_inserter(out.mask),
             [](const Pixel& p, const Pixel& q) { return p.y != q.y ? p.y < q.y : p.x < q.x; });
  out.bbox = {std::min(a.bbox.x_min, b.bbox.x_min), std::min(a.bbox.y_min, b.bbox.y_min),
              std::max(a.bbox.x_max, b.bbox.x_max), std::max(a.bbox.y_max, b.bbox.y_max)};
  return out;
}

constexpr size_t kVelocitySpan = 4;

// Whether `p` at `frame` passes the limited-velocity gate of `track`.
// `velocity` is the track's cluster velocity, when known.
bool in_gate(const FeatureTrack& track, const std::optional<PixelPoint>& velocity,
             const InterestPoint& p, int frame, const TrackerParams& params) {
  const int gap = frame - track.last_seen();
  const PixelPoint& q = track.latest().position;
  const auto v = velocity ? velocity : track.velocity();
  if (!v) {
    return std::hypot(p.x - q.x, p.y - q.y) <= std::min(params.max_speed * gap, params.max_search_radius);
  }
  const double radius =
      std::min(params.position_tolerance + params.speed_tolerance * gap, params.max_search_radius);
  if (std::hypot(p.x - (q.x + v->x * gap), p.y - (q.y + v->y * gap)) > radius) return false;
  if (!velocity) return true;
  const Appearance& a =
      track.appearances[track.appearances.size() - std::min(kVelocitySpan, track.appearances.size())];
  const double dt = frame - a.frame;
  return std::hypot((p.x - a.position.x) / dt - velocity->x, (p.y - a.position.y) / dt - velocity->y) <=
         params.velocity_tolerance;
}

}  // namespace

std::optional<size_t> match_feature(const FeatureTrack& track, std::span<const Detection> candidates,
                                    double t_feature) {
  std::optional<size_t> best;
  double best_sim = -1.0;
  double best_disp = 0.0;
  for (size_t i = 0; i < candidates.size(); ++i) {
    const double sim = similarity(track.latest().descriptor, candidates[i].descriptor);
    const double disp = displacement(track, candidates[i].point);
    bool better = false;
    if (!best || sim > best_sim) {
      better = true;
    } else if (sim == best_sim) {
      better = disp < best_disp ||
               (disp == best_disp && point_order(candidates[i].point, candidates[*best].point));
    }
    if (better) {
      best = i;
      best_sim = sim;
      best_disp = disp;
    }
  }
  if (!best || best_sim < t_feature) return std::nullopt;
  return best;
}

std::uint64_t descriptor_hash(const Descriptor& d) {
  std::uint64_t h = 1469598103934665603ull;
  const auto* bytes = reinterpret_cast<const unsigned char*>(d.values.data());
  for (size_t i = 0; i < sizeof(float) * d.values.size(); ++i) {
    h ^= bytes[i];
    h *= 1099511628211ull;
  }
  return h;
}

Tracker::Tracker(SceneCalibration cal, TrackerParams params, int width, int height)
    : cal_(cal), params_(params), width_(width), height_(height) {}

size_t Tracker::live_cluster_count() const {
  return static_cast<size_t>(std::count_if(clusters_.begin(), clusters_.end(),
                                           [](const ClusterState& c) { return !c.retired_at; }));
}

const FeatureTrack* Tracker::find_track(TrackId id) const {
  if (id < 0 || static_cast<size_t>(id) >= tracks_.size()) return nullptr;
  return &tracks_[id];
}

void Tracker::append(FeatureTrack& track, int frame, const Detection& det) {
  track.appearances.push_back({frame, {det.point.x, det.point.y}, det.point.scale, det.descriptor});
  track.region_id = det.point.region_id;
  if (track.cluster_id >= 0) {
    audit_.push_back({AuditEvent::Kind::Append, frame, track.id, track.cluster_id, -1,
                      track.latest().position, descriptor_hash(det.descriptor)});
  }
}

ClusterState& Tracker::new_cluster(int frame, const MotionRegion& footprint,
                                   std::optional<ClusterId> parent) {
  ClusterState c;
  c.id = static_cast<ClusterId>(clusters_.size());
  c.created_at = frame;
  c.footprint = footprint;
  c.region_id = footprint.id;
  c.parent = parent;
  clusters_.push_back(std::move(c));
  return clusters_.back();
}

StepReport Tracker::step(int frame_index, const std::vector<MotionRegion>& regions,
                         const std::vector<Detection>& detections) {
  if (frame_index <= last_frame_) {
    throw std::invalid_argument("tracker frames must arrive in increasing order");
  }
  for (size_t i = 0; i < regions.size(); ++i) {
    if (regions[i].id != static_cast<int>(i)) {
      throw std::invalid_argument("region ids must equal their position in the list");
    }
  }

  StepReport report;
  report.frame = frame_index;
  report.regions = static_cast<int>(regions.size());
  report.detections = static_cast<int>(detections.size());

  matched_now_.assign(tracks_.size(), 0);
  for (ClusterState& c : clusters_) c.matched_now = 0;

  std::vector<char> used(detections.size(), 0);
  match_tracks(frame_index, regions, detections, used, report);
  reassign_clusters(frame_index, regions, report);

  for (size_t j = 0; j < detections.size(); ++j) {
    if (used[j]) continue;
    FeatureTrack t;
    t.id = next_pending_id_++;
    append(t, frame_index, detections[j]);
    pending_.push_back(std::move(t));
    ++report.new_pending;
  }

  admit_pending(frame_index, regions, report);
  retire(frame_index, report);

  prev_regions_ = regions;
  last_frame_ = frame_index;
  emit_rows(frame_index);
  report.live_clusters = static_cast<int>(live_cluster_count());
  return report;
}

void Tracker::match_tracks(int frame, const std::vector<MotionRegion>& regions,
                           const std::vector<Detection>& detections, std::vector<char>& used,
                           StepReport& report) {
  struct Proposal {
    double sim;
    double disp;
    int kind;  // 0 model track, 1 pending track
    size_t index;
    size_t detection;
    bool inside;
  };
  std::vector<Proposal> proposals;

  std::vector<size_t> subset;
  std::vector<Detection> gathered;
  auto propose = [&](const FeatureTrack& track, const std::optional<PixelPoint>& velocity,
                     const SearchArea& area, int kind, size_t index) {
    subset.clear();
    gathered.clear();
    for (size_t j = 0; j < detections.size(); ++j) {
      if (!area.contains(detections[j].point)) continue;
      if (!in_gate(track, velocity, detections[j].point, frame, params_)) continue;
      subset.push_back(j);
      gathered.push_back(detections[j]);
    }
    const auto best = match_feature(track, gathered, params_.t_feature);
    if (!best) return;
    const size_t j = subset[*best];
    proposals.push_back({similarity(track.latest().descriptor, detections[j].descriptor),
                         displacement(track, detections[j].point), kind, index, j, true});
  };

  for (const ClusterState& c : clusters_) {
    if (c.retired_at) continue;
    const SearchArea area = build_search_area(c.footprint, regions, width_, height_);
    for (TrackId id : c.members) {
      const FeatureTrack& t = tracks_[id];
      if (t.retired) continue;
      propose(t, c.velocity, area, 0, static_cast<size_t>(id));
    }
  }

  std::map<int, SearchArea> pending_areas;
  for (size_t i = 0; i < pending_.size(); ++i) {
    const FeatureTrack& t = pending_[i];
    if (t.last_seen() != last_frame_ || t.region_id < 0 ||
        t.region_id >= static_cast<int>(prev_regions_.size())) {
      continue;
    }
    auto it = pending_areas.find(t.region_id);
    if (it == pending_areas.end()) {
      it = pending_areas
               .emplace(t.region_id,
                        build_search_area(prev_regions_[t.region_id], regions, width_, height_))
               .first;
    }
    propose(t, std::nullopt, it->second, 1, i);
  }

  // Each detection goes to its most similar claimant.
  std::sort(proposals.begin(), proposals.end(), [](const Proposal& a, const Proposal& b) {
    if (a.sim != b.sim) return a.sim > b.sim;
    if (a.disp != b.disp) return a.disp < b.disp;
    if (a.kind != b.kind) return a.kind < b.kind;
    return a.index < b.index;
  });
  std::vector<char> pending_matched(pending_.size(), 0);
  for (const Proposal& p : proposals) {
    if (used[p.detection]) continue;
    used[p.detection] = 1;
    const Detection& det = detections[p.detection];
    if (p.kind == 0) {
      FeatureTrack& t = tracks_[p.index];
      append(t, frame, det);
      matched_now_[t.id] = 1;
      clusters_[t.cluster_id].matched_now++;
      matches_.push_back({frame, t.id, t.cluster_id, t.latest().position, p.inside});
    } else {
      FeatureTrack& t = pending_[p.index];
      append(t, frame, det);
      pending_matched[p.index] = 1;
      matches_.push_back({frame, t.id, -1, t.latest().position, p.inside});
    }
    ++report.matched;
  }

  for (ClusterState& c : clusters_) {
    if (c.retired_at || c.matched_now < params_.velocity_min_matches) continue;
    std::vector<double> vx;
    std::vector<double> vy;
    for (TrackId id : c.members) {
      if (!matched_now_[id]) continue;
      if (const auto v = tracks_[id].velocity()) {
        vx.push_back(v->x);
        vy.push_back(v->y);
      }
    }
    if (static_cast<int>(vx.size()) < params_.velocity_min_matches) continue;
    c.velocity = PixelPoint{median(vx), median(vy)};
  }

  // Pending features must match every frame to stay candidates.
  std::vector<FeatureTrack> kept;
  kept.reserve(pending_.size());
  for (size_t i = 0; i < pending_.size(); ++i) {
    if (pending_matched[i]) kept.push_back(std::move(pending_[i]));
  }
  pending_ = std::move(kept);
}

void Tracker::reassign_clusters(int frame, const std::vector<MotionRegion>& regions,
                                StepReport& report) {
  const std::vector<int> labels = label_map(regions, width_, height_);
  auto overlap_counts = [&](const MotionRegion& footprint) {
    std::vector<int> overlap(regions.size(), 0);
    for (const Pixel& p : footprint.mask) {
      const int l = labels[static_cast<size_t>(p.y) * width_ + p.x];
      if (l >= 0) ++overlap[l];
    }
    return overlap;
  };

  const size_t existing = clusters_.size();
  for (size_t ci = 0; ci < existing; ++ci) {
    if (clusters_[ci].retired_at) continue;
    std::vector<int> count(regions.size(), 0);
    for (TrackId id : clusters_[ci].members) {
      if (matched_now_[id] && tracks_[id].region_id >= 0) ++count[tracks_[id].region_id];
    }
    const std::vector<int> overlap = overlap_counts(clusters_[ci].footprint);

    int best = -1;
    for (size_t r = 0; r < regions.size(); ++r) {
      if (count[r] == 0) continue;
      if (best < 0 || count[r] > count[best] ||
          (count[r] == count[best] && overlap[r] > overlap[best])) {
        best = static_cast<int>(r);
      }
    }

    if (best < 0) {
      // No evidence this frame: keep the association, flagged stale, and let
      // the footprint follow whichever region now covers it most.
      ClusterState& c = clusters_[ci];
      if (!c.stale) {
        c.stale = true;
        c.stale_since = frame;
      }
      c.region_id.reset();
      c.split_streak = 0;
      int follow = -1;
      for (size_t r = 0; r < regions.size(); ++r) {
        if (overlap[r] > 0 && (follow < 0 || overlap[r] > overlap[follow])) follow = static_cast<int>(r);
      }
      if (follow >= 0) c.footprint = regions[follow];
      continue;
    }

    {
      ClusterState& c = clusters_[ci];
      c.stale = false;
      c.stale_since = -1;
      c.region_id = best;
      c.footprint = regions[best];
      // Tracks may straddle several regions; the footprint covers all of them.
      for (size_t r = 0; r < regions.size(); ++r) {
        if (count[r] > 0 && static_cast<int>(r) != best) c.footprint = unite(c.footprint, regions[r]);
      }
    }

    std::vector<int> strong;
    for (size_t r = 0; r < regions.size(); ++r) {
      if (count[r] >= params_.split_min_features) strong.push_back(static_cast<int>(r));
    }
    if (strong.size() < 2) {
      clusters_[ci].split_streak = 0;
      continue;
    }
    if (++clusters_[ci].split_streak < params_.split_confirm_frames) continue;

    clusters_[ci].split_streak = 0;
    for (int r : strong) {
      if (r == best) continue;
      const ClusterId parent_id = clusters_[ci].id;
      ClusterState& child = new_cluster(frame, regions[r], parent_id);
      const ClusterId child_id = child.id;
      ClusterState& parent = clusters_[ci];
      std::vector<TrackId> remaining;
      for (TrackId id : parent.members) {
        if (matched_now_[id] && tracks_[id].region_id == r) {
          tracks_[id].cluster_id = child_id;
          clusters_[child_id].members.push_back(id);
          clusters_[child_id].matched_now++;
          parent.matched_now--;
        } else {
          remaining.push_back(id);
        }
      }
      parent.members = std::move(remaining);
      audit_.push_back({AuditEvent::Kind::Split, frame, -1, child_id, parent_id, {}, 0});
      ++report.splits;
    }
  }
}

void Tracker::admit_pending(int frame, const std::vector<MotionRegion>& regions,
                            StepReport& report) {
  const ClusteringParams& cp = params_.clustering;
  auto ready = [&](const FeatureTrack& t) {
    if (t.last_seen() != frame) return false;
    const Trajectory traj = t.recent_trajectory().clipped(frame - cp.context_frames, frame);
    if (traj.length() < params_.pending_min_frames) return false;
    const PixelPoint& a = traj.points().front();
    const PixelPoint& b = traj.points().back();
    return std::hypot(b.x - a.x, b.y - a.y) >= params_.min_motion;
  };
  auto as_point = [frame](const FeatureTrack& t) {
    InterestPoint p;
    p.x = t.latest().position.x;
    p.y = t.latest().position.y;
    p.scale = t.latest().scale;
    p.frame_index = frame;
    p.region_id = t.region_id;
    return p;
  };

  std::vector<char> admitted(pending_.size(), 0);
  for (size_t r = 0; r < regions.size(); ++r) {
    std::vector<ClusterCandidate> candidates;
    std::vector<size_t> pending_index;  // candidate -> pending_ index, or npos
    std::vector<TrackId> model_index;
    for (size_t i = 0; i < pending_.size(); ++i) {
      const FeatureTrack& t = pending_[i];
      if (t.region_id != static_cast<int>(r) || !ready(t)) continue;
      candidates.push_back({as_point(t), t.recent_trajectory(), std::nullopt});
      pending_index.push_back(i);
      model_index.push_back(-1);
    }
    if (candidates.empty()) continue;
    for (const FeatureTrack& t : tracks_) {
      if (!matched_now_[t.id] || t.region_id != static_cast<int>(r)) continue;
      if (clusters_[t.cluster_id].retired_at) continue;
      candidates.push_back({as_point(t), t.recent_trajectory(), t.cluster_id});
      pending_index.push_back(static_cast<size_t>(-1));
      model_index.push_back(t.id);
    }

    const std::vector<ClusterGroup> groups = cluster_region(candidates, cal_, cp);
    for (const ClusterGroup& g : groups) {
      std::optional<ClusterId> target = g.existing;
      if (!target) {
        if (static_cast<int>(g.members.size()) < params_.min_new_cluster) continue;
        ClusterState& c = new_cluster(frame, regions[r], std::nullopt);
        audit_.push_back({AuditEvent::Kind::CreateCluster, frame, -1, c.id, -1, {}, 0});
        ++report.clusters_created;
        target = c.id;
      }
      for (size_t m : g.members) {
        if (pending_index[m] == static_cast<size_t>(-1)) continue;
        FeatureTrack t = pending_[pending_index[m]];
        admitted[pending_index[m]] = 1;
        t.id = static_cast<TrackId>(tracks_.size());
        t.cluster_id = *target;
        audit_.push_back({AuditEvent::Kind::Admit, frame, t.id, t.cluster_id, -1, {}, 0});
        for (const Appearance& a : t.appearances) {
          audit_.push_back({AuditEvent::Kind::Append, a.frame, t.id, t.cluster_id, -1, a.position,
                            descriptor_hash(a.descriptor)});
        }
        ClusterState& c = clusters_[*target];
        c.members.push_back(t.id);
        c.matched_now++;
        if (c.stale) {
          c.stale = false;
          c.stale_since = -1;
          c.region_id = static_cast<int>(r);
          c.footprint = regions[r];
        }
        tracks_.push_back(std::move(t));
        matched_now_.push_back(1);
        ++report.admitted;
      }
    }
  }

  std::vector<FeatureTrack> kept;
  for (size_t i = 0; i < pending_.size(); ++i) {
    if (admitted[i]) continue;
    if (frame - pending_[i].first_seen() > params_.pending_timeout) continue;
    kept.push_back(std::move(pending_[i]));
  }
  pending_ = std::move(kept);
}

void Tracker::retire(int frame, StepReport& report) {
  for (FeatureTrack& t : tracks_) {
    if (t.retired || frame - t.last_seen() < params_.track_retirement) continue;
    t.retired = true;
    audit_.push_back({AuditEvent::Kind::RetireTrack, frame, t.id, t.cluster_id, -1, {}, 0});
  }
  for (ClusterState& c : clusters_) {
    if (c.retired_at || !c.stale || frame - c.stale_since < params_.cluster_retirement) continue;
    const bool all_retired = std::all_of(c.members.begin(), c.members.end(),
                                         [&](TrackId id) { return tracks_[id].retired; });
    if (!all_retired) continue;
    c.retired_at = frame;
    audit_.push_back({AuditEvent::Kind::RetireCluster, frame, -1, c.id, -1, {}, 0});
    ++report.clusters_retired;
  }
}

void Tracker::emit_rows(int frame) {
  rows_.clear();
  for (const ClusterState& c : clusters_) {
    if (c.retired_at) continue;
    std::vector<TrackId> members = c.members;
    std::sort(members.begin(), members.end());
    for (TrackId id : members) {
      const FeatureTrack& t = tracks_[id];
      if (t.retired) continue;
      rows_.push_back({frame, c.id, id, t.latest().position, matched_now_[id] != 0});
    }
  }
}

void write_track_header(std::ostream& out) { out << "frame,cluster_id,track_id,x,y,matched\n"; }

void write_track_rows(std::ostream& out, std::span<const TrackRow> rows) {
  char buf[128];
  for (const TrackRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%d,%d,%.3f,%.3f,%d\n", r.frame, r.cluster, r.track,
                  r.position.x, r.position.y, r.matched ? 1 : 0);
    out << buf;
  }
}

void write_cluster_summary(std::ostream& out, const Tracker& tracker) {
  std::map<ClusterId, std::vector<ClusterId>> children;
  for (const ClusterState& c : tracker.clusters()) {
    if (c.parent) children[*c.parent].push_back(c.id);
  }
  for (const ClusterState& c : tracker.clusters()) {
    nlohmann::ordered_json j;
    j["cluster_id"] = c.id;
    j["created_at"] = c.created_at;
    j["retired_at"] = c.retired_at ? nlohmann::ordered_json(*c.retired_at) : nullptr;
    j["members"] = c.members.size();
    int retired = 0;
    for (TrackId id : c.members) retired += tracker.tracks()[id].retired ? 1 : 0;
    j["tracks_retired"] = retired;
    j["parent"] = c.parent ? nlohmann::ordered_json(*c.parent) : nullptr;
    j["children"] = children[c.id];
    out << j.dump() << '\n';
  }
}

}  // namespace kinetrack
