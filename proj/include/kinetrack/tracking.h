#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "kinetrack/calibration.h"
#include "kinetrack/clustering.h"
#include "kinetrack/features.h"
#include "kinetrack/motion.h"

namespace kinetrack {

using TrackId = int;
using ClusterId = int;

struct Appearance {
  int frame = 0;
  PixelPoint position;
  double scale = 0.0;
  Descriptor descriptor;
};

// One interest point followed through time. The appearance history is
// append-only; a track that stops matching keeps its history.
struct FeatureTrack {
  TrackId id = -1;
  std::vector<Appearance> appearances;
  ClusterId cluster_id = -1;  // -1 while pending admission to a cluster
  int region_id = -1;         // region of the latest appearance, in that frame
  bool retired = false;

  int first_seen() const { return appearances.front().frame; }
  int last_seen() const { return appearances.back().frame; }
  const Appearance& latest() const { return appearances.back(); }

  // Latest run of consecutive-frame appearances.
  Trajectory recent_trajectory() const;
  // Mean displacement per frame over the last few appearances; nullopt for
  // a single appearance.
  std::optional<PixelPoint> velocity() const;
};

// Bitmap over the frame plus the ids of the next-frame regions merged in.
class SearchArea {
 public:
  SearchArea(int frame_index, int width, int height);

  int frame_index() const { return frame_index_; }
  int width() const { return width_; }
  int height() const { return height_; }
  size_t pixel_count() const { return count_; }
  const std::vector<int>& included_regions() const { return included_; }

  void add(const std::vector<Pixel>& pixels);
  void include_region(const MotionRegion& region);
  bool contains_pixel(int x, int y) const;
  // A point is inside when its rounded pixel is in the area or it was
  // detected in one of the included regions (detection gating dilates masks).
  bool contains(const InterestPoint& point) const;

 private:
  int frame_index_;
  int width_;
  int height_;
  size_t count_ = 0;
  std::vector<std::uint8_t> bits_;
  std::vector<int> included_;
};

// prior footprint united with every next-frame region whose mask touches it.
SearchArea build_search_area(const MotionRegion& prior_region,
                             const std::vector<MotionRegion>& next_regions, int width, int height);

struct Detection {
  InterestPoint point;
  Descriptor descriptor;
};

// Index of the candidate most similar to the track's latest descriptor,
// or nullopt when the best similarity is below t_feature. Ties go to the
// smaller displacement from the track's last position, then point_order.
std::optional<size_t> match_feature(const FeatureTrack& track, std::span<const Detection> candidates,
                                    double t_feature);

struct TrackerParams {
  double t_feature = 0.75;
  int track_retirement = 50;
  int split_min_features = 3;
  int split_confirm_frames = 3;
  int cluster_retirement = 250;
  // Limited-velocity gate. A track unseen for g frames searches around its
  // last position moved by its cluster's (or else its own) velocity, within
  // min(position_tolerance + speed_tolerance * g, max_search_radius) px.
  // Tracks without a velocity yet search min(max_speed * g, max_search_radius)
  // px around the last position.
  double max_speed = 6.0;
  double max_search_radius = 40.0;
  double position_tolerance = 3.0;
  double speed_tolerance = 1.0;
  int velocity_min_matches = 3;  // matched members needed to refresh a cluster velocity
  // A member's match is refused when the velocity it implies over the
  // track's last few appearances strays this far from the cluster's.
  double velocity_tolerance = 1.0;
  // Admission of new features into the model.
  int pending_min_frames = 3;    // consecutive matches before clustering
  int pending_timeout = 8;       // frames a feature may stay unclustered
  double min_motion = 2.0;       // px of net displacement over its trajectory
  int min_new_cluster = 3;       // smallest group that founds a new cluster
  ClusteringParams clustering;
};

struct ClusterState {
  ClusterId id = -1;
  std::vector<TrackId> members;
  std::optional<int> region_id;  // region in the current frame; empty when stale
  MotionRegion footprint;        // region whose search area the tracks use
  bool stale = false;
  int stale_since = -1;
  int created_at = 0;
  std::optional<ClusterId> parent;
  std::optional<int> retired_at;
  int split_streak = 0;
  int matched_now = 0;
  // Median per-frame velocity of the members, refreshed whenever enough of
  // them match; member tracks are predicted with it.
  std::optional<PixelPoint> velocity;
};

struct AuditEvent {
  enum class Kind { Append, Admit, CreateCluster, Split, RetireTrack, RetireCluster };
  Kind kind;
  int frame = 0;
  TrackId track = -1;
  ClusterId cluster = -1;
  ClusterId other = -1;  // split parent
  PixelPoint position;
  std::uint64_t descriptor_hash = 0;
};

std::uint64_t descriptor_hash(const Descriptor& d);

struct MatchRecord {
  int frame = 0;
  TrackId track = -1;
  ClusterId cluster = -1;  // -1 for pending tracks
  PixelPoint position;
  bool inside_search_area = false;
};

struct StepReport {
  int frame = 0;
  int regions = 0;
  int detections = 0;
  int matched = 0;
  int new_pending = 0;
  int admitted = 0;
  int clusters_created = 0;
  int splits = 0;
  int clusters_retired = 0;
  int live_clusters = 0;
};

// One row of the per-frame track output.
struct TrackRow {
  int frame = 0;
  ClusterId cluster = -1;
  TrackId track = -1;
  PixelPoint position;
  bool matched = false;
};

class Tracker {
 public:
  Tracker(SceneCalibration cal, TrackerParams params, int width, int height);

  // Advances the model to `frame_index` given that frame's regions and
  // described detections. Frames must arrive in increasing order.
  StepReport step(int frame_index, const std::vector<MotionRegion>& regions,
                  const std::vector<Detection>& detections);

  const std::vector<FeatureTrack>& tracks() const { return tracks_; }
  const std::vector<ClusterState>& clusters() const { return clusters_; }
  const std::vector<AuditEvent>& audit() const { return audit_; }
  const std::vector<MatchRecord>& matches() const { return matches_; }
  const std::vector<TrackRow>& rows() const { return rows_; }  // rows of the last step
  size_t live_cluster_count() const;
  size_t pending_count() const { return pending_.size(); }

  const FeatureTrack* find_track(TrackId id) const;

 private:
  void match_tracks(int frame, const std::vector<MotionRegion>& regions,
                    const std::vector<Detection>& detections, std::vector<char>& used,
                    StepReport& report);
  void reassign_clusters(int frame, const std::vector<MotionRegion>& regions, StepReport& report);
  void admit_pending(int frame, const std::vector<MotionRegion>& regions, StepReport& report);
  void retire(int frame, StepReport& report);
  void emit_rows(int frame);
  void append(FeatureTrack& track, int frame, const Detection& det);
  ClusterState& new_cluster(int frame, const MotionRegion& footprint, std::optional<ClusterId> parent);

  SceneCalibration cal_;
  TrackerParams params_;
  int width_;
  int height_;
  int last_frame_ = -1;
  std::vector<MotionRegion> prev_regions_;

  std::vector<FeatureTrack> tracks_;  // model tracks, indexed by id
  std::vector<FeatureTrack> pending_;
  std::vector<ClusterState> clusters_;  // indexed by id
  TrackId next_pending_id_ = 0;

  std::vector<char> matched_now_;  // per model track
  std::vector<AuditEvent> audit_;
  std::vector<MatchRecord> matches_;
  std::vector<TrackRow> rows_;
};

// Stable output formats.
//   tracks CSV: frame,cluster_id,track_id,x,y,matched
//   cluster JSON lines: {"cluster_id","created_at","retired_at","members",
//                        "parent","children","tracks_retired"}
void write_track_header(std::ostream& out);
void write_track_rows(std::ostream& out, std::span<const TrackRow> rows);
void write_cluster_summary(std::ostream& out, const Tracker& tracker);

}  // namespace kinetrack
