#pragma once

#include <climits>
#include <iosfwd>
#include <map>
#include <vector>

#include "kinetrack/synth.h"
#include "kinetrack/tracking.h"

namespace kinetrack {

// Reads the tracks CSV written by write_track_rows. Throws
// Error(SchemaMismatch) on a wrong header or malformed row.
std::vector<TrackRow> read_track_rows(std::istream& in);

struct SpriteMetrics {
  int sprite_id = 0;
  int frames_visible = 0;  // frames with visibility > 0.5 inside the window
  int frames_covered = 0;
  double coverage = 0.0;
  int identity_switches = 0;
  int fragmentation = 0;  // covered runs beyond the first
  std::map<int, int> frames_per_cluster;
};

struct MetricsReport {
  std::vector<SpriteMetrics> sprites;
  int identity_switches = 0;
};

struct MetricsWindow {
  int first_frame = 0;
  int last_frame = INT_MAX;
};

// Per frame, a cluster covers a sprite when the centroid of its matched
// features lies inside the sprite's bbox. Among covering clusters the one
// with most matched features inside the bbox is the sprite's best match
// (lowest id on ties); an identity switch is a change of best match between
// consecutive covered frames.
MetricsReport compute_metrics(const std::vector<TrackRow>& rows, const GroundTruth& truth,
                              const MetricsWindow& window = {});

void write_metrics_json(std::ostream& out, const MetricsReport& report);

}  // namespace kinetrack
