#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <optional>
#include <vector>

#include "kinetrack/config.h"
#include "kinetrack/features.h"
#include "kinetrack/image.h"
#include "kinetrack/motion.h"
#include "kinetrack/tracking.h"

namespace kinetrack {

struct FrameStats {
  int frame = 0;
  bool processed = false;  // false for the first frame_gap frames
  int regions = 0;
  double region_area_fraction = 0.0;
  std::int64_t detector_visits = 0;
  int keypoints = 0;
  int flat_patches = 0;
  StepReport step;
};

struct RunReport {
  int frames = 0;
  int clusters_created = 0;  // including split children
  int clusters_live = 0;     // not retired at the end of the run
  double mean_regions = 0.0;
  double mean_region_area_fraction = 0.0;
  std::vector<FrameStats> per_frame;
};

// Frame-sequential driver: motion -> features -> tracking.
class Pipeline {
 public:
  Pipeline(const PipelineConfig& config, int width, int height);

  const FrameStats& process(const FrameBuffer& frame);

  const Tracker& tracker() const { return tracker_; }
  const SceneCalibration& calibration() const { return calibration_; }
  const std::vector<MotionRegion>& last_regions() const { return last_regions_; }
  const std::vector<InterestPoint>& last_keypoints() const { return last_keypoints_; }
  RunReport report() const;

 private:
  PipelineConfig config_;
  SceneCalibration calibration_;
  int width_;
  int height_;
  std::deque<FrameBuffer> history_;
  Tracker tracker_;
  std::vector<MotionRegion> last_regions_;
  std::vector<InterestPoint> last_keypoints_;
  std::vector<FrameStats> stats_;
};

// Sorted .png/.pgm files of a directory. Throws Error(MissingInput).
std::vector<std::filesystem::path> list_frames(const std::filesystem::path& dir);

// Reads input frames, runs the pipeline, and writes tracks.csv,
// clusters.jsonl, config.yaml, report.json plus the optional dumps into
// config.output.
RunReport run(const PipelineConfig& config);

// Overlay of every live cluster's recent feature tracks on `frame`.
RgbImage render_overlay(const FrameBuffer& frame, const Tracker& tracker, int tail = 12);

void write_report_json(std::ostream& out, const RunReport& report);

}  // namespace kinetrack
