#include "kinetrack/pipeline.h"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "kinetrack/error.h"

namespace kinetrack {

Pipeline::Pipeline(const PipelineConfig& config, int width, int height)
    : config_(config),
      calibration_(resolve_calibration(config.calibration)),
      width_(width),
      height_(height),
      tracker_(calibration_, config.tracking, width, height) {}

const FrameStats& Pipeline::process(const FrameBuffer& frame) {
  if (frame.width() != width_ || frame.height() != height_) {
    std::ostringstream os;
    os << "frame " << frame.index() << " is " << frame.width() << "x" << frame.height()
       << ", expected " << width_ << "x" << height_;
    throw Error(ErrorKind::DimensionMismatch, os.str());
  }
  history_.push_back(frame);
  const size_t gap = static_cast<size_t>(config_.motion.frame_gap);
  while (history_.size() > gap + 1) history_.pop_front();

  FrameStats stats;
  stats.frame = frame.index();
  last_regions_.clear();
  last_keypoints_.clear();
  if (history_.size() == gap + 1) {
    stats.processed = true;
    last_regions_ = detect_motion_regions(frame, history_.front(), calibration_, config_.motion);
    stats.regions = static_cast<int>(last_regions_.size());
    std::int64_t area = 0;
    for (const MotionRegion& r : last_regions_) area += r.area();
    stats.region_area_fraction = static_cast<double>(area) / (static_cast<double>(width_) * height_);

    DetectionStats det_stats;
    last_keypoints_ = detect(frame, last_regions_, config_.features, &det_stats);
    stats.detector_visits = det_stats.pixel_visits;
    stats.keypoints = static_cast<int>(last_keypoints_.size());

    std::vector<Detection> detections;
    detections.reserve(last_keypoints_.size());
    for (const InterestPoint& p : last_keypoints_) {
      try {
        detections.push_back({p, describe(frame, p)});
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::FlatPatch) throw;
        ++stats.flat_patches;
      }
    }
    stats.step = tracker_.step(frame.index(), last_regions_, detections);
  }
  stats_.push_back(stats);
  return stats_.back();
}

RunReport Pipeline::report() const {
  RunReport r;
  r.frames = static_cast<int>(stats_.size());
  r.clusters_created = static_cast<int>(tracker_.clusters().size());
  r.clusters_live = static_cast<int>(tracker_.live_cluster_count());
  int processed = 0;
  for (const FrameStats& s : stats_) {
    if (!s.processed) continue;
    ++processed;
    r.mean_regions += s.regions;
    r.mean_region_area_fraction += s.region_area_fraction;
  }
  if (processed > 0) {
    r.mean_regions /= processed;
    r.mean_region_area_fraction /= processed;
  }
  r.per_frame = stats_;
  return r;
}

std::vector<std::filesystem::path> list_frames(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw Error(ErrorKind::MissingInput, "input directory " + dir.string() + " does not exist");
  }
  std::vector<std::filesystem::path> frames;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png" || ext == ".pgm") frames.push_back(entry.path());
  }
  std::sort(frames.begin(), frames.end());
  if (frames.empty()) throw Error(ErrorKind::MissingInput, "no .png/.pgm frames in " + dir.string());
  return frames;
}

namespace {

std::array<std::uint8_t, 3> cluster_color(ClusterId id) {
  // splitmix64 of the id, mapped to a bright color
  std::uint64_t z = static_cast<std::uint64_t>(id) + 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  z ^= z >> 31;
  return {static_cast<std::uint8_t>(96 + (z & 0x9F)), static_cast<std::uint8_t>(96 + ((z >> 8) & 0x9F)),
          static_cast<std::uint8_t>(96 + ((z >> 16) & 0x9F))};
}

std::string numbered(const char* prefix, int index, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%05d.%s", prefix, index, ext);
  return buf;
}

}  // namespace

RgbImage render_overlay(const FrameBuffer& frame, const Tracker& tracker, int tail) {
  RgbImage img(frame.width(), frame.height());
  for (int y = 0; y < frame.height(); ++y) {
    for (int x = 0; x < frame.width(); ++x) {
      const std::uint8_t g = to_byte(frame.at(x, y));
      img.set(x, y, g, g, g);
    }
  }
  for (const ClusterState& c : tracker.clusters()) {
    if (c.retired_at) continue;
    const auto [r, g, b] = cluster_color(c.id);
    for (TrackId id : c.members) {
      const FeatureTrack& t = tracker.tracks()[id];
      if (t.retired) continue;
      const size_t n = t.appearances.size();
      const size_t from = n > static_cast<size_t>(tail) ? n - tail : 0;
      for (size_t i = from; i < n; ++i) {
        const auto& p = t.appearances[i].position;
        img.set(static_cast<int>(std::lround(p.x)), static_cast<int>(std::lround(p.y)), r, g, b);
      }
      if (t.last_seen() == frame.index()) {
        const int x = static_cast<int>(std::lround(t.latest().position.x));
        const int y = static_cast<int>(std::lround(t.latest().position.y));
        for (int d = -2; d <= 2; ++d) {
          img.set(x + d, y, r, g, b);
          img.set(x, y + d, r, g, b);
        }
      }
    }
  }
  return img;
}

void write_report_json(std::ostream& out, const RunReport& report) {
  nlohmann::ordered_json j;
  j["frames"] = report.frames;
  j["clusters_created"] = report.clusters_created;
  j["clusters_live"] = report.clusters_live;
  j["mean_regions_per_frame"] = report.mean_regions;
  j["mean_region_area_fraction"] = report.mean_region_area_fraction;
  out << j.dump(2) << '\n';
}

RunReport run(const PipelineConfig& config) {
  if (config.input.empty()) throw Error(ErrorKind::ConfigError, "config has no 'input' directory");
  if (config.output.empty()) throw Error(ErrorKind::ConfigError, "config has no 'output' directory");
  const auto files = list_frames(config.input);
  if (files.size() < static_cast<size_t>(config.motion.frame_gap) + 1) {
    throw Error(ErrorKind::MissingInput, "need at least frame_gap + 1 frames, found " +
                                             std::to_string(files.size()));
  }
  std::filesystem::create_directories(config.output);
  {
    std::ofstream cfg(config.output / "config.yaml");
    cfg << dump_config(config);
  }

  std::ofstream tracks(config.output / "tracks.csv");
  if (!tracks) throw Error(ErrorKind::Io, "cannot write tracks.csv");
  write_track_header(tracks);
  std::ofstream keypoints;
  if (config.dump_keypoints) {
    keypoints.open(config.output / "keypoints.csv");
    keypoints << "frame,x,y,scale,region_id\n";
  }
  if (config.dump_regions) std::filesystem::create_directories(config.output / "regions");
  if (config.overlay) std::filesystem::create_directories(config.output / "overlay");

  std::optional<Pipeline> pipeline;
  for (size_t i = 0; i < files.size(); ++i) {
    const FrameBuffer frame = read_frame(files[i], static_cast<int>(i));
    if (!pipeline) pipeline.emplace(config, frame.width(), frame.height());
    const FrameStats& stats = pipeline->process(frame);
    if (stats.processed) write_track_rows(tracks, pipeline->tracker().rows());

    if (config.dump_keypoints) {
      char buf[128];
      for (const InterestPoint& p : pipeline->last_keypoints()) {
        std::snprintf(buf, sizeof buf, "%d,%.3f,%.3f,%.3f,%d\n", p.frame_index, p.x, p.y, p.scale,
                      p.region_id);
        keypoints << buf;
      }
    }
    if (config.dump_regions) {
      std::vector<std::uint8_t> mask(static_cast<size_t>(frame.width()) * frame.height(), 0);
      for (const MotionRegion& r : pipeline->last_regions()) {
        for (const Pixel& p : r.mask) mask[static_cast<size_t>(p.y) * frame.width() + p.x] = 255;
      }
      write_png(config.output / "regions" / numbered("regions", frame.index(), "png"), frame.width(),
                frame.height(), mask);
    }
    if (config.overlay) {
      write_png(config.output / "overlay" / numbered("overlay", frame.index(), "png"),
                render_overlay(frame, pipeline->tracker()));
    }
  }

  {
    std::ofstream clusters(config.output / "clusters.jsonl");
    write_cluster_summary(clusters, pipeline->tracker());
  }
  const RunReport report = pipeline->report();
  std::ofstream rep(config.output / "report.json");
  write_report_json(rep, report);
  return report;
}

}  // namespace kinetrack
