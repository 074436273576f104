#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "doctest.h"
#include "helpers.h"
#include "kinetrack/config.h"
#include "kinetrack/metrics.h"
#include "kinetrack/pipeline.h"
#include "kinetrack/synth.h"

using namespace kinetrack;
using testing::error_kind;
namespace fs = std::filesystem;

namespace {

// Fresh directory under the system temp dir, removed on destruction.
struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path = fs::temp_directory_path() / ("kinetrack_" + tag + "_" + std::to_string(rd()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

GroundTruth two_sprite_truth(int frames) {
  GroundTruth gt;
  for (int f = 0; f < frames; ++f) {
    gt.frames.push_back({{1, {10 + f, 10, 20 + f, 30}, 1.0}, {2, {60, 10 + f, 80, 30 + f}, 1.0}});
  }
  return gt;
}

TrackRow row(int frame, int cluster, double x, double y, bool matched = true) {
  return {frame, cluster, cluster * 100, {x, y}, matched};
}

}  // namespace

TEST_CASE("metrics on tracks at the truth centroids") {
  const GroundTruth gt = two_sprite_truth(20);
  std::vector<TrackRow> rows;
  for (int f = 0; f < 20; ++f) {
    for (const auto& t : gt.frames[f]) {
      rows.push_back(row(f, t.sprite_id, 0.5 * (t.bbox.x_min + t.bbox.x_max),
                         0.5 * (t.bbox.y_min + t.bbox.y_max)));
    }
  }
  const MetricsReport m = compute_metrics(rows, gt);
  REQUIRE(m.sprites.size() == 2);
  for (const auto& s : m.sprites) {
    CHECK(s.coverage == 1.0);
    CHECK(s.identity_switches == 0);
    CHECK(s.fragmentation == 0);
    CHECK(s.frames_visible == 20);
  }
  CHECK(m.identity_switches == 0);
}

TEST_CASE("metrics with one sprite uncovered") {
  const GroundTruth gt = two_sprite_truth(10);
  std::vector<TrackRow> rows;
  for (int f = 0; f < 10; ++f) rows.push_back(row(f, 0, 15 + f, 20));
  const MetricsReport m = compute_metrics(rows, gt);
  CHECK(m.sprites[0].coverage == 1.0);
  CHECK(m.sprites[1].coverage == 0.0);
}

TEST_CASE("metrics count switches, fragments and windows") {
  const GroundTruth gt = two_sprite_truth(12);
  // Sprite 1: cluster 3 for frames 0-3, uncovered 4-5, cluster 3 again 6-7,
  // cluster 4 for 8-11.
  std::vector<TrackRow> rows;
  for (int f = 0; f < 12; ++f) {
    if (f == 4 || f == 5) {
      rows.push_back(row(f, 3, 15 + f, 20, false));
      continue;
    }
    rows.push_back(row(f, f < 8 ? 3 : 4, 15 + f, 20));
  }
  const MetricsReport m = compute_metrics(rows, gt);
  const SpriteMetrics& s = m.sprites[0];
  CHECK(s.frames_covered == 10);
  CHECK(s.coverage == doctest::Approx(10.0 / 12.0));
  CHECK(s.identity_switches == 1);
  CHECK(s.fragmentation == 1);
  CHECK(s.frames_per_cluster.at(3) == 6);
  CHECK(s.frames_per_cluster.at(4) == 4);

  const MetricsReport w = compute_metrics(rows, gt, {8, 11});
  CHECK(w.sprites[0].coverage == 1.0);
  CHECK(w.sprites[0].identity_switches == 0);
  CHECK(w.sprites[0].frames_visible == 4);
}

TEST_CASE("metrics prefer the cluster with most features inside") {
  const GroundTruth gt = two_sprite_truth(1);
  // Both centroids inside sprite 1; cluster 8 has more points inside it.
  const std::vector<TrackRow> rows{row(0, 5, 12, 20), row(0, 8, 13, 20), row(0, 8, 14, 21),
                                   row(0, 8, 15, 22)};
  const MetricsReport m = compute_metrics(rows, gt);
  CHECK(m.sprites[0].frames_per_cluster.size() == 1);
  CHECK(m.sprites[0].frames_per_cluster.count(8) == 1);
}

TEST_CASE("barely visible frames are not scored") {
  GroundTruth gt = two_sprite_truth(4);
  gt.frames[1][0].visibility = 0.5;
  gt.frames[2][0].visibility = 0.0;
  const MetricsReport m = compute_metrics({}, gt);
  CHECK(m.sprites[0].frames_visible == 2);
  CHECK(m.sprites[0].coverage == 0.0);
}

TEST_CASE("tracks CSV") {
  const std::vector<TrackRow> rows{row(3, 1, 10.25, 20.5), row(4, 2, 11, 21, false)};
  std::ostringstream out;
  write_track_header(out);
  write_track_rows(out, rows);
  std::istringstream in(out.str());
  const auto back = read_track_rows(in);
  REQUIRE(back.size() == 2);
  CHECK(back[0].frame == 3);
  CHECK(back[0].cluster == 1);
  CHECK(back[0].track == 100);
  CHECK(back[0].position.x == doctest::Approx(10.25));
  CHECK(back[1].matched == false);

  for (const char* bad : {"frame,x\n", "frame,cluster_id,track_id,x,y,matched\n1,2,3\n",
                          "frame,cluster_id,track_id,x,y,matched\n1,2,3,4,5,7\n",
                          "frame,cluster_id,track_id,x,y,matched\n1,2,3,4,5,1,9\n"}) {
    std::istringstream s(bad);
    CHECK(error_kind([&] { read_track_rows(s); }) == ErrorKind::SchemaMismatch);
  }
}

TEST_CASE("config defaults and round trip") {
  const PipelineConfig defaults;
  CHECK(dump_config(parse_config("")) == dump_config(defaults));
  CHECK(resolve_calibration(defaults.calibration).c2() == kDefaultC2);

  const std::string text = R"(input: frames
output: out
overlay: true
calibration: {c1: 0.05, c3: 0.2, c2: 12}
motion: {frame_gap: 3, threshold: 0.05, rectify: after_smoothing}
features: {octaves: 2}
clustering: {k_neighbors: 4, t_coherence: 0.001}
tracking: {t_feature: 0.8, split_confirm_frames: 5}
)";
  const PipelineConfig cfg = parse_config(text, "/data");
  CHECK(cfg.input == fs::path("/data/frames"));
  CHECK(cfg.overlay);
  CHECK(cfg.motion.frame_gap == 3);
  CHECK(cfg.motion.rectify == Rectify::AfterSmoothing);
  CHECK(cfg.features.octaves == 2);
  CHECK(cfg.tracking.clustering.k_neighbors == 4);
  CHECK(cfg.tracking.t_feature == 0.8);
  CHECK(cfg.tracking.split_confirm_frames == 5);
  CHECK(cfg.tracking.max_speed == defaults.tracking.max_speed);

  const std::string dumped = dump_config(cfg);
  CHECK(dump_config(parse_config(dumped)) == dumped);
}

TEST_CASE("config solves the offset from point pairs") {
  const PipelineConfig cfg = parse_config(
      "calibration: {pair_near: [0, 200, 25, 200], pair_far: [0, 100, 15, 100]}\n");
  CHECK(resolve_calibration(cfg.calibration).c2() == doctest::Approx(50.0));
  CHECK(dump_config(cfg).find("c2: 50") != std::string::npos);
}

TEST_CASE("config errors") {
  for (const char* bad : {"bogus: 1\n", "motion: {speed: 2}\n", "motion: {frame_gap: two}\n",
                          "motion: {frame_gap: 0}\n", "motion: {rectify: sideways}\n",
                          "tracking: 3\n", "- a\n- b\n", "calibration: {pair_near: [1, 2, 3, 4]}\n",
                          "calibration: {pair_near: [0, 100, 30, 100], pair_far: [0, 200, 20, 200]}\n",
                          "calibration: {c1: -1}\n", "key: [unclosed\n"}) {
    CAPTURE(bad);
    CHECK(error_kind([&] { parse_config(bad); }) == ErrorKind::ConfigError);
  }
  CHECK(error_kind([] { load_config("/nonexistent/kinetrack.yaml"); }) == ErrorKind::ConfigError);
}

TEST_CASE("run input errors") {
  TempDir dir("input");
  PipelineConfig cfg;
  cfg.input = dir.path / "frames";
  cfg.output = dir.path / "out";
  CHECK(error_kind([&] { run(cfg); }) == ErrorKind::MissingInput);
  fs::create_directories(cfg.input);
  CHECK(error_kind([&] { run(cfg); }) == ErrorKind::MissingInput);
  write_png(cfg.input / "f0.png", FrameBuffer(8, 8));
  write_png(cfg.input / "f1.png", FrameBuffer(8, 8));
  CHECK(error_kind([&] { run(cfg); }) == ErrorKind::MissingInput);
  write_png(cfg.input / "f2.png", FrameBuffer(8, 8));
  std::ofstream(cfg.input / "f3.png") << "not an image";
  CHECK(error_kind([&] { run(cfg); }) == ErrorKind::UnreadableFrame);
  cfg.input.clear();
  CHECK(error_kind([&] { run(cfg); }) == ErrorKind::ConfigError);
}

TEST_CASE("static scene gives no regions and no clusters") {
  TempDir dir("static");
  SpriteScript s;
  s.id = 1;
  s.width = 20;
  s.height = 30;
  s.path.assign(12, {40, 30, 100});
  write_rendered(dir.path / "frames", render(testing::scene(80, 60, 12, {s}), 1));
  PipelineConfig cfg;
  cfg.input = dir.path / "frames";
  cfg.output = dir.path / "out";
  const RunReport report = run(cfg);
  CHECK(report.frames == 12);
  CHECK(report.clusters_created == 0);
  for (const auto& f : report.per_frame) CHECK(f.regions == 0);
  CHECK(report.mean_regions == 0.0);
}

TEST_CASE("run on lone_walker") {
  TempDir dir("walker");
  const auto rendered = render(scenario_library().at("lone_walker"), 1);
  write_rendered(dir.path / "frames", rendered);
  PipelineConfig cfg;
  cfg.input = dir.path / "frames";
  cfg.output = dir.path / "a";
  cfg.dump_keypoints = true;
  cfg.dump_regions = true;
  cfg.overlay = true;
  const RunReport report = run(cfg);
  CHECK(report.frames == 100);
  CHECK(report.clusters_live == 1);
  CHECK(report.mean_regions >= 1.0);
  CHECK(report.mean_region_area_fraction > 0.0);
  CHECK(report.mean_region_area_fraction < 0.25);

  for (const char* name : {"tracks.csv", "clusters.jsonl", "config.yaml", "report.json",
                           "keypoints.csv", "regions/regions_00050.png", "overlay/overlay_00050.png"}) {
    CAPTURE(name);
    CHECK(fs::exists(cfg.output / name));
  }
  // The echoed config reproduces itself.
  const std::string echoed = slurp(cfg.output / "config.yaml");
  CHECK(echoed == dump_config(cfg));
  CHECK(dump_config(load_config(cfg.output / "config.yaml")) == echoed);

  std::ifstream tracks(cfg.output / "tracks.csv");
  const auto rows = read_track_rows(tracks);
  const MetricsReport m = compute_metrics(rows, rendered.truth);
  CHECK(m.identity_switches == 0);
  CHECK(m.sprites.at(0).coverage >= 0.9);

  PipelineConfig again = cfg;
  again.output = dir.path / "b";
  run(again);
  CHECK(slurp(cfg.output / "tracks.csv") == slurp(again.output / "tracks.csv"));
  CHECK(slurp(cfg.output / "clusters.jsonl") == slurp(again.output / "clusters.jsonl"));
}
