// kinetrack command-line driver: track, synth, metrics.

#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "kinetrack/config.h"
#include "kinetrack/error.h"
#include "kinetrack/metrics.h"
#include "kinetrack/pipeline.h"
#include "kinetrack/synth.h"

namespace fs = std::filesystem;
using namespace kinetrack;

namespace {

int run_track(const fs::path& config_path, bool dump_regions, bool dump_keypoints, bool overlay) {
  PipelineConfig cfg = load_config(config_path);
  cfg.dump_regions = cfg.dump_regions || dump_regions;
  cfg.dump_keypoints = cfg.dump_keypoints || dump_keypoints;
  cfg.overlay = cfg.overlay || overlay;
  const RunReport report = run(cfg);
  write_report_json(std::cout, report);
  return 0;
}

int run_synth(const std::string& scenario, const fs::path& outdir, std::uint64_t seed) {
  Scenario sc;
  const auto library = scenario_library();
  if (auto it = library.find(scenario); it != library.end()) {
    sc = it->second;
  } else {
    sc = load_scenario(scenario);
  }
  const RenderedScenario rendered = render(sc, seed);
  write_rendered(outdir, rendered);
  std::ofstream copy(outdir / "scenario.txt");
  write_scenario(copy, sc);
  std::cout << "wrote " << rendered.frames.size() << " frames of '" << sc.name << "' to "
            << outdir.string() << "\n";
  return 0;
}

int run_metrics(const fs::path& tracks_path, const fs::path& truth_path, int from, int to) {
  std::ifstream tracks(tracks_path);
  if (!tracks) throw Error(ErrorKind::MissingInput, "cannot open " + tracks_path.string());
  std::ifstream truth(truth_path);
  if (!truth) throw Error(ErrorKind::MissingInput, "cannot open " + truth_path.string());
  const auto rows = read_track_rows(tracks);
  const auto gt = read_ground_truth(truth);
  write_metrics_json(std::cout, compute_metrics(rows, gt, {from, to}));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-object tracking by spatio-kinetic clustering of local features"};
  app.require_subcommand(1);

  auto* track = app.add_subcommand("track", "Run the tracking pipeline on an image sequence");
  std::string config_path;
  bool dump_regions = false, dump_keypoints = false, overlay = false;
  track->add_option("config", config_path, "YAML config file")->required();
  track->add_flag("--dump-regions", dump_regions, "Write per-frame motion-region masks");
  track->add_flag("--dump-keypoints", dump_keypoints, "Write keypoints.csv");
  track->add_flag("--overlay", overlay, "Write per-frame track overlays");

  auto* synth = app.add_subcommand("synth", "Render a synthetic scenario with ground truth");
  std::string scenario, outdir;
  std::uint64_t seed = 1;
  synth->add_option("scenario", scenario, "Library scenario name or scenario file")->required();
  synth->add_option("outdir", outdir, "Output directory")->required();
  synth->add_option("--seed", seed, "Texture and background seed");

  auto* metrics = app.add_subcommand("metrics", "Score a tracks CSV against ground truth");
  std::string tracks_csv, truth_csv;
  int from = 0, to = std::numeric_limits<int>::max();
  metrics->add_option("tracks", tracks_csv, "tracks.csv from 'track'")->required();
  metrics->add_option("truth", truth_csv, "truth.csv from 'synth'")->required();
  metrics->add_option("--from", from, "First frame to score");
  metrics->add_option("--to", to, "Last frame to score");

  auto* list = app.add_subcommand("scenarios", "List the built-in scenarios");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*track) return run_track(config_path, dump_regions, dump_keypoints, overlay);
    if (*synth) return run_synth(scenario, outdir, seed);
    if (*metrics) return run_metrics(tracks_csv, truth_csv, from, to);
    if (*list) {
      for (const auto& [name, sc] : scenario_library()) {
        std::cout << name << "  " << sc.width << "x" << sc.height << ", " << sc.length << " frames, "
                  << sc.sprites.size() << " sprite(s)\n";
      }
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error[" << to_string(e.kind()) << "]: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error[Internal]: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
