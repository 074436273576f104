#include "kinetrack/config.h"

#include <yaml-cpp/yaml.h>

#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "kinetrack/error.h"

namespace kinetrack {

namespace {

[[noreturn]] void config_error(const std::string& why) { throw Error(ErrorKind::ConfigError, why); }

template <typename T>
T scalar(const YAML::Node& node, const std::string& key) {
  try {
    return node.as<T>();
  } catch (const YAML::Exception&) {
    config_error("bad value for '" + key + "'");
  }
}

std::array<double, 4> quad(const YAML::Node& node, const std::string& key) {
  if (!node.IsSequence() || node.size() != 4) config_error("'" + key + "' must be [x1, y1, x2, y2]");
  std::array<double, 4> out{};
  for (size_t i = 0; i < 4; ++i) out[i] = scalar<double>(node[i], key);
  return out;
}

using Setter = std::function<void(const YAML::Node&, const std::string&)>;

template <typename T>
Setter set(T& field) {
  return [&field](const YAML::Node& n, const std::string& key) { field = scalar<T>(n, key); };
}

void apply_section(const YAML::Node& node, const std::string& name,
                   const std::map<std::string, Setter>& setters) {
  if (!node.IsMap()) config_error("section '" + name + "' must be a mapping");
  for (const auto& kv : node) {
    const std::string key = kv.first.as<std::string>();
    auto it = setters.find(key);
    if (it == setters.end()) config_error("unknown key '" + name + "." + key + "'");
    it->second(kv.second, name + "." + key);
  }
}

}  // namespace

PipelineConfig parse_config(const std::string& yaml_text, const std::filesystem::path& base_dir) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    config_error(std::string("cannot parse config: ") + e.what());
  }
  PipelineConfig cfg;
  if (root.IsNull()) return cfg;
  if (!root.IsMap()) config_error("config must be a mapping");

  std::string input, output;
  CalibrationConfig& cal = cfg.calibration;
  MotionParams& mo = cfg.motion;
  FeatureParams& fe = cfg.features;
  TrackerParams& tr = cfg.tracking;
  ClusteringParams& cl = cfg.tracking.clustering;

  const std::map<std::string, std::map<std::string, Setter>> sections{
      {"calibration",
       {{"c1", set(cal.c1)},
        {"c3", set(cal.c3)},
        {"c2", [&](const YAML::Node& n, const std::string& k) { cal.c2 = scalar<double>(n, k); }},
        {"pair_near", [&](const YAML::Node& n, const std::string& k) { cal.pair_near = quad(n, k); }},
        {"pair_far", [&](const YAML::Node& n, const std::string& k) { cal.pair_far = quad(n, k); }}}},
      {"motion",
       {{"frame_gap", set(mo.frame_gap)},
        {"threshold", set(mo.threshold)},
        {"min_area", set(mo.min_area)},
        {"rectify", [&](const YAML::Node& n, const std::string& k) {
           const auto v = scalar<std::string>(n, k);
           if (v == "before_smoothing") {
             mo.rectify = Rectify::BeforeSmoothing;
           } else if (v == "after_smoothing") {
             mo.rectify = Rectify::AfterSmoothing;
           } else {
             config_error("'" + k + "' must be before_smoothing or after_smoothing");
           }
         }}}},
      {"features",
       {{"octaves", set(fe.octaves)},
        {"intervals", set(fe.intervals)},
        {"base_sigma", set(fe.base_sigma)},
        {"contrast_threshold", set(fe.contrast_threshold)},
        {"edge_ratio", set(fe.edge_ratio)},
        {"gate_radius", set(fe.gate_radius)},
        {"crop_margin", set(fe.crop_margin)}}},
      {"clustering",
       {{"k_neighbors", set(cl.k_neighbors)},
        {"context_frames", set(cl.context_frames)},
        {"t_coherence", set(cl.t_coherence)},
        {"epsilon_den", set(cl.epsilon_den)}}},
      {"tracking",
       {{"t_feature", set(tr.t_feature)},
        {"track_retirement", set(tr.track_retirement)},
        {"split_min_features", set(tr.split_min_features)},
        {"split_confirm_frames", set(tr.split_confirm_frames)},
        {"cluster_retirement", set(tr.cluster_retirement)},
        {"max_speed", set(tr.max_speed)},
        {"max_search_radius", set(tr.max_search_radius)},
        {"position_tolerance", set(tr.position_tolerance)},
        {"speed_tolerance", set(tr.speed_tolerance)},
        {"velocity_min_matches", set(tr.velocity_min_matches)},
        {"velocity_tolerance", set(tr.velocity_tolerance)},
        {"pending_min_frames", set(tr.pending_min_frames)},
        {"pending_timeout", set(tr.pending_timeout)},
        {"min_motion", set(tr.min_motion)},
        {"min_new_cluster", set(tr.min_new_cluster)}}},
  };
  const std::map<std::string, Setter> top{
      {"input", set(input)},
      {"output", set(output)},
      {"overlay", set(cfg.overlay)},
      {"dump_regions", set(cfg.dump_regions)},
      {"dump_keypoints", set(cfg.dump_keypoints)},
  };

  for (const auto& kv : root) {
    const std::string key = kv.first.as<std::string>();
    if (auto s = sections.find(key); s != sections.end()) {
      apply_section(kv.second, key, s->second);
    } else if (auto t = top.find(key); t != top.end()) {
      t->second(kv.second, key);
    } else {
      config_error("unknown key '" + key + "'");
    }
  }

  auto resolve = [&](const std::string& p) -> std::filesystem::path {
    if (p.empty()) return {};
    std::filesystem::path path(p);
    return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
  };
  cfg.input = resolve(input);
  cfg.output = resolve(output);

  if (mo.frame_gap < 1) config_error("motion.frame_gap must be >= 1");
  if (!(mo.threshold > 0.0)) config_error("motion.threshold must be positive");
  if (mo.min_area < 1) config_error("motion.min_area must be >= 1");
  if (fe.octaves < 1 || fe.intervals < 1) config_error("features.octaves and intervals must be >= 1");
  if (cl.k_neighbors < 1) config_error("clustering.k_neighbors must be >= 1");
  if (cl.context_frames < 1) config_error("clustering.context_frames must be >= 1");
  if (tr.pending_min_frames < 2) config_error("tracking.pending_min_frames must be >= 2");
  if (cal.pair_near.has_value() != cal.pair_far.has_value()) {
    config_error("calibration.pair_near and calibration.pair_far must be given together");
  }
  try {
    resolve_calibration(cal);
  } catch (const Error& e) {
    config_error(std::string("calibration: ") + e.what());
  }
  return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) config_error("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path());
}

SceneCalibration resolve_calibration(const CalibrationConfig& config) {
  if (config.c2) return SceneCalibration(config.c1, *config.c2, config.c3);
  if (config.pair_near && config.pair_far) {
    const auto& n = *config.pair_near;
    const auto& f = *config.pair_far;
    return calibrate({{n[0], n[1]}, {n[2], n[3]}, 1.0}, {{f[0], f[1]}, {f[2], f[3]}, 1.0}, config.c1,
                     config.c3);
  }
  return SceneCalibration(config.c1, kDefaultC2, config.c3);
}

std::string dump_config(const PipelineConfig& cfg) {
  const SceneCalibration cal = resolve_calibration(cfg.calibration);
  YAML::Emitter out;
  out << YAML::BeginMap;
  out << YAML::Key << "input" << YAML::Value << cfg.input.string();
  out << YAML::Key << "output" << YAML::Value << cfg.output.string();
  out << YAML::Key << "overlay" << YAML::Value << cfg.overlay;
  out << YAML::Key << "dump_regions" << YAML::Value << cfg.dump_regions;
  out << YAML::Key << "dump_keypoints" << YAML::Value << cfg.dump_keypoints;

  out << YAML::Key << "calibration" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "c1" << YAML::Value << cal.c1();
  out << YAML::Key << "c2" << YAML::Value << cal.c2();
  out << YAML::Key << "c3" << YAML::Value << cal.c3();
  auto emit_quad = [&](const char* key, const std::optional<std::array<double, 4>>& q) {
    if (!q) return;
    out << YAML::Key << key << YAML::Value << YAML::Flow << YAML::BeginSeq;
    for (double v : *q) out << v;
    out << YAML::EndSeq;
  };
  emit_quad("pair_near", cfg.calibration.pair_near);
  emit_quad("pair_far", cfg.calibration.pair_far);
  out << YAML::EndMap;

  const MotionParams& mo = cfg.motion;
  out << YAML::Key << "motion" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "frame_gap" << YAML::Value << mo.frame_gap;
  out << YAML::Key << "threshold" << YAML::Value << mo.threshold;
  out << YAML::Key << "min_area" << YAML::Value << mo.min_area;
  out << YAML::Key << "rectify" << YAML::Value
      << (mo.rectify == Rectify::BeforeSmoothing ? "before_smoothing" : "after_smoothing");
  out << YAML::EndMap;

  const FeatureParams& fe = cfg.features;
  out << YAML::Key << "features" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "octaves" << YAML::Value << fe.octaves;
  out << YAML::Key << "intervals" << YAML::Value << fe.intervals;
  out << YAML::Key << "base_sigma" << YAML::Value << fe.base_sigma;
  out << YAML::Key << "contrast_threshold" << YAML::Value << fe.contrast_threshold;
  out << YAML::Key << "edge_ratio" << YAML::Value << fe.edge_ratio;
  out << YAML::Key << "gate_radius" << YAML::Value << fe.gate_radius;
  out << YAML::Key << "crop_margin" << YAML::Value << fe.crop_margin;
  out << YAML::EndMap;

  const ClusteringParams& cl = cfg.tracking.clustering;
  out << YAML::Key << "clustering" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "k_neighbors" << YAML::Value << cl.k_neighbors;
  out << YAML::Key << "context_frames" << YAML::Value << cl.context_frames;
  out << YAML::Key << "t_coherence" << YAML::Value << cl.t_coherence;
  out << YAML::Key << "epsilon_den" << YAML::Value << cl.epsilon_den;
  out << YAML::EndMap;

  const TrackerParams& tr = cfg.tracking;
  out << YAML::Key << "tracking" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "t_feature" << YAML::Value << tr.t_feature;
  out << YAML::Key << "track_retirement" << YAML::Value << tr.track_retirement;
  out << YAML::Key << "split_min_features" << YAML::Value << tr.split_min_features;
  out << YAML::Key << "split_confirm_frames" << YAML::Value << tr.split_confirm_frames;
  out << YAML::Key << "cluster_retirement" << YAML::Value << tr.cluster_retirement;
  out << YAML::Key << "max_speed" << YAML::Value << tr.max_speed;
  out << YAML::Key << "max_search_radius" << YAML::Value << tr.max_search_radius;
  out << YAML::Key << "position_tolerance" << YAML::Value << tr.position_tolerance;
  out << YAML::Key << "speed_tolerance" << YAML::Value << tr.speed_tolerance;
  out << YAML::Key << "velocity_min_matches" << YAML::Value << tr.velocity_min_matches;
  out << YAML::Key << "velocity_tolerance" << YAML::Value << tr.velocity_tolerance;
  out << YAML::Key << "pending_min_frames" << YAML::Value << tr.pending_min_frames;
  out << YAML::Key << "pending_timeout" << YAML::Value << tr.pending_timeout;
  out << YAML::Key << "min_motion" << YAML::Value << tr.min_motion;
  out << YAML::Key << "min_new_cluster" << YAML::Value << tr.min_new_cluster;
  out << YAML::EndMap;

  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

}  // namespace kinetrack
