#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>

#include "kinetrack/calibration.h"
#include "kinetrack/features.h"
#include "kinetrack/motion.h"
#include "kinetrack/tracking.h"

namespace kinetrack {

struct CalibrationConfig {
  double c1 = kDefaultC1;
  double c3 = kDefaultC3;
  std::optional<double> c2;                       // bypasses solving when set
  std::optional<std::array<double, 4>> pair_near;  // x1, y1, x2, y2
  std::optional<std::array<double, 4>> pair_far;
};

// Offset used when neither c2 nor point pairs are configured.
inline constexpr double kDefaultC2 = 10.0;

struct PipelineConfig {
  std::filesystem::path input;
  std::filesystem::path output;
  bool overlay = false;
  bool dump_regions = false;
  bool dump_keypoints = false;
  CalibrationConfig calibration;
  MotionParams motion;
  FeatureParams features;
  TrackerParams tracking;  // includes clustering parameters
};

// YAML config. Unknown keys and malformed values throw Error(ConfigError);
// missing keys keep their defaults. Relative paths resolve against
// `base_dir`.
PipelineConfig parse_config(const std::string& yaml_text,
                            const std::filesystem::path& base_dir = {});
PipelineConfig load_config(const std::filesystem::path& path);

// Fully resolved config as YAML, including defaults and the solved c2.
std::string dump_config(const PipelineConfig& config);

// c2 from the config, solved from the point pairs, or the default.
SceneCalibration resolve_calibration(const CalibrationConfig& config);

}  // namespace kinetrack
