#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "kinetrack/image.h"
#include "kinetrack/motion.h"

namespace kinetrack {

enum class BackgroundKind { Flat, Noise, Tiles };

// Static background; levels are 8-bit intensities.
struct BackgroundSpec {
  BackgroundKind kind = BackgroundKind::Flat;
  int level = 50;  // flat
  int lo = 0;      // noise / tiles
  int hi = 255;
  int cell = 8;    // tiles
};

enum class SpriteShape { Rect, Ellipse };

// Position and size of a sprite at one frame.
struct SpritePose {
  int cx = 0;
  int cy = 0;
  int scale_pct = 100;
};

struct SpriteKey {
  int frame = 0;
  SpritePose pose;
};

struct SpriteScript {
  int id = 0;
  SpriteShape shape = SpriteShape::Rect;
  int width = 16;   // size at scale 100%
  int height = 24;
  int depth = 0;    // larger depth is nearer the camera and drawn later
  int texture_lo = 120;
  int texture_hi = 250;
  int texture_cell = 3;
  std::vector<SpritePose> path;  // one pose per frame

  int width_at(int frame) const;
  int height_at(int frame) const;
};

struct Scenario {
  std::string name;
  int width = 160;
  int height = 120;
  int length = 100;
  BackgroundSpec background;
  std::vector<SpriteScript> sprites;
};

struct SpriteTruth {
  int sprite_id = 0;
  BoundingBox bbox;         // in-frame part of the sprite's extent
  double visibility = 0.0;  // visible pixels / all shape pixels
};

struct GroundTruth {
  std::vector<std::vector<SpriteTruth>> frames;  // [frame][sprite]
};

struct RenderedScenario {
  std::vector<FrameBuffer> frames;
  GroundTruth truth;
};

// Keyframe interpolation in integer arithmetic (round half up); poses before
// the first key and after the last key are held.
std::vector<SpritePose> interpolate_path(const std::vector<SpriteKey>& keys, int length);

// Deterministic for (scenario, seed); integer arithmetic only.
// Throws Error(InvalidScenario) when the scenario violates its invariants.
RenderedScenario render(const Scenario& scenario, std::uint64_t seed);

void validate(const Scenario& scenario);

// Plain-text scenario format:
//   name <identifier>
//   size <width> <height>
//   length <frames>
//   background flat <level> | noise <lo> <hi> | tiles <cell> <lo> <hi>
//   sprite <id> rect|ellipse <w> <h> depth <d> texture <lo> <hi> [cell <c>]
//   key <id> <frame> <cx> <cy> [<scale_pct>]
// '#' starts a comment. Each sprite needs at least one key.
Scenario parse_scenario(std::istream& in);
Scenario load_scenario(const std::filesystem::path& path);
void write_scenario(std::ostream& out, const Scenario& scenario);

// Named scenarios covering the tracking cases: lone_walker, pair_separates,
// pair_joins, partial_occlusion, full_occlusion_cross, scale_change,
// cluttered_background.
std::map<std::string, Scenario> scenario_library();

// Ground-truth CSV: frame,sprite_id,x_min,y_min,x_max,y_max,visibility
void write_ground_truth(std::ostream& out, const GroundTruth& truth);
GroundTruth read_ground_truth(std::istream& in);

// Writes frames as frame_00000.png ... plus truth.csv into `dir`.
void write_rendered(const std::filesystem::path& dir, const RenderedScenario& rendered);

}  // namespace kinetrack
