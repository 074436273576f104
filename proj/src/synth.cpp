#include "kinetrack/synth.h"

#include <algorithm>
#include <fstream>
#include <limits>
#include <istream>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

#include "kinetrack/error.h"
#include "kinetrack/features.h"

namespace kinetrack {

namespace {

[[noreturn]] void invalid(const std::string& why) { throw Error(ErrorKind::InvalidScenario, why); }

// Floor division for a positive divisor.
long long floor_div(long long num, long long den) {
  long long q = num / den;
  if ((num % den != 0) && (num < 0)) --q;
  return q;
}

int lerp_round(int a, int b, int t, int span) {
  // a + round((b - a) * t / span), halves rounded up.
  return a + static_cast<int>(floor_div(2LL * (b - a) * t + span, 2LL * span));
}

int scaled(int size, int pct) { return std::max(1, (size * pct + 50) / 100); }

bool inside_shape(SpriteShape shape, int px, int py, int w, int h) {
  if (shape == SpriteShape::Rect) return true;
  const long long dx = 2LL * px + 1 - w;
  const long long dy = 2LL * py + 1 - h;
  const long long ww = static_cast<long long>(w) * w;
  const long long hh = static_cast<long long>(h) * h;
  return dx * dx * hh + dy * dy * ww <= ww * hh;
}

// Two-level blocky texture over the sprite's 100% footprint, one level per cell.
std::vector<int> make_texture(const SpriteScript& s, std::uint64_t seed) {
  std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ull + static_cast<std::uint64_t>(s.id) * 7919u + 1u);
  const int cell = std::max(1, s.texture_cell);
  const int cw = (s.width + cell - 1) / cell;
  const int ch = (s.height + cell - 1) / cell;
  std::vector<int> cells(static_cast<size_t>(cw) * ch);
  for (int& v : cells) v = (rng() & 1u) ? s.texture_hi : s.texture_lo;
  std::vector<int> tex(static_cast<size_t>(s.width) * s.height);
  for (int y = 0; y < s.height; ++y) {
    for (int x = 0; x < s.width; ++x) {
      tex[static_cast<size_t>(y) * s.width + x] = cells[static_cast<size_t>(y / cell) * cw + x / cell];
    }
  }
  return tex;
}

std::vector<int> make_background(const Scenario& sc, std::uint64_t seed) {
  const BackgroundSpec& bg = sc.background;
  std::vector<int> img(static_cast<size_t>(sc.width) * sc.height, bg.level);
  if (bg.kind == BackgroundKind::Flat) return img;
  std::mt19937_64 rng(seed ^ 0xB5AD4ECEDA1CE2A9ull);
  const std::uint64_t range = static_cast<std::uint64_t>(bg.hi - bg.lo + 1);
  if (bg.kind == BackgroundKind::Noise) {
    for (int& v : img) v = bg.lo + static_cast<int>(rng() % range);
    return img;
  }
  const int cell = std::max(1, bg.cell);
  const int cw = (sc.width + cell - 1) / cell;
  const int ch = (sc.height + cell - 1) / cell;
  std::vector<int> cells(static_cast<size_t>(cw) * ch);
  for (int& v : cells) v = bg.lo + static_cast<int>(rng() % range);
  for (int y = 0; y < sc.height; ++y) {
    for (int x = 0; x < sc.width; ++x) {
      img[static_cast<size_t>(y) * sc.width + x] = cells[static_cast<size_t>(y / cell) * cw + x / cell];
    }
  }
  return img;
}

bool valid_level(int v) { return v >= 0 && v <= 255; }

}  // namespace

int SpriteScript::width_at(int frame) const { return scaled(width, path[frame].scale_pct); }
int SpriteScript::height_at(int frame) const { return scaled(height, path[frame].scale_pct); }

std::vector<SpritePose> interpolate_path(const std::vector<SpriteKey>& keys_in, int length) {
  if (keys_in.empty()) invalid("sprite path needs at least one key");
  std::vector<SpriteKey> keys = keys_in;
  std::stable_sort(keys.begin(), keys.end(),
                   [](const SpriteKey& a, const SpriteKey& b) { return a.frame < b.frame; });
  std::vector<SpritePose> path(std::max(length, 0));
  for (int f = 0; f < length; ++f) {
    if (f <= keys.front().frame) {
      path[f] = keys.front().pose;
      continue;
    }
    if (f >= keys.back().frame) {
      path[f] = keys.back().pose;
      continue;
    }
    size_t i = 0;
    while (keys[i + 1].frame < f) ++i;
    const SpriteKey& a = keys[i];
    const SpriteKey& b = keys[i + 1];
    const int span = b.frame - a.frame;
    const int t = f - a.frame;
    if (span == 0) {
      path[f] = b.pose;
      continue;
    }
    path[f] = {lerp_round(a.pose.cx, b.pose.cx, t, span), lerp_round(a.pose.cy, b.pose.cy, t, span),
               lerp_round(a.pose.scale_pct, b.pose.scale_pct, t, span)};
  }
  return path;
}

void validate(const Scenario& sc) {
  if (sc.width <= 0 || sc.height <= 0) invalid("scenario size must be positive");
  if (sc.length < 2) invalid("scenario length must be at least 2 frames");
  const BackgroundSpec& bg = sc.background;
  if (!valid_level(bg.level) || !valid_level(bg.lo) || !valid_level(bg.hi) || bg.lo > bg.hi) {
    invalid("background levels must lie in [0,255] with lo <= hi");
  }
  if (bg.kind == BackgroundKind::Tiles && bg.cell <= 0) invalid("background tile cell must be positive");
  std::set<int> ids;
  for (const SpriteScript& s : sc.sprites) {
    if (!ids.insert(s.id).second) invalid("duplicate sprite id " + std::to_string(s.id));
    if (s.width <= 0 || s.height <= 0) invalid("sprite size must be positive");
    if (!valid_level(s.texture_lo) || !valid_level(s.texture_hi) || s.texture_lo > s.texture_hi) {
      invalid("sprite texture levels must lie in [0,255] with lo <= hi");
    }
    if (s.texture_cell <= 0) invalid("sprite texture cell must be positive");
    if (static_cast<int>(s.path.size()) != sc.length) {
      invalid("sprite " + std::to_string(s.id) + " path length differs from scenario length");
    }
    for (const SpritePose& p : s.path) {
      if (p.scale_pct <= 0) invalid("sprite scale must be positive");
    }
  }
}

RenderedScenario render(const Scenario& sc, std::uint64_t seed) {
  validate(sc);
  const std::vector<int> background = make_background(sc, seed);

  std::vector<const SpriteScript*> order;
  for (const SpriteScript& s : sc.sprites) order.push_back(&s);
  std::stable_sort(order.begin(), order.end(), [](const SpriteScript* a, const SpriteScript* b) {
    if (a->depth != b->depth) return a->depth < b->depth;
    return a->id < b->id;
  });
  std::vector<std::vector<int>> textures;
  for (const SpriteScript* s : order) textures.push_back(make_texture(*s, seed));

  RenderedScenario out;
  const size_t npix = static_cast<size_t>(sc.width) * sc.height;
  std::vector<int> canvas(npix);
  std::vector<int> owner(npix);
  for (int f = 0; f < sc.length; ++f) {
    canvas = background;
    std::fill(owner.begin(), owner.end(), -1);
    std::vector<long long> total(order.size(), 0);
    std::vector<BoundingBox> boxes(order.size());

    for (size_t k = 0; k < order.size(); ++k) {
      const SpriteScript& s = *order[k];
      const int w = s.width_at(f);
      const int h = s.height_at(f);
      const int x0 = s.path[f].cx - w / 2;
      const int y0 = s.path[f].cy - h / 2;
      BoundingBox box{sc.width, sc.height, -1, -1};
      for (int py = 0; py < h; ++py) {
        for (int px = 0; px < w; ++px) {
          if (!inside_shape(s.shape, px, py, w, h)) continue;
          ++total[k];
          const int x = x0 + px;
          const int y = y0 + py;
          if (x < 0 || y < 0 || x >= sc.width || y >= sc.height) continue;
          box.x_min = std::min(box.x_min, x);
          box.y_min = std::min(box.y_min, y);
          box.x_max = std::max(box.x_max, x);
          box.y_max = std::max(box.y_max, y);
          const int tx = px * s.width / w;
          const int ty = py * s.height / h;
          const size_t i = static_cast<size_t>(y) * sc.width + x;
          canvas[i] = textures[k][static_cast<size_t>(ty) * s.width + tx];
          owner[i] = static_cast<int>(k);
        }
      }
      boxes[k] = box;
    }

    std::vector<long long> visible(order.size(), 0);
    for (int o : owner) {
      if (o >= 0) ++visible[o];
    }

    FrameBuffer frame(sc.width, sc.height, f);
    auto px = frame.pixels();
    for (size_t i = 0; i < npix; ++i) px[i] = static_cast<float>(canvas[i]) / 255.0f;
    out.frames.push_back(std::move(frame));

    std::vector<SpriteTruth> truth;
    for (const SpriteScript& s : sc.sprites) {
      const size_t k = static_cast<size_t>(
          std::find(order.begin(), order.end(), &s) - order.begin());
      SpriteTruth t;
      t.sprite_id = s.id;
      t.bbox = boxes[k];
      t.visibility = total[k] > 0 ? static_cast<double>(visible[k]) / static_cast<double>(total[k]) : 0.0;
      truth.push_back(t);
    }
    out.truth.frames.push_back(std::move(truth));
  }
  return out;
}

Scenario parse_scenario(std::istream& in) {
  Scenario sc;
  sc.name = "unnamed";
  std::map<int, std::vector<SpriteKey>> keys;
  std::string line;
  int lineno = 0;
  bool have_length = false;
  auto fail = [&](const std::string& why) {
    invalid("line " + std::to_string(lineno) + ": " + why);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string word;
    if (!(ls >> word)) continue;
    if (word == "name") {
      if (!(ls >> sc.name)) fail("name needs an identifier");
    } else if (word == "size") {
      if (!(ls >> sc.width >> sc.height)) fail("size needs <width> <height>");
    } else if (word == "length") {
      if (!(ls >> sc.length)) fail("length needs a frame count");
      have_length = true;
    } else if (word == "background") {
      std::string kind;
      ls >> kind;
      BackgroundSpec& bg = sc.background;
      if (kind == "flat") {
        bg.kind = BackgroundKind::Flat;
        if (!(ls >> bg.level)) fail("background flat needs <level>");
      } else if (kind == "noise") {
        bg.kind = BackgroundKind::Noise;
        if (!(ls >> bg.lo >> bg.hi)) fail("background noise needs <lo> <hi>");
      } else if (kind == "tiles") {
        bg.kind = BackgroundKind::Tiles;
        if (!(ls >> bg.cell >> bg.lo >> bg.hi)) fail("background tiles needs <cell> <lo> <hi>");
      } else {
        fail("unknown background kind '" + kind + "'");
      }
    } else if (word == "sprite") {
      SpriteScript s;
      std::string shape, kw;
      if (!(ls >> s.id >> shape >> s.width >> s.height)) fail("sprite needs <id> <shape> <w> <h>");
      if (shape == "rect") {
        s.shape = SpriteShape::Rect;
      } else if (shape == "ellipse") {
        s.shape = SpriteShape::Ellipse;
      } else {
        fail("unknown sprite shape '" + shape + "'");
      }
      while (ls >> kw) {
        if (kw == "depth") {
          if (!(ls >> s.depth)) fail("depth needs a value");
        } else if (kw == "texture") {
          if (!(ls >> s.texture_lo >> s.texture_hi)) fail("texture needs <lo> <hi>");
        } else if (kw == "cell") {
          if (!(ls >> s.texture_cell)) fail("cell needs a value");
        } else {
          fail("unknown sprite attribute '" + kw + "'");
        }
      }
      sc.sprites.push_back(s);
    } else if (word == "key") {
      int id = 0;
      SpriteKey k;
      if (!(ls >> id >> k.frame >> k.pose.cx >> k.pose.cy)) fail("key needs <id> <frame> <cx> <cy>");
      if (!(ls >> k.pose.scale_pct)) k.pose.scale_pct = 100;
      keys[id].push_back(k);
    } else {
      fail("unknown directive '" + word + "'");
    }
    std::string extra;
    if (word != "sprite" && (ls >> extra)) fail("unexpected token '" + extra + "'");
  }
  if (!have_length) invalid("scenario is missing 'length'");
  for (SpriteScript& s : sc.sprites) {
    auto it = keys.find(s.id);
    if (it == keys.end()) invalid("sprite " + std::to_string(s.id) + " has no keys");
    s.path = interpolate_path(it->second, sc.length);
    keys.erase(it);
  }
  if (!keys.empty()) invalid("key refers to undeclared sprite " + std::to_string(keys.begin()->first));
  validate(sc);
  return sc;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::MissingInput, "cannot open scenario " + path.string());
  return parse_scenario(in);
}

void write_scenario(std::ostream& out, const Scenario& sc) {
  out << "name " << sc.name << "\nsize " << sc.width << ' ' << sc.height << "\nlength " << sc.length
      << "\nbackground ";
  switch (sc.background.kind) {
    case BackgroundKind::Flat: out << "flat " << sc.background.level; break;
    case BackgroundKind::Noise: out << "noise " << sc.background.lo << ' ' << sc.background.hi; break;
    case BackgroundKind::Tiles:
      out << "tiles " << sc.background.cell << ' ' << sc.background.lo << ' ' << sc.background.hi;
      break;
  }
  out << '\n';
  for (const SpriteScript& s : sc.sprites) {
    out << "sprite " << s.id << ' ' << (s.shape == SpriteShape::Rect ? "rect" : "ellipse") << ' '
        << s.width << ' ' << s.height << " depth " << s.depth << " texture " << s.texture_lo << ' '
        << s.texture_hi << " cell " << s.texture_cell << '\n';
    // Every frame is written as a key so the round trip is exact.
    for (int f = 0; f < sc.length; ++f) {
      const SpritePose& p = s.path[f];
      out << "key " << s.id << ' ' << f << ' ' << p.cx << ' ' << p.cy << ' ' << p.scale_pct << '\n';
    }
  }
}

namespace {

// Scripted sprite with linear keys; texture cell picked below.
SpriteScript sprite(int id, SpriteShape shape, int w, int h, int depth,
                    const std::vector<SpriteKey>& keys, int length) {
  SpriteScript s;
  s.id = id;
  s.shape = shape;
  s.width = w;
  s.height = h;
  s.depth = depth;
  s.path = interpolate_path(keys, length);
  return s;
}

// Smallest texture cell in {3..6} whose texture yields at least
// `min_points` interest points inside the sprite's bbox for every probe
// seed. The probe renders the sprite alone at its first pose on the
// scenario's own canvas and background, with the default detector. Falls
// back to the cell with the best worst case.
int choose_texture_cell(const Scenario& sc, const SpriteScript& proto, int min_points) {
  Scenario probe = sc;
  probe.length = 2;
  SpriteScript s = proto;
  s.path = {proto.path.front(), proto.path.front()};
  MotionRegion all;
  all.bbox = {0, 0, sc.width - 1, sc.height - 1};
  for (int y = 0; y < sc.height; ++y) {
    for (int x = 0; x < sc.width; ++x) all.mask.push_back({x, y});
  }
  int best_cell = 4;
  int best_worst = -1;
  for (int cell : {3, 4, 5, 6}) {
    s.texture_cell = cell;
    probe.sprites = {s};
    int worst = std::numeric_limits<int>::max();
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const RenderedScenario r = render(probe, seed);
      const BoundingBox& b = r.truth.frames[0][0].bbox;
      const auto points = detect(r.frames[0], {all});
      const int inside = static_cast<int>(std::count_if(points.begin(), points.end(), [&](const InterestPoint& p) {
        return p.x >= b.x_min && p.x <= b.x_max && p.y >= b.y_min && p.y <= b.y_max;
      }));
      worst = std::min(worst, inside);
    }
    if (worst >= min_points) return cell;
    if (worst > best_worst) {
      best_worst = worst;
      best_cell = cell;
    }
  }
  return best_cell;
}

void texture_all(Scenario& sc) {
  for (SpriteScript& s : sc.sprites) s.texture_cell = choose_texture_cell(sc, s, 10);
}

}  // namespace

std::map<std::string, Scenario> scenario_library() {
  std::map<std::string, Scenario> lib;
  auto base = [](const std::string& name, int length) {
    Scenario sc;
    sc.name = name;
    sc.width = 160;
    sc.height = 120;
    sc.length = length;
    sc.background = {BackgroundKind::Flat, 50, 0, 255, 8};
    return sc;
  };
  const auto rect = SpriteShape::Rect;
  const auto ellipse = SpriteShape::Ellipse;

  {
    Scenario sc = base("lone_walker", 100);
    sc.sprites.push_back(sprite(1, rect, 28, 40, 0, {{0, {25, 55, 100}}, {99, {135, 68, 100}}}, 100));
    lib.emplace(sc.name, sc);
  }
  {
    // Common velocity for the first half, then opposite vertical drift.
    Scenario sc = base("pair_separates", 100);
    sc.sprites.push_back(sprite(1, rect, 26, 36, 0,
                                {{0, {30, 40, 100}}, {50, {80, 40, 100}}, {99, {128, 22, 100}}}, 100));
    sc.sprites.push_back(sprite(2, rect, 26, 36, 0,
                                {{0, {30, 80, 100}}, {50, {80, 80, 100}}, {99, {128, 98, 100}}}, 100));
    lib.emplace(sc.name, sc);
  }
  {
    Scenario sc = base("pair_joins", 100);
    sc.sprites.push_back(sprite(1, rect, 26, 36, 0,
                                {{0, {30, 22, 100}}, {50, {80, 40, 100}}, {99, {128, 40, 100}}}, 100));
    sc.sprites.push_back(sprite(2, rect, 26, 36, 0,
                                {{0, {30, 98, 100}}, {50, {80, 80, 100}}, {99, {128, 80, 100}}}, 100));
    lib.emplace(sc.name, sc);
  }
  {
    // A static pillar hides the lower half of the walker as it passes.
    Scenario sc = base("partial_occlusion", 100);
    sc.sprites.push_back(sprite(1, rect, 28, 40, 0, {{0, {25, 60, 100}}, {99, {135, 60, 100}}}, 100));
    sc.sprites.push_back(sprite(2, rect, 16, 22, 1, {{0, {80, 72, 100}}}, 100));
    sc.sprites.back().texture_lo = 60;
    sc.sprites.back().texture_hi = 90;
    lib.emplace(sc.name, sc);
  }
  {
    // Sprite 1 walks right behind the larger sprite 2 walking left.
    Scenario sc = base("full_occlusion_cross", 100);
    sc.sprites.push_back(sprite(1, rect, 26, 36, 0, {{0, {14, 60, 100}}, {99, {146, 60, 100}}}, 100));
    sc.sprites.push_back(sprite(2, rect, 40, 48, 1, {{0, {146, 60, 100}}, {99, {14, 60, 100}}}, 100));
    lib.emplace(sc.name, sc);
  }
  {
    // Linear shrink to half size while walking.
    Scenario sc = base("scale_change", 100);
    sc.sprites.push_back(sprite(1, rect, 48, 72, 0, {{0, {34, 62, 100}}, {99, {130, 56, 50}}}, 100));
    lib.emplace(sc.name, sc);
  }
  {
    Scenario sc = base("cluttered_background", 100);
    sc.background = {BackgroundKind::Tiles, 50, 20, 110, 6};
    sc.sprites.push_back(sprite(1, ellipse, 32, 44, 0, {{0, {25, 55, 100}}, {99, {135, 68, 100}}}, 100));
    lib.emplace(sc.name, sc);
  }
  for (auto& [name, sc] : lib) texture_all(sc);
  return lib;
}

void write_ground_truth(std::ostream& out, const GroundTruth& truth) {
  out << "frame,sprite_id,x_min,y_min,x_max,y_max,visibility\n";
  char buf[160];
  for (size_t f = 0; f < truth.frames.size(); ++f) {
    for (const SpriteTruth& t : truth.frames[f]) {
      std::snprintf(buf, sizeof buf, "%zu,%d,%d,%d,%d,%d,%.6f\n", f, t.sprite_id, t.bbox.x_min,
                    t.bbox.y_min, t.bbox.x_max, t.bbox.y_max, t.visibility);
      out << buf;
    }
  }
}

GroundTruth read_ground_truth(std::istream& in) {
  GroundTruth truth;
  std::string line;
  if (!std::getline(in, line) || line != "frame,sprite_id,x_min,y_min,x_max,y_max,visibility") {
    throw Error(ErrorKind::SchemaMismatch, "ground-truth CSV header mismatch");
  }
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    int frame = 0;
    SpriteTruth t;
    if (!(ls >> frame >> t.sprite_id >> t.bbox.x_min >> t.bbox.y_min >> t.bbox.x_max >>
          t.bbox.y_max >> t.visibility) ||
        frame < 0) {
      throw Error(ErrorKind::SchemaMismatch, "bad ground-truth row at line " + std::to_string(lineno));
    }
    if (truth.frames.size() <= static_cast<size_t>(frame)) truth.frames.resize(frame + 1);
    truth.frames[frame].push_back(t);
  }
  return truth;
}

void write_rendered(const std::filesystem::path& dir, const RenderedScenario& rendered) {
  std::filesystem::create_directories(dir);
  char name[64];
  for (const FrameBuffer& f : rendered.frames) {
    std::snprintf(name, sizeof name, "frame_%05d.png", f.index());
    write_png(dir / name, f);
  }
  std::ofstream truth(dir / "truth.csv");
  if (!truth) throw Error(ErrorKind::Io, "cannot write " + (dir / "truth.csv").string());
  write_ground_truth(truth, rendered.truth);
}

}  // namespace kinetrack
