#include "kinetrack/metrics.h"

#include <algorithm>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "json.hpp"
#include "kinetrack/error.h"

namespace kinetrack {

std::vector<TrackRow> read_track_rows(std::istream& in) {
  std::vector<TrackRow> rows;
  std::string line;
  if (!std::getline(in, line) || line != "frame,cluster_id,track_id,x,y,matched") {
    throw Error(ErrorKind::SchemaMismatch, "tracks CSV header mismatch");
  }
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    TrackRow r;
    int matched = 0;
    std::string extra;
    if (!(ls >> r.frame >> r.cluster >> r.track >> r.position.x >> r.position.y >> matched) ||
        (ls >> extra) || (matched != 0 && matched != 1)) {
      throw Error(ErrorKind::SchemaMismatch, "bad tracks row at line " + std::to_string(lineno));
    }
    r.matched = matched == 1;
    rows.push_back(r);
  }
  return rows;
}

MetricsReport compute_metrics(const std::vector<TrackRow>& rows, const GroundTruth& truth,
                              const MetricsWindow& window) {
  // frame -> cluster -> matched positions
  std::map<int, std::map<int, std::vector<PixelPoint>>> matched;
  for (const TrackRow& r : rows) {
    if (r.matched) matched[r.frame][r.cluster].push_back(r.position);
  }

  std::map<int, SpriteMetrics> per_sprite;
  std::map<int, int> last_best;
  std::map<int, bool> was_covered;
  const int last = std::min<long long>(window.last_frame, static_cast<long long>(truth.frames.size()) - 1);
  for (int f = std::max(0, window.first_frame); f <= last; ++f) {
    const auto frame_it = matched.find(f);
    for (const SpriteTruth& t : truth.frames[f]) {
      SpriteMetrics& m = per_sprite[t.sprite_id];
      m.sprite_id = t.sprite_id;
      if (!(t.visibility > 0.5)) continue;
      ++m.frames_visible;

      int best = -1;
      int best_count = -1;
      if (frame_it != matched.end()) {
        for (const auto& [cluster, pts] : frame_it->second) {
          double sx = 0.0, sy = 0.0;
          int inside = 0;
          for (const PixelPoint& p : pts) {
            sx += p.x;
            sy += p.y;
            if (t.bbox.contains(p.x, p.y)) ++inside;
          }
          const double cx = sx / pts.size();
          const double cy = sy / pts.size();
          if (!t.bbox.contains(cx, cy)) continue;
          if (inside > best_count) {
            best = cluster;
            best_count = inside;
          }
        }
      }

      if (best < 0) {
        was_covered[t.sprite_id] = false;
        continue;
      }
      ++m.frames_covered;
      ++m.frames_per_cluster[best];
      auto prev = last_best.find(t.sprite_id);
      if (prev != last_best.end() && prev->second != best) ++m.identity_switches;
      if (prev != last_best.end() && !was_covered[t.sprite_id]) ++m.fragmentation;
      last_best[t.sprite_id] = best;
      was_covered[t.sprite_id] = true;
    }
  }

  MetricsReport report;
  for (auto& [id, m] : per_sprite) {
    m.coverage = m.frames_visible > 0 ? static_cast<double>(m.frames_covered) / m.frames_visible : 0.0;
    report.identity_switches += m.identity_switches;
    report.sprites.push_back(m);
  }
  return report;
}

void write_metrics_json(std::ostream& out, const MetricsReport& report) {
  nlohmann::ordered_json j;
  j["identity_switches"] = report.identity_switches;
  nlohmann::ordered_json sprites = nlohmann::ordered_json::array();
  for (const SpriteMetrics& m : report.sprites) {
    nlohmann::ordered_json s;
    s["sprite_id"] = m.sprite_id;
    s["frames_visible"] = m.frames_visible;
    s["frames_covered"] = m.frames_covered;
    s["coverage"] = m.coverage;
    s["identity_switches"] = m.identity_switches;
    s["fragmentation"] = m.fragmentation;
    nlohmann::ordered_json clusters = nlohmann::ordered_json::object();
    for (const auto& [c, n] : m.frames_per_cluster) clusters[std::to_string(c)] = n;
    s["frames_per_cluster"] = clusters;
    sprites.push_back(s);
  }
  j["sprites"] = sprites;
  out << j.dump(2) << '\n';
}

}  // namespace kinetrack
