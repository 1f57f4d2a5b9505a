#pragma once

// Synthetic scenarios: pedestrians walking polyline lanes at constant speed
// through a corridor, a corner or a T-junction, sampled at the raw frame rate.

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "vidsim/dataset.hpp"
#include "vidsim/error.hpp"
#include "vidsim/geometry.hpp"
#include "vidsim/ingest.hpp"
#include "vidsim/scenario.hpp"

namespace vidsim {

struct SynthConfig {
  std::string kind = "corridor";  // corridor | corner | tjunction
  std::size_t pedestrians = 50;
  std::uint64_t seed = 1;
  double speed_min = 0.9;   // m/s
  double speed_max = 1.3;
  double interval_s = 0.6;  // mean time between entries
  double noise = 0.0;       // position noise std, m
  double frame_rate = 16.0;
};

struct SynthData {
  Scenario scenario;
  RawDataset raw;
};

namespace detail {

inline Segment seg(double ax, double ay, double bx, double by) { return {{ax, ay}, {bx, by}}; }

inline Vec2 along(const std::vector<Vec2>& path, double s) {
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    const double len = distance(path[i], path[i + 1]);
    if (s <= len || i + 2 == path.size()) return path[i] + (path[i + 1] - path[i]) * (std::min(s, len) / len);
    s -= len;
  }
  return path.back();
}

inline double path_length(const std::vector<Vec2>& path) {
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < path.size(); ++i) s += distance(path[i], path[i + 1]);
  return s;
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

inline double normal(std::mt19937_64& rng) {
  // Box-Muller from the portable uniform source.
  const double u1 = std::max(uniform01(rng), 1e-300), u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
}

}  // namespace detail

inline ScenarioGeometry synth_geometry(const std::string& kind) {
  using detail::seg;
  ScenarioGeometry g;
  g.name = kind;
  if (kind == "corridor") {
    g.walls = {seg(0, 0, 14, 0), seg(0, 3, 14, 3)};
    g.virtual_walls = {seg(1, 0, 1, 3)};
    g.entrances = {seg(1, 0, 1, 3)};
    g.exits = {seg(13, 0, 13, 3)};
    g.clipping = {{1, 0}, {13, 0}, {13, 3}, {1, 3}};
    g.measurement = {{6, 0}, {8, 0}, {8, 3}, {6, 3}};
    g.measurement_width = 3.0;
    g.default_heading = {1, 0};
  } else if (kind == "corner") {
    g.walls = {seg(0, 0, 8, 0), seg(8, 0, 8, 10), seg(0, 3, 5, 3), seg(5, 3, 5, 10)};
    g.virtual_walls = {seg(1, 0, 1, 3)};
    g.entrances = {seg(1, 0, 1, 3)};
    g.exits = {seg(5, 9, 8, 9)};
    g.clipping = {{1, 0}, {8, 0}, {8, 9}, {5, 9}, {5, 3}, {1, 3}};
    g.measurement = {{5, 4}, {8, 4}, {8, 6}, {5, 6}};
    g.measurement_width = 3.0;
    g.default_heading = {1, 0};
  } else if (kind == "tjunction") {
    g.walls = {seg(0, 0, 11, 0), seg(0, 3, 4, 3), seg(4, 3, 4, 12), seg(7, 3, 11, 3), seg(7, 3, 7, 12)};
    g.virtual_walls = {seg(1, 0, 1, 3), seg(10, 0, 10, 3)};
    g.entrances = g.virtual_walls;
    g.exits = {seg(4, 11, 7, 11)};
    g.clipping = {{1, 0}, {10, 0}, {10, 3}, {7, 3}, {7, 11}, {4, 11}, {4, 3}, {1, 3}};
    g.measurement = {{4, 5}, {7, 5}, {7, 7}, {4, 7}};
    g.measurement_width = 3.0;
    g.default_heading = {0, 1};
  } else {
    throw Error(ErrorKind::Config, "unknown synthetic scenario '" + kind + "' (corridor, corner, tjunction)");
  }
  g.walkable = g.clipping;
  return g;
}

inline SynthData generate_synthetic(const SynthConfig& cfg) {
  if (cfg.pedestrians == 0) throw Error(ErrorKind::InvalidArgument, "need at least one pedestrian");
  if (!(cfg.speed_min > 0.0) || cfg.speed_max < cfg.speed_min)
    throw Error(ErrorKind::InvalidArgument, "speed range must be positive and ordered");
  SynthData out;
  out.scenario.geometry = synth_geometry(cfg.kind);
  out.scenario.frame_rate = cfg.frame_rate;
  out.raw.frame_rate = cfg.frame_rate;
  std::mt19937_64 rng(cfg.seed);
  double t = 0.0;
  for (std::size_t i = 0; i < cfg.pedestrians; ++i) {
    const PedId id = static_cast<PedId>(i + 1);
    const double speed = detail::uniform(rng, cfg.speed_min, cfg.speed_max);
    const double d = detail::uniform(rng, 0.4, 2.6);
    std::vector<Vec2> path;
    if (cfg.kind == "corridor") {
      path = {{0, d}, {14, d}};
    } else if (cfg.kind == "corner") {
      path = {{0, d}, {8 - d, d}, {8 - d, 10}};
    } else {
      const double u = detail::uniform(rng, 0.4, 1.4);
      if (i % 2 == 0) path = {{0, d}, {4 + u, d}, {4 + u, 12}};
      else path = {{11, d}, {7 - u, d}, {7 - u, 12}};
    }
    const long f0 = std::lround(t * cfg.frame_rate);
    const double len = detail::path_length(path);
    auto& rows = out.raw.pedestrians[id];
    for (long f = 0;; ++f) {
      const double s = speed * static_cast<double>(f) / cfg.frame_rate;
      if (s > len) break;
      Vec2 p = detail::along(path, s);
      if (cfg.noise > 0.0) p = p + Vec2{detail::normal(rng), detail::normal(rng)} * cfg.noise;
      rows.push_back({id, f0 + f, p.x, p.y});
    }
    t += cfg.interval_s * detail::uniform(rng, 0.5, 1.5);
  }
  return out;
}

}  // namespace vidsim
