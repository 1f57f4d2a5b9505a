#pragma once

// Scenario geometry and its JSON config document.

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vidsim/error.hpp"
#include "vidsim/geometry.hpp"

namespace vidsim {

struct SmoothingConfig {
  bool enabled = true;
  int window = 9;     // raw frames, odd
  int polyorder = 3;
};

struct ScenarioGeometry {
  std::string name;
  std::vector<Segment> walls;
  std::vector<Segment> virtual_walls;  // entrance closures, seen by features only
  std::vector<Segment> entrances;
  std::vector<Segment> exits;
  Polygon clipping;     // raw rows outside are dropped; empty = keep all
  Polygon walkable;     // motion region for simulation; defaults to clipping
  Polygon measurement;  // convex measurement area
  double measurement_width = 0.0;  // b in J = rho * v * b
  Vec2 default_heading{1.0, 0.0};

  // Walls visible to the neighbour and ray extractors.
  std::vector<Segment> feature_walls() const {
    std::vector<Segment> out = walls;
    out.insert(out.end(), virtual_walls.begin(), virtual_walls.end());
    return out;
  }
};

struct Scenario {
  ScenarioGeometry geometry;
  double frame_rate = 16.0;  // Hz of raw trajectory files
  double dt = 0.5;           // model step, s
  SmoothingConfig smoothing;
};

namespace detail {

inline Vec2 point_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 2) throw Error(ErrorKind::Config, "point must be [x, y]");
  return {j.at(0).get<double>(), j.at(1).get<double>()};
}

inline nlohmann::json point_to_json(Vec2 p) { return nlohmann::json::array({p.x, p.y}); }

inline std::vector<Segment> segments_from_json(const nlohmann::json& j, const char* key) {
  std::vector<Segment> out;
  if (!j.contains(key)) return out;
  for (const auto& s : j.at(key)) {
    Segment seg{point_from_json(s.at(0)), point_from_json(s.at(1))};
    if (!is_valid(seg)) throw Error(ErrorKind::Config, std::string(key) + ": zero-length segment");
    out.push_back(seg);
  }
  return out;
}

inline nlohmann::json segments_to_json(const std::vector<Segment>& segs) {
  auto arr = nlohmann::json::array();
  for (const auto& s : segs) arr.push_back({point_to_json(s.a), point_to_json(s.b)});
  return arr;
}

inline Polygon polygon_from_json(const nlohmann::json& j, const char* key) {
  Polygon out;
  if (!j.contains(key)) return out;
  for (const auto& p : j.at(key)) out.push_back(point_from_json(p));
  if (!out.empty() && !is_simple(out)) throw Error(ErrorKind::Config, std::string(key) + ": polygon is not simple");
  return out;
}

inline nlohmann::json polygon_to_json(const Polygon& poly) {
  auto arr = nlohmann::json::array();
  for (const auto& p : poly) arr.push_back(point_to_json(p));
  return arr;
}

}  // namespace detail

inline Scenario scenario_from_json(const nlohmann::json& j) {
  try {
    Scenario sc;
    auto& g = sc.geometry;
    g.name = j.value("name", std::string{});
    sc.frame_rate = j.value("frame_rate", 16.0);
    sc.dt = j.value("dt", 0.5);
    if (!(sc.frame_rate > 0.0)) throw Error(ErrorKind::Config, "frame_rate must be positive");
    if (!(sc.dt > 0.0)) throw Error(ErrorKind::Config, "dt must be positive");
    if (j.contains("smoothing")) {
      const auto& s = j.at("smoothing");
      sc.smoothing.enabled = s.value("enabled", true);
      sc.smoothing.window = s.value("window", 9);
      sc.smoothing.polyorder = s.value("polyorder", 3);
    }
    g.walls = detail::segments_from_json(j, "walls");
    g.virtual_walls = detail::segments_from_json(j, "virtual_walls");
    g.entrances = detail::segments_from_json(j, "entrances");
    g.exits = detail::segments_from_json(j, "exits");
    g.clipping = detail::polygon_from_json(j, "clipping");
    g.walkable = detail::polygon_from_json(j, "walkable");
    if (g.walkable.empty()) g.walkable = g.clipping;
    g.measurement = detail::polygon_from_json(j, "measurement");
    if (!g.measurement.empty() && !is_convex(g.measurement))
      throw Error(ErrorKind::Config, "measurement area must be convex");
    g.measurement_width = j.value("measurement_width", 0.0);
    if (j.contains("default_heading")) g.default_heading = normalized(detail::point_from_json(j.at("default_heading")));
    if (norm(g.default_heading) == 0.0) throw Error(ErrorKind::Config, "default_heading must be nonzero");
    return sc;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Config, std::string("scenario: ") + e.what());
  }
}

inline nlohmann::json scenario_to_json(const Scenario& sc) {
  const auto& g = sc.geometry;
  nlohmann::json j;
  j["name"] = g.name;
  j["frame_rate"] = sc.frame_rate;
  j["dt"] = sc.dt;
  j["smoothing"] = {{"enabled", sc.smoothing.enabled}, {"window", sc.smoothing.window},
                    {"polyorder", sc.smoothing.polyorder}};
  j["walls"] = detail::segments_to_json(g.walls);
  j["virtual_walls"] = detail::segments_to_json(g.virtual_walls);
  j["entrances"] = detail::segments_to_json(g.entrances);
  j["exits"] = detail::segments_to_json(g.exits);
  j["clipping"] = detail::polygon_to_json(g.clipping);
  j["walkable"] = detail::polygon_to_json(g.walkable);
  j["measurement"] = detail::polygon_to_json(g.measurement);
  j["measurement_width"] = g.measurement_width;
  j["default_heading"] = detail::point_to_json(g.default_heading);
  return j;
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Config, path + ": " + e.what());
  }
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path);
  out << text;
  if (!out) throw Error(ErrorKind::Io, "write failed: " + path);
}

inline Scenario load_scenario(const std::string& path) { return scenario_from_json(read_json_file(path)); }

}  // namespace vidsim
