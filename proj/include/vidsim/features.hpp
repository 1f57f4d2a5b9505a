#pragma once

// Per-pedestrian feature extraction: radar nearest neighbours and forward
// ray casting against walls, flattened into one frame vector
//   [v (2) ; V' (Nj x 2) ; R' (Nj x 2) ; R (Nk x 2)].
// All constructions are anchored to the pedestrian's heading.

#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "vidsim/error.hpp"
#include "vidsim/geometry.hpp"

namespace vidsim {

enum class StaticVelocity { MinusOwnVelocity, Zero };

struct RadarConfig {
  double radius = 1.2;       // m
  double alpha_deg = 18.0;   // subarea central angle
  StaticVelocity static_velocity = StaticVelocity::MinusOwnVelocity;

  int subareas() const {
    const double n = 360.0 / alpha_deg;
    const long r = std::lround(n);
    if (!(alpha_deg > 0.0) || r < 1 || std::abs(n - static_cast<double>(r)) > 1e-9)
      throw Error(ErrorKind::Config, "alpha must divide 360 degrees");
    return static_cast<int>(r);
  }
  void validate() const {
    (void)subareas();
    if (!(radius > 0.0)) throw Error(ErrorKind::Config, "interaction radius must be positive");
  }
};

struct RglConfig {
  double beta_deg = 5.0;         // ray interval
  double exit_distance = 100.0;  // D_e, m

  int rays() const {
    const double n = 180.0 / beta_deg;
    const long r = std::lround(n);
    if (!(beta_deg > 0.0) || r < 1 || std::abs(n - static_cast<double>(r)) > 1e-9)
      throw Error(ErrorKind::Config, "beta must divide 180 degrees");
    return static_cast<int>(r) + 1;
  }
  void validate() const {
    (void)rays();
    if (!(exit_distance > 0.0)) throw Error(ErrorKind::Config, "exit distance must be positive");
  }
};

struct FeatureConfig {
  RadarConfig radar;
  RglConfig rgl;
  double heading_eps = 1e-3;  // m/s

  int subareas() const { return radar.subareas(); }
  int rays() const { return rgl.rays(); }
  std::size_t dim() const { return 2 + 4 * static_cast<std::size_t>(subareas()) + 2 * static_cast<std::size_t>(rays()); }
  void validate() const {
    radar.validate();
    rgl.validate();
  }
};

inline const char* to_string(StaticVelocity s) {
  return s == StaticVelocity::Zero ? "zero" : "minus_own_velocity";
}

inline StaticVelocity static_velocity_from_string(const std::string& s) {
  if (s == "minus_own_velocity") return StaticVelocity::MinusOwnVelocity;
  if (s == "zero") return StaticVelocity::Zero;
  throw Error(ErrorKind::Config, "unknown static velocity convention '" + s + "'");
}

// Snapshot of one pedestrian at one step.
struct PedState {
  long id = 0;
  Vec2 position;
  Vec2 velocity;
  Vec2 heading{1.0, 0.0};  // unit
};

// Current direction of motion, else the latest direction faster than eps,
// else the fallback. `history` runs oldest to newest.
inline Vec2 heading(std::span<const Vec2> history, Vec2 fallback, double eps = 1e-3) {
  for (auto it = history.rbegin(); it != history.rend(); ++it) {
    const double s = norm(*it);
    if (s > eps) return *it / s;
  }
  return normalized(fallback);
}

enum class NeighborKind { Pedestrian, Wall, Virtual };

struct Neighbor {
  Vec2 rel_position;
  Vec2 rel_velocity;
  NeighborKind kind = NeighborKind::Virtual;
  std::size_t index = 0;  // into others / walls
};

namespace detail {

inline double wrap_two_pi(double a) {
  constexpr double two_pi = 2.0 * kPi;
  a = std::fmod(a, two_pi);
  if (a < 0.0) a += two_pi;
  if (a >= two_pi) a -= two_pi;
  return a;
}

}  // namespace detail

// Angular start of subarea 0: the reverse extension of the heading.
inline double radar_base_angle(Vec2 heading_dir) { return angle_of(heading_dir) + kPi; }

// Subarea index of a relative offset; subareas run anticlockwise over
// half-open intervals [start, start + alpha).
inline int radar_subarea(Vec2 rel, Vec2 heading_dir, int subareas) {
  const double alpha = 2.0 * kPi / subareas;
  const double local = detail::wrap_two_pi(angle_of(rel) - radar_base_angle(heading_dir));
  const int j = static_cast<int>(std::floor(local / alpha));
  return std::min(std::max(j, 0), subareas - 1);
}

// Nearest point (relative to the origin) of segment [a, b] inside the closed
// wedge spanned anticlockwise from d0 to d1 (angle <= 180 deg), or of the
// whole segment when `whole_plane`.
inline std::optional<Vec2> nearest_in_wedge(Vec2 a, Vec2 b, Vec2 d0, Vec2 d1, bool whole_plane) {
  double t0 = 0.0, t1 = 1.0;
  const Vec2 e = b - a;
  if (!whole_plane) {
    // cross(d0, x) >= 0 and cross(x, d1) >= 0, x = a + t e.
    auto limit = [&](double c0, double slope) {
      // keep c0 + slope * t >= 0
      constexpr double slack = 1e-12;
      if (std::abs(slope) < 1e-300) return c0 >= -slack;
      const double root = -c0 / slope;
      if (slope > 0.0) t0 = std::max(t0, root);
      else t1 = std::min(t1, root);
      return true;
    };
    if (!limit(cross(d0, a), cross(d0, e))) return std::nullopt;
    if (!limit(cross(a, d1), cross(e, d1))) return std::nullopt;
    if (t0 > t1) return std::nullopt;
  }
  const double len2 = dot(e, e);
  double t = len2 > 0.0 ? -dot(a, e) / len2 : 0.0;
  t = std::clamp(t, t0, t1);
  return a + e * t;
}

inline std::vector<Neighbor> radar_neighbors(const PedState& self, std::span<const PedState> others,
                                             std::span<const Segment> walls, const RadarConfig& cfg) {
  const int nj = cfg.subareas();
  const double alpha = 2.0 * kPi / nj;
  const double base = radar_base_angle(self.heading);
  const Vec2 static_rel = cfg.static_velocity == StaticVelocity::Zero ? Vec2{} : -self.velocity;
  constexpr double inf = std::numeric_limits<double>::infinity();

  std::vector<Neighbor> out(static_cast<std::size_t>(nj));
  std::vector<double> best(static_cast<std::size_t>(nj), inf);

  for (std::size_t i = 0; i < others.size(); ++i) {
    const PedState& o = others[i];
    if (o.id == self.id) continue;
    const Vec2 rel = o.position - self.position;
    const double d = norm(rel);
    if (d > cfg.radius) continue;
    const auto j = static_cast<std::size_t>(radar_subarea(rel, self.heading, nj));
    if (d < best[j]) {
      best[j] = d;
      out[j] = {rel, o.velocity - self.velocity, NeighborKind::Pedestrian, i};
    }
  }

  const bool whole_plane = nj == 1;
  for (std::size_t w = 0; w < walls.size(); ++w) {
    const Vec2 a = walls[w].a - self.position;
    const Vec2 b = walls[w].b - self.position;
    // Cheap reject: wall entirely outside the interaction circle.
    if (point_segment_distance({0.0, 0.0}, Segment{a, b}).distance > cfg.radius) continue;
    for (int j = 0; j < nj; ++j) {
      const Vec2 d0 = unit_from_angle(base + j * alpha);
      const Vec2 d1 = unit_from_angle(base + (j + 1) * alpha);
      const auto p = nearest_in_wedge(a, b, d0, d1, whole_plane);
      if (!p) continue;
      const double d = norm(*p);
      const auto ju = static_cast<std::size_t>(j);
      if (d <= cfg.radius && d < best[ju]) {
        best[ju] = d;
        out[ju] = {*p, static_rel, NeighborKind::Wall, w};
      }
    }
  }

  for (int j = 0; j < nj; ++j) {
    const auto ju = static_cast<std::size_t>(j);
    if (best[ju] < inf) continue;
    out[ju] = {unit_from_angle(base + (j + 0.5) * alpha) * cfg.radius, static_rel, NeighborKind::Virtual, 0};
  }
  return out;
}

// Direction of ray k: from 90 deg anticlockwise of the heading, sweeping
// clockwise in steps of beta.
inline Vec2 rgl_ray_direction(Vec2 heading_dir, int k, const RglConfig& cfg) {
  return rotate(heading_dir, kPi / 2.0 - k * deg2rad(cfg.beta_deg));
}

inline std::vector<Vec2> rgl_rays(const PedState& self, std::span<const Segment> walls, const RglConfig& cfg) {
  const int nk = cfg.rays();
  std::vector<Vec2> out;
  out.reserve(static_cast<std::size_t>(nk));
  for (int k = 0; k < nk; ++k) {
    const Vec2 dir = rgl_ray_direction(self.heading, k, cfg);
    const auto hit = first_hit(Ray{self.position, dir}, walls);
    if (hit && hit->distance <= cfg.exit_distance) out.push_back(hit->point - self.position);
    else out.push_back(dir * cfg.exit_distance);
  }
  return out;
}

// Appends the flat frame for `self` to `out`.
inline void append_frame(std::vector<double>& out, const PedState& self, std::span<const PedState> others,
                         std::span<const Segment> walls, const FeatureConfig& cfg) {
  const auto nbrs = radar_neighbors(self, others, walls, cfg.radar);
  const auto rays = rgl_rays(self, walls, cfg.rgl);
  out.push_back(self.velocity.x);
  out.push_back(self.velocity.y);
  for (const auto& n : nbrs) {
    out.push_back(n.rel_velocity.x);
    out.push_back(n.rel_velocity.y);
  }
  for (const auto& n : nbrs) {
    out.push_back(n.rel_position.x);
    out.push_back(n.rel_position.y);
  }
  for (const auto& r : rays) {
    out.push_back(r.x);
    out.push_back(r.y);
  }
}

inline std::vector<double> assemble_frame(const PedState& self, std::span<const PedState> others,
                                          std::span<const Segment> walls, const FeatureConfig& cfg) {
  std::vector<double> out;
  out.reserve(cfg.dim());
  append_frame(out, self, others, walls, cfg);
  return out;
}

// Column names matching the flat frame order.
inline std::vector<std::string> feature_names(const FeatureConfig& cfg) {
  std::vector<std::string> names{"vx", "vy"};
  const int nj = cfg.subareas();
  const int nk = cfg.rays();
  for (int j = 1; j <= nj; ++j) {
    names.push_back("nbr" + std::to_string(j) + "_rvx");
    names.push_back("nbr" + std::to_string(j) + "_rvy");
  }
  for (int j = 1; j <= nj; ++j) {
    names.push_back("nbr" + std::to_string(j) + "_rx");
    names.push_back("nbr" + std::to_string(j) + "_ry");
  }
  for (int k = 1; k <= nk; ++k) {
    names.push_back("ray" + std::to_string(k) + "_rx");
    names.push_back("ray" + std::to_string(k) + "_ry");
  }
  return names;
}

}  // namespace vidsim
