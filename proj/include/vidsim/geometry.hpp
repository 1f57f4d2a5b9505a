#pragma once

// 2D geometry kernel: points, segments, rays, polygons and bounded Voronoi
// cells. Everything here is a pure function of its arguments.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "vidsim/error.hpp"

namespace vidsim {

// Absolute slack (metres) for intersection predicates.
inline constexpr double kGeomEps = 1e-9;
// Minimum separation between Voronoi sites.
inline constexpr double kMinSiteSeparation = 1e-6;
inline constexpr double kPi = 3.14159265358979323846;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  constexpr Vec2& operator+=(Vec2 o) { x += o.x; y += o.y; return *this; }
  constexpr Vec2& operator-=(Vec2 o) { x -= o.x; y -= o.y; return *this; }
  constexpr Vec2& operator*=(double s) { x *= s; y *= s; return *this; }

  friend constexpr Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend constexpr Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend constexpr Vec2 operator-(Vec2 a) { return {-a.x, -a.y}; }
  friend constexpr Vec2 operator*(Vec2 a, double s) { return {a.x * s, a.y * s}; }
  friend constexpr Vec2 operator*(double s, Vec2 a) { return {a.x * s, a.y * s}; }
  friend constexpr Vec2 operator/(Vec2 a, double s) { return {a.x / s, a.y / s}; }
  friend constexpr bool operator==(Vec2 a, Vec2 b) = default;
};

constexpr double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
constexpr double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }
inline double distance(Vec2 a, Vec2 b) { return norm(a - b); }
inline double angle_of(Vec2 a) { return std::atan2(a.y, a.x); }
inline Vec2 unit_from_angle(double radians) { return {std::cos(radians), std::sin(radians)}; }
// Counter-clockwise rotation.
inline Vec2 rotate(Vec2 a, double radians) {
  const double c = std::cos(radians);
  const double s = std::sin(radians);
  return {c * a.x - s * a.y, s * a.x + c * a.y};
}
inline Vec2 normalized(Vec2 a) {
  const double n = norm(a);
  return n > 0.0 ? a / n : Vec2{};
}
inline double deg2rad(double deg) { return deg * kPi / 180.0; }

struct Segment {
  Vec2 a;
  Vec2 b;

  Vec2 direction() const { return b - a; }
  double length() const { return distance(a, b); }
  friend constexpr bool operator==(const Segment&, const Segment&) = default;
};

inline bool is_valid(const Segment& s) { return s.length() > 0.0; }

struct Ray {
  Vec2 origin;
  Vec2 direction;  // unit length
};

inline Ray make_ray(Vec2 origin, Vec2 direction) {
  const double n = norm(direction);
  if (!(n > 0.0)) throw Error(ErrorKind::InvalidArgument, "ray direction must be nonzero");
  return {origin, direction / n};
}

using Polygon = std::vector<Vec2>;

struct SegmentProjection {
  double distance = 0.0;
  Vec2 closest;
  double t = 0.0;  // parameter of closest along a->b, in [0, 1]
};

inline SegmentProjection point_segment_distance(Vec2 p, const Segment& s) {
  const Vec2 d = s.direction();
  const double len2 = dot(d, d);
  double t = len2 > 0.0 ? dot(p - s.a, d) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const Vec2 c = s.a + d * t;
  return {distance(p, c), c, t};
}

// Distance along the ray to its intersection with s (nearest overlap point
// when collinear), or nullopt.
inline std::optional<double> ray_segment_param(const Ray& r, const Segment& s) {
  const Vec2 e = s.direction();
  const double elen = norm(e);
  if (!(elen > 0.0)) return std::nullopt;
  const Vec2 ao = s.a - r.origin;
  const double denom = cross(r.direction, e);
  if (std::abs(denom) <= 1e-12 * elen) {
    if (std::abs(cross(ao, r.direction)) > kGeomEps) return std::nullopt;
    const double ta = dot(ao, r.direction);
    const double tb = dot(s.b - r.origin, r.direction);
    if (std::max(ta, tb) < -kGeomEps) return std::nullopt;
    return std::max(0.0, std::min(ta, tb));
  }
  const double t = cross(ao, e) / denom;
  const double u = cross(ao, r.direction) / denom;
  const double ueps = kGeomEps / elen;
  if (t < -kGeomEps || u < -ueps || u > 1.0 + ueps) return std::nullopt;
  return std::max(t, 0.0);
}

inline std::optional<Vec2> ray_segment_intersection(const Ray& r, const Segment& s) {
  if (auto t = ray_segment_param(r, s)) return r.origin + r.direction * *t;
  return std::nullopt;
}

struct RayHit {
  Vec2 point;
  std::size_t wall = 0;
  double distance = 0.0;
};

// Nearest wall hit; ties resolve to the lowest wall index.
inline std::optional<RayHit> first_hit(const Ray& r, std::span<const Segment> walls) {
  std::optional<RayHit> best;
  for (std::size_t i = 0; i < walls.size(); ++i) {
    const auto t = ray_segment_param(r, walls[i]);
    if (!t) continue;
    if (!best || *t < best->distance) best = RayHit{r.origin + r.direction * *t, i, *t};
  }
  return best;
}

// Parameter along `path` (0..1) of its first contact with `s`, or nullopt.
inline std::optional<double> segment_crossing_param(const Segment& path, const Segment& s) {
  const double plen = path.length();
  if (!(plen > 0.0)) return std::nullopt;
  const auto t = ray_segment_param(Ray{path.a, path.direction() / plen}, s);
  if (!t || *t > plen + kGeomEps) return std::nullopt;
  return std::min(*t / plen, 1.0);
}

// Signed shoelace area; positive for counter-clockwise vertex order.
inline double signed_area(std::span<const Vec2> poly) {
  const std::size_t n = poly.size();
  if (n < 3) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += cross(poly[i], poly[(i + 1) % n]);
  return 0.5 * acc;
}

inline double polygon_area(std::span<const Vec2> poly) { return std::abs(signed_area(poly)); }

inline Polygon counter_clockwise(Polygon poly) {
  if (signed_area(poly) < 0.0) std::reverse(poly.begin(), poly.end());
  return poly;
}

inline bool is_convex(std::span<const Vec2> poly) {
  const std::size_t n = poly.size();
  if (n < 3) return false;
  int sign = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 a = poly[i], b = poly[(i + 1) % n], c = poly[(i + 2) % n];
    const double z = cross(b - a, c - b);
    if (std::abs(z) <= kGeomEps * std::max(1.0, norm(b - a) * norm(c - b))) continue;
    const int s = z > 0.0 ? 1 : -1;
    if (sign == 0) sign = s;
    else if (s != sign) return false;
  }
  return sign != 0;
}

namespace detail {

inline int orient(Vec2 a, Vec2 b, Vec2 c) {
  const double z = cross(b - a, c - a);
  if (std::abs(z) <= kGeomEps) return 0;
  return z > 0.0 ? 1 : -1;
}

inline bool on_segment(Vec2 a, Vec2 b, Vec2 p) {
  return std::min(a.x, b.x) - kGeomEps <= p.x && p.x <= std::max(a.x, b.x) + kGeomEps &&
         std::min(a.y, b.y) - kGeomEps <= p.y && p.y <= std::max(a.y, b.y) + kGeomEps;
}

inline bool segments_touch(Vec2 p1, Vec2 p2, Vec2 q1, Vec2 q2) {
  const int o1 = orient(p1, p2, q1), o2 = orient(p1, p2, q2);
  const int o3 = orient(q1, q2, p1), o4 = orient(q1, q2, p2);
  if (o1 * o2 < 0 && o3 * o4 < 0) return true;
  if (o1 == 0 && on_segment(p1, p2, q1)) return true;
  if (o2 == 0 && on_segment(p1, p2, q2)) return true;
  if (o3 == 0 && on_segment(q1, q2, p1)) return true;
  return o4 == 0 && on_segment(q1, q2, p2);
}

}  // namespace detail

// True when no two non-adjacent edges touch and no vertex repeats.
inline bool is_simple(std::span<const Vec2> poly) {
  const std::size_t n = poly.size();
  if (n < 3) return false;
  for (std::size_t i = 0; i < n; ++i)
    if (distance(poly[i], poly[(i + 1) % n]) <= kGeomEps) return false;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 a1 = poly[i], a2 = poly[(i + 1) % n];
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool adjacent = (j == i + 1) || (i == 0 && j == n - 1);
      const Vec2 b1 = poly[j], b2 = poly[(j + 1) % n];
      if (adjacent) {
        // Adjacent edges may only share their common vertex: reject folds.
        const Vec2 shared = (j == i + 1) ? a2 : a1;
        const Vec2 u = (j == i + 1) ? a1 : a2;
        const Vec2 v = (j == i + 1) ? b2 : b1;
        if (detail::orient(u, shared, v) == 0 && dot(u - shared, v - shared) > 0.0) return false;
        continue;
      }
      if (detail::segments_touch(a1, a2, b1, b2)) return false;
    }
  }
  return polygon_area(poly) > 0.0;
}

enum class Containment { Outside, Boundary, Inside };

inline Containment locate_point(Vec2 p, std::span<const Vec2> poly) {
  const std::size_t n = poly.size();
  bool inside = false;
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Vec2 a = poly[j], b = poly[i];
    if (point_segment_distance(p, Segment{a, b}).distance <= kGeomEps) return Containment::Boundary;
    if ((a.y > p.y) != (b.y > p.y)) {
      const double xint = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
      if (p.x < xint) inside = !inside;
    }
  }
  return inside ? Containment::Inside : Containment::Outside;
}

// Keeps the part of `poly` where dot(n, x) <= c (one Sutherland-Hodgman pass).
inline Polygon clip_halfplane(std::span<const Vec2> poly, Vec2 n, double c) {
  Polygon out;
  const std::size_t m = poly.size();
  if (m == 0) return out;
  out.reserve(m + 2);
  for (std::size_t i = 0; i < m; ++i) {
    const Vec2 cur = poly[i];
    const Vec2 nxt = poly[(i + 1) % m];
    const double dc = dot(n, cur) - c;
    const double dn = dot(n, nxt) - c;
    if (dc <= 0.0) out.push_back(cur);
    if ((dc < 0.0 && dn > 0.0) || (dc > 0.0 && dn < 0.0)) {
      const double s = dc / (dc - dn);
      out.push_back(cur + (nxt - cur) * s);
    }
  }
  // Drop consecutive duplicates produced by vertices lying on the line.
  Polygon cleaned;
  cleaned.reserve(out.size());
  for (const Vec2& p : out)
    if (cleaned.empty() || distance(cleaned.back(), p) > 1e-14) cleaned.push_back(p);
  while (cleaned.size() > 1 && distance(cleaned.front(), cleaned.back()) <= 1e-14) cleaned.pop_back();
  if (cleaned.size() < 3) cleaned.clear();
  return cleaned;
}

// Clip a simple subject polygon by a convex clip polygon. The result is
// counter-clockwise; for a concave subject it may contain zero-width bridges
// but its shoelace area is the exact intersection area.
inline Polygon polygon_clip(std::span<const Vec2> subject, std::span<const Vec2> clip) {
  if (!is_simple(subject)) throw Error(ErrorKind::SelfIntersecting, "clip subject is not a simple polygon");
  if (!is_convex(clip)) throw Error(ErrorKind::InvalidArgument, "clip polygon must be convex");
  Polygon out = counter_clockwise(Polygon(subject.begin(), subject.end()));
  const Polygon c = counter_clockwise(Polygon(clip.begin(), clip.end()));
  for (std::size_t i = 0; i < c.size() && !out.empty(); ++i) {
    const Vec2 a = c[i], b = c[(i + 1) % c.size()];
    const Vec2 e = b - a;
    // Interior is to the left of a CCW edge: keep cross(e, x - a) >= 0.
    const Vec2 n{e.y, -e.x};
    out = clip_halfplane(out, n, dot(n, a));
  }
  return out;
}

struct VoronoiCell {
  Vec2 site;
  Polygon polygon;
  double area = 0.0;
};

// Voronoi cells of `sites` restricted to `area`, one per site in input order,
// built by half-plane clipping. A site whose cell misses the area gets an
// empty polygon with zero area.
inline std::vector<VoronoiCell> bounded_voronoi(std::span<const Vec2> sites, std::span<const Vec2> area) {
  if (sites.empty()) throw Error(ErrorKind::InvalidArgument, "bounded_voronoi needs at least one site");
  if (area.size() < 3) throw Error(ErrorKind::InvalidArgument, "bounded_voronoi needs a polygon area");
  for (std::size_t i = 0; i < sites.size(); ++i)
    for (std::size_t j = i + 1; j < sites.size(); ++j)
      if (distance(sites[i], sites[j]) < kMinSiteSeparation)
        throw Error(ErrorKind::DegenerateSites,
                    "sites " + std::to_string(i) + " and " + std::to_string(j) + " coincide");
  const Polygon base = counter_clockwise(Polygon(area.begin(), area.end()));
  std::vector<VoronoiCell> cells;
  cells.reserve(sites.size());
  for (std::size_t i = 0; i < sites.size(); ++i) {
    Polygon poly = base;
    const Vec2 si = sites[i];
    for (std::size_t j = 0; j < sites.size() && !poly.empty(); ++j) {
      if (j == i) continue;
      const Vec2 n = sites[j] - si;
      const Vec2 mid = (si + sites[j]) * 0.5;
      poly = clip_halfplane(poly, n, dot(n, mid));
    }
    const double a = polygon_area(poly);
    cells.push_back({si, std::move(poly), a});
  }
  return cells;
}

}  // namespace vidsim
