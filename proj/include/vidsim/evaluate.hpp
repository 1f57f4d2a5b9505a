#pragma once

// Realism metrics between experimental and simulated trajectory sets, and
// Voronoi density / velocity / flow series.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vidsim/error.hpp"
#include "vidsim/geometry.hpp"
#include "vidsim/ingest.hpp"
#include "vidsim/scenario.hpp"

namespace vidsim {

struct Summary {
  double mean = 0.0;
  double p95 = 0.0;
  std::size_t count = 0;
};

// Arithmetic mean and nearest-rank 95th percentile.
inline Summary summarize(std::vector<double> values) {
  Summary s;
  s.count = values.size();
  if (values.empty()) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  std::sort(values.begin(), values.end());
  const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(values.size())));
  s.p95 = values[std::max<std::size_t>(rank, 1) - 1];
  return s;
}

struct EgressError {
  double ete = 0.0;   // s
  double pete = 0.0;  // fraction
  long expt_steps = 0;
  long sim_steps = 0;
};

inline std::pair<long, long> egress_span(const std::vector<Trajectory>& trs) {
  long first = std::numeric_limits<long>::max(), last = std::numeric_limits<long>::min();
  for (const auto& t : trs) {
    first = std::min(first, t.enter_step);
    last = std::max(last, t.last_step());
  }
  return {first, last};
}

inline EgressError ete_pete(const std::vector<Trajectory>& expt, const std::vector<Trajectory>& sim, double dt) {
  if (expt.empty() || sim.empty()) throw Error(ErrorKind::EmptySet, "egress time needs nonempty trajectory sets");
  const auto [e0, e1] = egress_span(expt);
  const auto [s0, s1] = egress_span(sim);
  EgressError out;
  out.expt_steps = e1 - e0;
  out.sim_steps = s1 - s0;
  out.ete = static_cast<double>(std::abs(out.sim_steps - out.expt_steps)) * dt;
  out.pete = out.expt_steps > 0 ? out.ete / (static_cast<double>(out.expt_steps) * dt) : (out.ete == 0.0 ? 0.0 : std::numeric_limits<double>::infinity());
  return out;
}

struct PedestrianErrors {
  PedId id = 0;
  long expt_steps = 0;
  long sim_steps = 0;
  double tte = 0.0;                 // s
  std::optional<double> ptte;       // fraction; absent for zero experimental travel
  double tde = 0.0;                 // m
  double fde = 0.0;                 // m
};

// Pairs trajectories by id; every id must appear in both sets.
inline std::vector<std::pair<const Trajectory*, const Trajectory*>> match_ids(const std::vector<Trajectory>& expt,
                                                                              const std::vector<Trajectory>& sim) {
  std::map<PedId, const Trajectory*> e, s;
  for (const auto& t : expt) e[t.id] = &t;
  for (const auto& t : sim) s[t.id] = &t;
  std::vector<PedId> only_sim, only_expt;
  for (const auto& [id, p] : s)
    if (!e.count(id)) only_sim.push_back(id);
  for (const auto& [id, p] : e)
    if (!s.count(id)) only_expt.push_back(id);
  if (!only_sim.empty() || !only_expt.empty()) {
    std::string msg = "unmatched pedestrian ids;";
    auto list = [&](const char* what, const std::vector<PedId>& ids) {
      if (ids.empty()) return;
      msg += std::string(" ") + what + ":";
      for (auto id : ids) msg += " " + std::to_string(id);
      msg += ";";
    };
    list("only in simulation", only_sim);
    list("only in experiment", only_expt);
    throw Error(ErrorKind::UnmatchedId, msg);
  }
  std::vector<std::pair<const Trajectory*, const Trajectory*>> out;
  for (const auto& [id, p] : e) out.emplace_back(p, s.at(id));
  return out;
}

inline double tde(const Trajectory& expt, const Trajectory& sim) {
  if (expt.positions.empty() || sim.positions.empty())
    throw Error(ErrorKind::EmptySet, "pedestrian " + std::to_string(expt.id) + " has an empty trajectory");
  double total = 0.0;
  for (const auto& pe : expt.positions) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& ps : sim.positions) best = std::min(best, distance(pe, ps));
    total += best;
  }
  return total / static_cast<double>(expt.positions.size());
}

inline double fde(const Trajectory& expt, const Trajectory& sim) {
  if (expt.positions.empty() || sim.positions.empty())
    throw Error(ErrorKind::EmptySet, "pedestrian " + std::to_string(expt.id) + " has an empty trajectory");
  return distance(expt.positions.back(), sim.positions.back());
}

inline std::vector<PedestrianErrors> pedestrian_errors(const std::vector<Trajectory>& expt,
                                                       const std::vector<Trajectory>& sim, double dt) {
  std::vector<PedestrianErrors> out;
  for (const auto& [e, s] : match_ids(expt, sim)) {
    PedestrianErrors r;
    r.id = e->id;
    r.expt_steps = e->last_step() - e->enter_step;
    r.sim_steps = s->last_step() - s->enter_step;
    r.tte = static_cast<double>(std::abs(r.sim_steps - r.expt_steps)) * dt;
    if (r.expt_steps > 0) r.ptte = r.tte / (static_cast<double>(r.expt_steps) * dt);
    r.tde = tde(*e, *s);
    r.fde = fde(*e, *s);
    out.push_back(r);
  }
  return out;
}

struct TrajectoryMetrics {
  EgressError egress;
  std::vector<PedestrianErrors> pedestrians;
  Summary tte, ptte, tde, fde;
};

inline TrajectoryMetrics trajectory_metrics(const std::vector<Trajectory>& expt, const std::vector<Trajectory>& sim,
                                            double dt) {
  TrajectoryMetrics m;
  m.egress = ete_pete(expt, sim, dt);
  m.pedestrians = pedestrian_errors(expt, sim, dt);
  std::vector<double> tte, ptte, td, fd;
  for (const auto& p : m.pedestrians) {
    tte.push_back(p.tte);
    if (p.ptte) ptte.push_back(*p.ptte);
    td.push_back(p.tde);
    fd.push_back(p.fde);
  }
  m.tte = summarize(tte);
  m.ptte = summarize(ptte);
  m.tde = summarize(td);
  m.fde = summarize(fd);
  return m;
}

// ---- Voronoi measurements --------------------------------------------------

enum class DensityMethod { Voronoi, Simple };

struct Measurement {
  double density = 0.0;   // persons / m^2
  double velocity = 0.0;  // m/s
  double flow = 0.0;      // persons / s
};

namespace detail {

inline Polygon clip_convex(const Polygon& subject, const Polygon& convex) {
  Polygon out = subject;
  const Polygon c = counter_clockwise(convex);
  for (std::size_t i = 0; i < c.size() && !out.empty(); ++i) {
    const Vec2 e = c[(i + 1) % c.size()] - c[i];
    const Vec2 n{e.y, -e.x};
    out = clip_halfplane(out, n, dot(n, c[i]));
  }
  return out;
}

}  // namespace detail

// Density, speed and flow over the measurement area from the pedestrians
// present at one step. Absent when no cell reaches the area.
inline std::optional<Measurement> voronoi_measures(std::span<const Vec2> positions, std::span<const Vec2> velocities,
                                                   const ScenarioGeometry& geo,
                                                   DensityMethod method = DensityMethod::Voronoi) {
  const Polygon& M = geo.measurement;
  if (M.size() < 3) throw Error(ErrorKind::Config, "scenario has no measurement area");
  const double area_m = polygon_area(M);
  if (positions.empty()) return std::nullopt;
  Measurement out;
  if (method == DensityMethod::Simple) {
    std::size_t n = 0;
    double speed = 0.0;
    for (std::size_t i = 0; i < positions.size(); ++i)
      if (locate_point(positions[i], M) != Containment::Outside) {
        ++n;
        speed += norm(velocities[i]);
      }
    if (n == 0) return std::nullopt;
    out.density = static_cast<double>(n) / area_m;
    out.velocity = speed / static_cast<double>(n);
  } else {
    const Polygon& region = geo.walkable.size() >= 3 ? geo.walkable : M;
    const auto cells = bounded_voronoi(positions, region);
    double weight = 0.0, density = 0.0, speed = 0.0;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (!(cells[i].area > 0.0)) continue;
      const double a = polygon_area(detail::clip_convex(cells[i].polygon, M));
      if (!(a > 0.0)) continue;
      density += a / cells[i].area;
      speed += norm(velocities[i]) * a;
      weight += a;
    }
    if (!(weight > 0.0)) return std::nullopt;
    out.density = density / area_m;
    out.velocity = speed / weight;
  }
  out.flow = out.density * out.velocity * geo.measurement_width;
  return out;
}

struct SeriesSample {
  long step = 0;
  std::optional<Measurement> value;
};

using MeasurementSeries = std::vector<SeriesSample>;

inline MeasurementSeries profiles(const std::vector<Trajectory>& trs, const ScenarioGeometry& geo,
                                  DensityMethod method = DensityMethod::Voronoi) {
  MeasurementSeries out;
  if (trs.empty()) return out;
  const auto [first, last] = egress_span(trs);
  for (long t = first; t <= last; ++t) {
    std::vector<Vec2> pos, vel;
    for (const auto& tr : trs) {
      if (!tr.present_at(t)) continue;
      const auto k = static_cast<std::size_t>(t - tr.enter_step);
      pos.push_back(tr.positions[k]);
      vel.push_back(tr.velocity_at(k));
    }
    SeriesSample s;
    s.step = t;
    try {
      s.value = voronoi_measures(pos, vel, geo, method);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::DegenerateSites) throw;
    }
    out.push_back(s);
  }
  return out;
}

struct FdRow {
  std::string label;
  long step = 0;
  double density = 0.0;
  double velocity = 0.0;
  double specific_flow = 0.0;  // J / b
};

inline std::vector<FdRow> fundamental_diagram(const std::vector<std::pair<std::string, MeasurementSeries>>& series,
                                              double width) {
  std::vector<FdRow> out;
  for (const auto& [label, s] : series)
    for (const auto& sample : s) {
      if (!sample.value) continue;
      out.push_back({label, sample.step, sample.value->density, sample.value->velocity,
                     width > 0.0 ? sample.value->flow / width : sample.value->density * sample.value->velocity});
    }
  return out;
}

inline std::string fd_csv(const std::vector<FdRow>& rows) {
  std::string out = "label,step,density,velocity,specific_flow\n";
  for (const auto& r : rows)
    out += r.label + "," + std::to_string(r.step) + "," + format_double(r.density) + "," + format_double(r.velocity) +
           "," + format_double(r.specific_flow) + "\n";
  return out;
}

inline std::string profiles_csv(const std::vector<std::pair<std::string, MeasurementSeries>>& series, double dt) {
  std::string out = "label,step,time_s,density,velocity,flow\n";
  for (const auto& [label, s] : series)
    for (const auto& sample : s) {
      out += label + "," + std::to_string(sample.step) + "," + format_double(static_cast<double>(sample.step) * dt);
      if (sample.value)
        out += "," + format_double(sample.value->density) + "," + format_double(sample.value->velocity) + "," +
               format_double(sample.value->flow);
      else
        out += ",,,";
      out += "\n";
    }
  return out;
}

inline nlohmann::json summary_to_json(const Summary& s) { return {{"mean", s.mean}, {"p95", s.p95}, {"count", s.count}}; }

inline nlohmann::json metrics_to_json(const TrajectoryMetrics& m) {
  nlohmann::json peds = nlohmann::json::array();
  for (const auto& p : m.pedestrians) {
    nlohmann::json j{{"id", p.id},      {"expt_steps", p.expt_steps}, {"sim_steps", p.sim_steps},
                     {"tte_s", p.tte},  {"tde_m", p.tde},             {"fde_m", p.fde}};
    j["ptte"] = p.ptte ? nlohmann::json(*p.ptte) : nlohmann::json(nullptr);
    peds.push_back(j);
  }
  return {{"ete_s", m.egress.ete},
          {"pete", std::isfinite(m.egress.pete) ? nlohmann::json(m.egress.pete) : nlohmann::json(nullptr)},
          {"expt_egress_steps", m.egress.expt_steps},
          {"sim_egress_steps", m.egress.sim_steps},
          {"tte_s", summary_to_json(m.tte)},
          {"ptte", summary_to_json(m.ptte)},
          {"tde_m", summary_to_json(m.tde)},
          {"fde_m", summary_to_json(m.fde)},
          {"pedestrians", peds}};
}

}  // namespace vidsim
