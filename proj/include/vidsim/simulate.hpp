#pragma once

// Rolling-forecast simulation: pedestrians replay their experimental
// velocities for the first w steps after entry, then move with the model's
// predictions until they cross an exit.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vidsim/error.hpp"
#include "vidsim/features.hpp"
#include "vidsim/geometry.hpp"
#include "vidsim/ingest.hpp"
#include "vidsim/scenario.hpp"

namespace vidsim {

// Maps the last w feature frames (w x F, row-major, unnormalised) to v^{t+1}.
using VelocityModel = std::function<Vec2(std::span<const double>)>;

struct SimConfig {
  double dt = 0.5;
  std::size_t window = 8;
  FeatureConfig features;
  double standoff = 0.05;        // delta, m
  double tangent_weight = 0.7;
  double inward_weight = 0.3;
  double step_cap_factor = 10.0;  // cap = factor x experimental egress steps
};

struct SimPedestrian {
  PedId id = 0;
  long enter_step = 0;
  std::vector<Vec2> positions;
  std::vector<Vec2> velocities;            // velocities[k]: from positions[k] to positions[k+1]
  std::vector<std::vector<double>> frames;  // frames[k-1]: frame at position index k
  std::size_t corrections = 0;
  std::vector<long> correction_steps;

  std::size_t index() const { return positions.size() - 1; }
  Vec2 velocity() const { return velocities.empty() ? Vec2{} : velocities.back(); }
};

struct ExitRecord {
  SimPedestrian ped;
  long exit_step = 0;
};

struct CorrectionResult {
  Vec2 position;
  Vec2 velocity;
  Vec2 tangent;
  Vec2 inward;
  std::size_t edge = 0;
};

namespace detail {

inline double mean_speed(std::span<const Vec2> vs) {
  if (vs.empty()) return 0.0;
  double s = 0.0;
  for (auto v : vs) s += norm(v);
  return s / static_cast<double>(vs.size());
}

}  // namespace detail

// Moves a tentative position that left the walkable region back inside.
// `recent` holds the velocities whose mean speed sets the new speed (the
// tentative one included); `heading_dir` picks the tangent orientation.
inline CorrectionResult boundary_correction(Vec2 from, Vec2 tentative, Vec2 heading_dir, std::span<const Vec2> recent,
                                            const Polygon& walkable, const SimConfig& cfg) {
  const std::size_t n = walkable.size();
  if (n < 3) throw Error(ErrorKind::NoInwardDirection, "walkable region is not a polygon");
  const double orientation = signed_area(walkable) > 0.0 ? 1.0 : -1.0;

  // First boundary crossing along the path; if the path does not cross (the
  // start was already outside), the edge nearest the tentative position.
  std::optional<std::size_t> edge;
  double best_t = std::numeric_limits<double>::infinity();
  Vec2 crossing = tentative;
  const Segment path{from, tentative};
  for (std::size_t i = 0; i < n; ++i) {
    const Segment e{walkable[i], walkable[(i + 1) % n]};
    if (!is_valid(e)) continue;
    const Vec2 d = e.b - e.a;
    const Vec2 inward = Vec2{-d.y, d.x} * orientation;
    if (dot(tentative - from, inward) >= 0.0) continue;  // not leaving through this edge
    const auto t = segment_crossing_param(path, e);
    if (t && *t < best_t) {
      best_t = *t;
      edge = i;
      crossing = from + (tentative - from) * *t;
    }
  }
  if (!edge) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      const Segment e{walkable[i], walkable[(i + 1) % n]};
      if (!is_valid(e)) continue;
      const auto pr = point_segment_distance(tentative, e);
      if (pr.distance < best) {
        best = pr.distance;
        edge = i;
        crossing = pr.closest;
      }
    }
  }
  if (!edge) throw Error(ErrorKind::NoInwardDirection, "walkable region has no valid edge");

  const Segment e{walkable[*edge], walkable[(*edge + 1) % n]};
  Vec2 tangent = normalized(e.b - e.a);
  const Vec2 inward = Vec2{-tangent.y, tangent.x} * orientation;
  if (dot(tangent, heading_dir) < 0.0) tangent = -tangent;

  CorrectionResult out;
  out.edge = *edge;
  out.tangent = tangent;
  out.inward = inward;
  double delta = cfg.standoff;
  bool placed = false;
  for (int attempt = 0; attempt < 12; ++attempt, delta *= 0.5) {
    const Vec2 p = crossing + inward * delta;
    if (locate_point(p, walkable) == Containment::Inside) {
      out.position = p;
      placed = true;
      break;
    }
  }
  if (!placed)
    throw Error(ErrorKind::NoInwardDirection, "no inward point near (" + format_double(crossing.x) + ", " +
                                                  format_double(crossing.y) + ") on walkable edge " +
                                                  std::to_string(*edge));
  const Vec2 blend = tangent * cfg.tangent_weight + inward * cfg.inward_weight;
  const double bn = norm(blend);
  if (!(bn > 0.0)) throw Error(ErrorKind::NoInwardDirection, "tangent and inward directions cancel");
  out.velocity = blend / bn * detail::mean_speed(recent);
  return out;
}

struct RunReport {
  long first_step = 0;
  long last_step = 0;
  long step_cap = 0;
  bool step_cap_exceeded = false;
  std::size_t boundary_corrections = 0;
  double wall_time_s = 0.0;
  struct Ped {
    PedId id;
    long enter_step;
    long exit_step;  // last simulated step when not exited
    bool exited;
    std::size_t corrections;
    std::vector<long> correction_steps;
  };
  std::vector<Ped> pedestrians;
};

class SimWorld {
 public:
  SimWorld(ScenarioGeometry geometry, std::vector<Trajectory> seeds, SimConfig cfg)
      : geo_(std::move(geometry)), cfg_(std::move(cfg)), walls_(geo_.feature_walls()) {
    cfg_.features.validate();
    if (cfg_.window == 0) throw Error(ErrorKind::InvalidArgument, "window must be positive");
    for (auto& tr : seeds) {
      if (tr.positions.empty())
        throw Error(ErrorKind::MissingSeedData, "pedestrian " + std::to_string(tr.id) + " has no seed positions");
      if (seeds_.count(tr.id)) throw Error(ErrorKind::InvalidArgument, "duplicate pedestrian " + std::to_string(tr.id));
      pending_.push_back(tr.id);
      seeds_.emplace(tr.id, std::move(tr));
    }
    std::sort(pending_.begin(), pending_.end(), [&](PedId a, PedId b) {
      const long ea = seeds_.at(a).enter_step, eb = seeds_.at(b).enter_step;
      return ea != eb ? ea < eb : a < b;
    });
    if (!seeds_.empty()) {
      clock_ = seeds_.begin()->second.enter_step;
      for (const auto& [id, tr] : seeds_) clock_ = std::min(clock_, tr.enter_step);
    }
  }

  long clock() const { return clock_; }
  const std::vector<SimPedestrian>& active() const { return active_; }
  const std::vector<ExitRecord>& exited() const { return exited_; }
  std::size_t pending_count() const { return pending_.size() - next_pending_; }
  bool done() const { return pending_count() == 0 && active_.empty(); }
  std::size_t total() const { return seeds_.size(); }
  const ScenarioGeometry& geometry() const { return geo_; }
  const SimConfig& config() const { return cfg_; }

  // Experimental egress span in steps (first entry to last observation).
  long experimental_egress_steps() const {
    if (seeds_.empty()) return 0;
    long first = clock_, last = clock_;
    for (const auto& [id, tr] : seeds_) last = std::max(last, tr.last_step());
    for (const auto& [id, tr] : seeds_) first = std::min(first, tr.enter_step);
    return last - first;
  }

  // Snapshot of the active set at the current clock, sorted by id.
  std::vector<PedState> snapshot() const {
    std::vector<PedState> out;
    out.reserve(active_.size());
    for (const auto& p : active_) out.push_back(state_of(p, p.index()));
    std::sort(out.begin(), out.end(), [](const PedState& a, const PedState& b) { return a.id < b.id; });
    return out;
  }

  // Advances the clock by one step.
  void step(const VelocityModel& model) {
    const long t = clock_;
    while (next_pending_ < pending_.size() && seeds_.at(pending_[next_pending_]).enter_step <= t) {
      const auto& tr = seeds_.at(pending_[next_pending_++]);
      SimPedestrian p;
      p.id = tr.id;
      p.enter_step = tr.enter_step;
      p.positions.push_back(tr.positions.front());
      active_.push_back(std::move(p));
    }
    std::sort(active_.begin(), active_.end(), [](const SimPedestrian& a, const SimPedestrian& b) { return a.id < b.id; });

    const auto snap = snapshot();
    history_.push_back(snap);
    while (history_.size() > cfg_.window + 1) history_.pop_front();

    // Frames and tentative moves, all from the time-t snapshot.
    struct Move {
      Vec2 velocity;
      Vec2 next;
      bool exits = false;
      std::optional<CorrectionResult> correction;
    };
    std::vector<Move> moves(active_.size());
    const auto w = cfg_.window;
    for (std::size_t i = 0; i < active_.size(); ++i) {
      auto& p = active_[i];
      const std::size_t k = p.index();
      if (k >= 1) p.frames.push_back(assemble_frame(snap[i], snap, walls_, cfg_.features));
      Move& mv = moves[i];
      const Vec2 pos = p.positions.back();
      const bool seeded = k < w;
      if (seeded) {
        const auto& tr = seeds_.at(p.id);
        if (k >= tr.velocities.size()) {
          mv.exits = true;  // experimental record ends inside the seed window
          continue;
        }
        mv.velocity = tr.velocities[k];
      } else {
        std::vector<double> window;
        window.reserve(w * cfg_.features.dim());
        for (std::size_t r = p.frames.size() - w; r < p.frames.size(); ++r)
          window.insert(window.end(), p.frames[r].begin(), p.frames[r].end());
        mv.velocity = model(window);
      }
      mv.next = pos + mv.velocity * cfg_.dt;
      if (crosses_exit(pos, mv.next)) {
        mv.exits = true;
        continue;
      }
      if (!seeded && geo_.walkable.size() >= 3 && locate_point(mv.next, geo_.walkable) == Containment::Outside) {
        std::vector<Vec2> recent(p.velocities.end() - static_cast<std::ptrdiff_t>(std::min(w - 1, p.velocities.size())),
                                 p.velocities.end());
        recent.push_back(mv.velocity);
        mv.correction = boundary_correction(pos, mv.next, snap[i].heading, recent, geo_.walkable, cfg_);
        mv.next = mv.correction->position;
        mv.velocity = mv.correction->velocity;
      }
    }

    // Commit.
    std::vector<SimPedestrian> still;
    still.reserve(active_.size());
    for (std::size_t i = 0; i < active_.size(); ++i) {
      auto& p = active_[i];
      auto& mv = moves[i];
      if (mv.exits) {
        exited_.push_back({std::move(p), t + 1});
        continue;
      }
      p.positions.push_back(mv.next);
      p.velocities.push_back(mv.velocity);
      if (mv.correction) {
        ++p.corrections;
        p.correction_steps.push_back(t + 1);
        rewrite_history(p, mv.correction->velocity);
      }
      still.push_back(std::move(p));
    }
    active_ = std::move(still);
    ++clock_;
  }

  RunReport run(const VelocityModel& model) {
    const auto t0 = std::chrono::steady_clock::now();
    RunReport rep;
    rep.first_step = clock_;
    rep.step_cap = static_cast<long>(std::ceil(cfg_.step_cap_factor * static_cast<double>(std::max(1L, experimental_egress_steps()))));
    while (!done()) {
      if (clock_ - rep.first_step >= rep.step_cap) {
        rep.step_cap_exceeded = true;
        break;
      }
      step(model);
    }
    rep.last_step = clock_;
    for (const auto& e : exited_)
      rep.pedestrians.push_back({e.ped.id, e.ped.enter_step, e.exit_step, true, e.ped.corrections, e.ped.correction_steps});
    for (const auto& p : active_)
      rep.pedestrians.push_back({p.id, p.enter_step, p.enter_step + static_cast<long>(p.index()), false, p.corrections,
                                 p.correction_steps});
    std::sort(rep.pedestrians.begin(), rep.pedestrians.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    for (const auto& p : rep.pedestrians) rep.boundary_corrections += p.corrections;
    rep.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
  }

  // Simulated positions of every pedestrian that entered, sorted by id.
  std::vector<Trajectory> trajectories() const {
    std::vector<Trajectory> out;
    auto add = [&](const SimPedestrian& p) {
      Trajectory tr;
      tr.id = p.id;
      tr.enter_step = p.enter_step;
      tr.positions = p.positions;
      for (std::size_t k = 1; k < p.positions.size(); ++k)
        tr.velocities.push_back((p.positions[k] - p.positions[k - 1]) / cfg_.dt);
      out.push_back(std::move(tr));
    };
    for (const auto& e : exited_) add(e.ped);
    for (const auto& p : active_) add(p);
    std::sort(out.begin(), out.end(), [](const Trajectory& a, const Trajectory& b) { return a.id < b.id; });
    return out;
  }

 private:
  PedState state_of(const SimPedestrian& p, std::size_t k) const {
    PedState s;
    s.id = p.id;
    s.position = p.positions[k];
    s.velocity = k == 0 ? Vec2{} : p.velocities[k - 1];
    s.heading = heading(std::span<const Vec2>(p.velocities.data(), k), geo_.default_heading, cfg_.features.heading_eps);
    return s;
  }

  bool crosses_exit(Vec2 from, Vec2 to) const {
    const Segment path{from, to};
    for (const auto& e : geo_.exits)
      if (segment_crossing_param(path, e)) return true;
    return false;
  }

  // Replaces the w most recent velocities (the new one included) and
  // recomputes the frames whose own-velocity entry changed, against the
  // stored snapshots of those steps.
  void rewrite_history(SimPedestrian& p, Vec2 v) {
    const std::size_t w = cfg_.window;
    const std::size_t nv = p.velocities.size();
    const std::size_t first = nv > w ? nv - w : 0;
    for (std::size_t j = first; j < nv; ++j) p.velocities[j] = v;
    // Position index k carries velocities[k-1]; frames exist for k in [1, nv-1].
    const std::size_t k_now = nv - 1;  // index of p^t
    for (std::size_t k = std::max<std::size_t>(first + 1, 1); k <= k_now; ++k) {
      const std::size_t back = k_now - k;  // steps before t
      if (back >= history_.size()) continue;
      auto snap = history_[history_.size() - 1 - back];
      auto it = std::find_if(snap.begin(), snap.end(), [&](const PedState& s) { return s.id == p.id; });
      if (it == snap.end()) continue;
      *it = state_of(p, k);
      p.frames[k - 1] = assemble_frame(*it, snap, walls_, cfg_.features);
    }
  }

  ScenarioGeometry geo_;
  SimConfig cfg_;
  std::vector<Segment> walls_;
  std::map<PedId, Trajectory> seeds_;
  std::vector<PedId> pending_;
  std::size_t next_pending_ = 0;
  std::vector<SimPedestrian> active_;
  std::vector<ExitRecord> exited_;
  std::deque<std::vector<PedState>> history_;
  long clock_ = 0;
};

inline nlohmann::json run_report_to_json(const RunReport& r) {
  nlohmann::json peds = nlohmann::json::array();
  for (const auto& p : r.pedestrians)
    peds.push_back({{"id", p.id},
                    {"enter_step", p.enter_step},
                    {"exit_step", p.exit_step},
                    {"travel_steps", p.exit_step - p.enter_step},
                    {"exited", p.exited},
                    {"boundary_corrections", p.corrections},
                    {"correction_steps", p.correction_steps}});
  return {{"first_step", r.first_step},
          {"last_step", r.last_step},
          {"step_cap", r.step_cap},
          {"step_cap_exceeded", r.step_cap_exceeded},
          {"boundary_corrections", r.boundary_corrections},
          {"wall_time_s", r.wall_time_s},
          {"pedestrians", peds}};
}

}  // namespace vidsim
