#pragma once

// Sliding-window training samples built from resampled trajectories, and the
// train/validation split.

#include <algorithm>
#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <vector>

#include "vidsim/error.hpp"
#include "vidsim/features.hpp"
#include "vidsim/ingest.hpp"
#include "vidsim/scenario.hpp"

namespace vidsim {

// Feature frames of every pedestrian at every step where it has a velocity
// (position index k >= 1), computed from synchronous scene snapshots.
struct FrameTable {
  std::size_t dim = 0;
  struct Row {
    PedId id;
    long step;
  };
  std::vector<Row> rows;
  std::vector<double> values;  // rows.size() x dim
};

// Snapshot of every pedestrian present at `step`, sorted by id.
inline std::vector<PedState> snapshot_at(const std::vector<Trajectory>& trs, long step, Vec2 default_heading,
                                         double heading_eps) {
  std::vector<PedState> out;
  for (const auto& tr : trs) {
    if (!tr.present_at(step)) continue;
    const auto k = static_cast<std::size_t>(step - tr.enter_step);
    PedState s;
    s.id = tr.id;
    s.position = tr.positions[k];
    s.velocity = tr.velocity_at(k);
    s.heading = heading(std::span<const Vec2>(tr.velocities.data(), k), default_heading, heading_eps);
    out.push_back(s);
  }
  std::sort(out.begin(), out.end(), [](const PedState& a, const PedState& b) { return a.id < b.id; });
  return out;
}

// Frames keyed per pedestrian: result[id][k-1] is the frame at index k.
inline std::map<PedId, std::vector<std::vector<double>>> frames_by_pedestrian(const std::vector<Trajectory>& trs,
                                                                              const ScenarioGeometry& geo,
                                                                              const FeatureConfig& cfg) {
  std::map<PedId, std::vector<std::vector<double>>> out;
  if (trs.empty()) return out;
  long first = trs.front().enter_step, last = trs.front().last_step();
  for (const auto& tr : trs) {
    first = std::min(first, tr.enter_step);
    last = std::max(last, tr.last_step());
  }
  const auto walls = geo.feature_walls();
  for (long t = first; t <= last; ++t) {
    const auto snap = snapshot_at(trs, t, geo.default_heading, cfg.heading_eps);
    for (const auto& tr : trs) {
      if (!tr.present_at(t) || t == tr.enter_step) continue;
      auto it = std::find_if(snap.begin(), snap.end(), [&](const PedState& s) { return s.id == tr.id; });
      out[tr.id].push_back(assemble_frame(*it, snap, walls, cfg));
    }
  }
  return out;
}

inline FrameTable frame_table(const std::vector<Trajectory>& trs, const ScenarioGeometry& geo,
                              const FeatureConfig& cfg) {
  FrameTable table;
  table.dim = cfg.dim();
  const auto frames = frames_by_pedestrian(trs, geo, cfg);
  for (const auto& tr : trs) {
    auto it = frames.find(tr.id);
    if (it == frames.end()) continue;
    for (std::size_t k = 0; k < it->second.size(); ++k) {
      table.rows.push_back({tr.id, tr.enter_step + static_cast<long>(k) + 1});
      table.values.insert(table.values.end(), it->second[k].begin(), it->second[k].end());
    }
  }
  return table;
}

// Input window [x^{t-w+1}; ...; x^t] plus the velocity observed at t+1.
struct WindowSample {
  std::span<const double> input;  // window x dim, row-major
  Vec2 target;
};

// Frames stored once per pedestrian; a sample refers to w consecutive rows.
class SampleSet {
 public:
  SampleSet() = default;
  SampleSet(std::size_t window, std::size_t dim) : window_(window), dim_(dim) {}

  std::size_t window() const { return window_; }
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return refs_.size(); }
  bool empty() const { return refs_.empty(); }
  std::size_t frame_count() const { return dim_ ? frames_.size() / dim_ : 0; }

  WindowSample operator[](std::size_t i) const {
    const auto& r = refs_[i];
    return {std::span<const double>(frames_.data() + r.first_row * dim_, window_ * dim_), r.target};
  }
  PedId pedestrian(std::size_t i) const { return refs_[i].id; }
  long step(std::size_t i) const { return refs_[i].step; }

  // Adds one pedestrian's consecutive frames (frame k at frames[k-1]) and the
  // velocities that follow them.
  void add_pedestrian(const Trajectory& tr, const std::vector<std::vector<double>>& frames) {
    const std::size_t first_row = frame_count();
    for (const auto& f : frames) {
      if (f.size() != dim_) throw Error(ErrorKind::ShapeMismatch, "frame dimension mismatch");
      frames_.insert(frames_.end(), f.begin(), f.end());
    }
    // Frame rows cover k = 1..V; a window ending at k needs velocity index k.
    const std::size_t v = tr.velocities.size();
    for (std::size_t k = window_; k + 1 <= v; ++k) {
      if (k > frames.size()) break;
      refs_.push_back({first_row + (k - window_), tr.velocities[k], tr.id, tr.enter_step + static_cast<long>(k)});
    }
  }

  void append(const SampleSet& other) {
    if (other.window_ != window_ || other.dim_ != dim_) throw Error(ErrorKind::ShapeMismatch, "sample sets differ");
    const std::size_t offset = frame_count();
    frames_.insert(frames_.end(), other.frames_.begin(), other.frames_.end());
    for (auto r : other.refs_) {
      r.first_row += offset;
      refs_.push_back(r);
    }
  }

 private:
  struct Ref {
    std::size_t first_row;
    Vec2 target;
    PedId id;
    long step;  // step t of the last input frame
  };
  std::size_t window_ = 8;
  std::size_t dim_ = 0;
  std::vector<double> frames_;
  std::vector<Ref> refs_;
};

inline SampleSet build_samples(const std::vector<Trajectory>& trs, const ScenarioGeometry& geo,
                               const FeatureConfig& cfg, std::size_t window = 8) {
  if (window == 0) throw Error(ErrorKind::InvalidArgument, "window must be positive");
  SampleSet set(window, cfg.dim());
  const auto frames = frames_by_pedestrian(trs, geo, cfg);
  for (const auto& tr : trs) {
    auto it = frames.find(tr.id);
    if (it != frames.end()) set.add_pedestrian(tr, it->second);
  }
  return set;
}

struct DatasetSplit {
  std::vector<std::size_t> training;
  std::vector<std::size_t> validation;
  std::uint64_t seed = 0;
};

// Uniform integer in [0, n) from raw engine bits (portable across stdlibs).
inline std::uint64_t uniform_index(std::mt19937_64& rng, std::uint64_t n) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do x = rng(); while (x >= limit);
  return x % n;
}

inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

// Random 4:1 sample-level split; validation gets floor(n / 5).
inline DatasetSplit split(std::size_t sample_count, std::uint64_t seed) {
  if (sample_count < 5) throw Error(ErrorKind::TooFewSamples, "need at least 5 samples to split 4:1");
  std::vector<std::size_t> perm(sample_count);
  for (std::size_t i = 0; i < sample_count; ++i) perm[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = sample_count - 1; i > 0; --i) std::swap(perm[i], perm[uniform_index(rng, i + 1)]);
  const std::size_t n_val = sample_count / 5;
  DatasetSplit out;
  out.seed = seed;
  out.validation.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_val));
  out.training.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_val), perm.end());
  std::sort(out.validation.begin(), out.validation.end());
  std::sort(out.training.begin(), out.training.end());
  return out;
}

}  // namespace vidsim
