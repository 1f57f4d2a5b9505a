#pragma once

// Trajectory files: parsing, clipping, smoothing and resampling to the model
// time step. Velocities follow the backward difference
//   v^t = (p^t - p^{t-1}) / dt.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "vidsim/error.hpp"
#include "vidsim/geometry.hpp"
#include "vidsim/savgol.hpp"
#include "vidsim/scenario.hpp"

namespace vidsim {

using PedId = long;

struct ColumnSpec {
  int id = 0;
  int frame = 1;
  int x = 2;
  int y = 3;
  char delimiter = '\0';  // '\0': any run of whitespace and/or commas
};

struct RawRow {
  PedId id = 0;
  long frame = 0;
  double x = 0.0;
  double y = 0.0;
};

struct RawDataset {
  double frame_rate = 16.0;
  std::map<PedId, std::vector<RawRow>> pedestrians;  // frame-sorted per id

  std::size_t row_count() const {
    std::size_t n = 0;
    for (const auto& [id, rows] : pedestrians) n += rows.size();
    return n;
  }
};

// One pedestrian resampled at the model step.
struct Trajectory {
  PedId id = 0;
  long enter_step = 0;
  std::vector<Vec2> positions;
  std::vector<Vec2> velocities;  // velocities[k] = (positions[k+1] - positions[k]) / dt

  long last_step() const { return enter_step + static_cast<long>(positions.size()) - 1; }
  bool present_at(long step) const { return step >= enter_step && step <= last_step(); }
  // Velocity carried at position index k; zero at the entry position.
  Vec2 velocity_at(std::size_t k) const { return k == 0 ? Vec2{} : velocities[k - 1]; }
};

namespace detail {

inline std::vector<std::string_view> split_fields(std::string_view line, char delimiter) {
  std::vector<std::string_view> out;
  auto is_ws = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
  if (delimiter == '\0') {
    std::size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && (is_ws(line[i]) || line[i] == ',')) ++i;
      std::size_t j = i;
      while (j < line.size() && !is_ws(line[j]) && line[j] != ',') ++j;
      if (j > i) out.push_back(line.substr(i, j - i));
      i = j;
    }
    return out;
  }
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(delimiter, start);
    std::string_view f = line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start);
    while (!f.empty() && is_ws(f.front())) f.remove_prefix(1);
    while (!f.empty() && is_ws(f.back())) f.remove_suffix(1);
    out.push_back(f);
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline bool parse_double(std::string_view s, double& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc{} && res.ptr == s.data() + s.size() && std::isfinite(out);
}

inline bool parse_integer(std::string_view s, long& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  if (res.ec == std::errc{} && res.ptr == s.data() + s.size()) return true;
  // Some exports write integral ids/frames as "12.0".
  double d = 0.0;
  if (!parse_double(s, d) || d != std::floor(d) || std::abs(d) > 9e15) return false;
  out = static_cast<long>(d);
  return true;
}

inline long floor_div(long a, long b) {
  long q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

}  // namespace detail

inline RawDataset parse_trajectories(std::istream& in, const ColumnSpec& cols, double frame_rate) {
  if (!(frame_rate > 0.0)) throw Error(ErrorKind::InvalidArgument, "frame rate must be positive");
  const int needed = std::max({cols.id, cols.frame, cols.x, cols.y});
  if (std::min({cols.id, cols.frame, cols.x, cols.y}) < 0)
    throw Error(ErrorKind::InvalidArgument, "column indices must be non-negative");
  RawDataset ds;
  ds.frame_rate = frame_rate;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view v(line);
    const auto first = v.find_first_not_of(" \t\r");
    if (first == std::string_view::npos || v[first] == '#') continue;
    const auto fields = detail::split_fields(v, cols.delimiter);
    if (static_cast<int>(fields.size()) <= needed)
      throw ParseError(lineno, "expected at least " + std::to_string(needed + 1) + " fields");
    RawRow row;
    if (!detail::parse_integer(fields[cols.id], row.id)) throw ParseError(lineno, "bad pedestrian id");
    if (!detail::parse_integer(fields[cols.frame], row.frame)) throw ParseError(lineno, "bad frame");
    if (!detail::parse_double(fields[cols.x], row.x)) throw ParseError(lineno, "bad x coordinate");
    if (!detail::parse_double(fields[cols.y], row.y)) throw ParseError(lineno, "bad y coordinate");
    ds.pedestrians[row.id].push_back(row);
  }
  for (auto& [id, rows] : ds.pedestrians) {
    std::stable_sort(rows.begin(), rows.end(), [](const RawRow& a, const RawRow& b) { return a.frame < b.frame; });
    for (std::size_t i = 1; i < rows.size(); ++i)
      if (rows[i].frame == rows[i - 1].frame)
        throw Error(ErrorKind::NonMonotonicFrames,
                    "pedestrian " + std::to_string(id) + " repeats frame " + std::to_string(rows[i].frame));
  }
  return ds;
}

inline RawDataset parse_trajectory_file(const std::string& path, const ColumnSpec& cols, double frame_rate) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
  return parse_trajectories(in, cols, frame_rate);
}

// Shortest round-trip decimal form.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline void write_raw_rows(std::ostream& out, const std::vector<RawRow>& rows) {
  out << "# id frame x y\n";
  for (const auto& r : rows)
    out << r.id << ' ' << r.frame << ' ' << format_double(r.x) << ' ' << format_double(r.y) << '\n';
}

inline long resample_stride(double frame_rate, double dt) {
  const double s = frame_rate * dt;
  const long stride = std::lround(s);
  if (stride < 1 || std::abs(s - static_cast<double>(stride)) > 1e-9)
    throw Error(ErrorKind::InvalidArgument, "frame_rate * dt must be a positive integer");
  return stride;
}

// Samples every stride-th frame starting at the pedestrian's first frame and
// stops at the first missing sample frame.
inline Trajectory resample(const std::vector<RawRow>& rows, double frame_rate, double dt = 0.5) {
  const long stride = resample_stride(frame_rate, dt);
  if (rows.empty()) throw Error(ErrorKind::TooShort, "no rows");
  Trajectory tr;
  tr.id = rows.front().id;
  const long f0 = rows.front().frame;
  tr.enter_step = detail::floor_div(f0, stride);
  long want = f0;
  for (const auto& r : rows) {
    if (r.frame < want) continue;
    if (r.frame > want) break;
    tr.positions.push_back({r.x, r.y});
    want += stride;
  }
  if (tr.positions.size() < 2)
    throw Error(ErrorKind::TooShort, "pedestrian " + std::to_string(tr.id) + " spans fewer than 2 steps");
  tr.velocities.reserve(tr.positions.size() - 1);
  for (std::size_t k = 1; k < tr.positions.size(); ++k)
    tr.velocities.push_back((tr.positions[k] - tr.positions[k - 1]) / dt);
  return tr;
}

// Keeps the first visit to the clipping polygon.
inline std::vector<RawRow> clip_rows(const std::vector<RawRow>& rows, const Polygon& clipping) {
  if (clipping.empty()) return rows;
  std::vector<RawRow> out;
  for (const auto& r : rows) {
    const bool keep = locate_point({r.x, r.y}, clipping) != Containment::Outside;
    if (keep) out.push_back(r);
    else if (!out.empty()) break;
  }
  return out;
}

inline std::vector<RawRow> smooth_rows(std::vector<RawRow> rows, const SmoothingConfig& cfg) {
  if (!cfg.enabled || static_cast<int>(rows.size()) < cfg.window) return rows;
  std::vector<double> xs, ys;
  xs.reserve(rows.size());
  ys.reserve(rows.size());
  for (const auto& r : rows) {
    xs.push_back(r.x);
    ys.push_back(r.y);
  }
  const SavitzkyGolay filter(cfg.window, cfg.polyorder);
  const auto sx = filter.apply(xs);
  const auto sy = filter.apply(ys);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    rows[i].x = sx[i];
    rows[i].y = sy[i];
  }
  return rows;
}

struct LoadReport {
  std::size_t pedestrians = 0;
  std::size_t too_short = 0;
};

// Raw-frame files (stride > 1) are clipped and smoothed before resampling;
// files already at the model step (stride 1, e.g. simulator output) are
// taken as-is.
inline std::vector<Trajectory> trajectories_from_raw(const RawDataset& ds, const Scenario& sc,
                                                     LoadReport* report = nullptr) {
  const long stride = resample_stride(ds.frame_rate, sc.dt);
  std::vector<Trajectory> out;
  LoadReport rep;
  for (const auto& [id, rows] : ds.pedestrians) {
    ++rep.pedestrians;
    std::vector<RawRow> prepared = rows;
    if (stride > 1) {
      prepared = clip_rows(prepared, sc.geometry.clipping);
      prepared = smooth_rows(std::move(prepared), sc.smoothing);
    }
    if (prepared.empty()) {
      ++rep.too_short;
      continue;
    }
    try {
      out.push_back(resample(prepared, ds.frame_rate, sc.dt));
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::TooShort) throw;
      ++rep.too_short;
    }
  }
  if (report) *report = rep;
  return out;
}

inline std::vector<Trajectory> load_trajectories(const std::string& path, const Scenario& sc, const ColumnSpec& cols,
                                                 double frame_rate, LoadReport* report = nullptr) {
  return trajectories_from_raw(parse_trajectory_file(path, cols, frame_rate), sc, report);
}

// Writes trajectories at the model step: frame column holds the global step.
inline void write_trajectories(std::ostream& out, const std::vector<Trajectory>& trs) {
  out << "# id step x y\n";
  for (const auto& tr : trs)
    for (std::size_t k = 0; k < tr.positions.size(); ++k)
      out << tr.id << ' ' << tr.enter_step + static_cast<long>(k) << ' ' << format_double(tr.positions[k].x) << ' '
          << format_double(tr.positions[k].y) << '\n';
}

inline std::string trajectories_to_string(const std::vector<Trajectory>& trs) {
  std::ostringstream os;
  write_trajectories(os, trs);
  return os.str();
}

}  // namespace vidsim
