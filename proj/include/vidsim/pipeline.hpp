#pragma once

// Run configuration and the end-to-end commands behind the CLI.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vidsim/dataset.hpp"
#include "vidsim/evaluate.hpp"
#include "vidsim/features.hpp"
#include "vidsim/ingest.hpp"
#include "vidsim/scenario.hpp"
#include "vidsim/simulate.hpp"
#include "vidsim/synth.hpp"
#include "vidsim/train.hpp"

namespace vidsim {

namespace fs = std::filesystem;

enum class LogLevel { Quiet = 0, Info = 1, Debug = 2 };

// VIDSIM_LOG = quiet | info | debug (default info).
inline LogLevel log_level() {
  const char* v = std::getenv("VIDSIM_LOG");
  if (!v) return LogLevel::Info;
  const std::string s(v);
  if (s == "quiet" || s == "0") return LogLevel::Quiet;
  if (s == "debug" || s == "2") return LogLevel::Debug;
  return LogLevel::Info;
}

inline void log_info(const std::string& msg) {
  if (log_level() >= LogLevel::Info) std::cerr << "[vidsim] " << msg << "\n";
}
inline void log_debug(const std::string& msg) {
  if (log_level() >= LogLevel::Debug) std::cerr << "[vidsim] " << msg << "\n";
}

struct RunConfig {
  std::string scenario;
  std::vector<std::string> training_files;
  std::vector<std::string> testing_files;
  ColumnSpec columns;
  double frame_rate = 0.0;  // 0: from the scenario
  FeatureConfig features;
  Architecture arch;
  TrainConfig training;
  SimConfig simulation;
  std::uint64_t seed = 1;
  std::string output_dir = "out";
  std::vector<double> sweep_exit_distance;
  std::vector<double> sweep_beta;
};

namespace detail {

inline std::string resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return p;
  const fs::path path(p);
  return path.is_absolute() ? p : (base / path).lexically_normal().string();
}

inline void require_file(const std::string& path, const char* what) {
  if (!fs::exists(path)) throw Error(ErrorKind::Io, std::string(what) + " not found: " + path);
}

}  // namespace detail

inline RunConfig run_config_from_json(const nlohmann::json& j, const fs::path& base = ".") {
  try {
    RunConfig c;
    c.scenario = detail::resolve(base, j.value("scenario", std::string{}));
    for (const auto& f : j.value("training_files", std::vector<std::string>{}))
      c.training_files.push_back(detail::resolve(base, f));
    for (const auto& f : j.value("testing_files", std::vector<std::string>{}))
      c.testing_files.push_back(detail::resolve(base, f));
    if (j.contains("columns")) {
      const auto& cj = j.at("columns");
      c.columns.id = cj.value("id", 0);
      c.columns.frame = cj.value("frame", 1);
      c.columns.x = cj.value("x", 2);
      c.columns.y = cj.value("y", 3);
      const auto d = cj.value("delimiter", std::string{});
      if (d.size() > 1) throw Error(ErrorKind::Config, "column delimiter must be a single character");
      c.columns.delimiter = d.empty() ? '\0' : d[0];
    }
    c.frame_rate = j.value("frame_rate", 0.0);
    if (j.contains("features")) c.features = feature_config_from_json(j.at("features"));
    c.features.validate();
    if (j.contains("model")) {
      const auto& m = j.at("model");
      c.arch.window = m.value("window", c.arch.window);
      c.arch.kernel = m.value("kernel", c.arch.kernel);
      c.arch.channels = m.value("channels", c.arch.channels);
      c.arch.dilations = m.value("dilations", c.arch.dilations);
      c.arch.dropout = m.value("dropout", c.arch.dropout);
    }
    c.arch.features = c.features.dim();
    c.arch.validate();
    if (j.contains("training")) {
      const auto& t = j.at("training");
      c.training.iterations = t.value("iterations", c.training.iterations);
      c.training.batch_size = t.value("batch_size", c.training.batch_size);
      c.training.eval_interval = t.value("eval_interval", c.training.eval_interval);
      c.training.adam.learning_rate = t.value("learning_rate", c.training.adam.learning_rate);
      c.training.threads = t.value("threads", c.training.threads);
    }
    if (j.contains("simulation")) {
      const auto& s = j.at("simulation");
      c.simulation.standoff = s.value("standoff", c.simulation.standoff);
      c.simulation.tangent_weight = s.value("tangent_weight", c.simulation.tangent_weight);
      c.simulation.inward_weight = s.value("inward_weight", c.simulation.inward_weight);
      c.simulation.step_cap_factor = s.value("step_cap_factor", c.simulation.step_cap_factor);
    }
    c.seed = j.value("seed", c.seed);
    c.training.seed = c.seed;
    c.output_dir = detail::resolve(base, j.value("output_dir", std::string("out")));
    if (j.contains("sweep")) {
      c.sweep_exit_distance = j.at("sweep").value("exit_distance", std::vector<double>{});
      c.sweep_beta = j.at("sweep").value("beta_deg", std::vector<double>{});
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Config, std::string("run config: ") + e.what());
  }
}

inline RunConfig load_run_config(const std::string& path) {
  detail::require_file(path, "run config");
  return run_config_from_json(read_json_file(path), fs::path(path).parent_path());
}

inline void set_features(RunConfig& c, const FeatureConfig& f) {
  f.validate();
  c.features = f;
  c.arch.features = f.dim();
}

// Files written by the simulator carry a "# id step x y" header and are
// already at the model step.
inline bool is_step_file(const std::string& path) {
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    const auto p = line.find_first_not_of(" \t\r");
    if (p == std::string::npos) continue;
    if (line[p] != '#') return false;
    if (line.find("step") != std::string::npos) return true;
  }
  return false;
}

inline std::vector<Trajectory> load_for(const RunConfig& c, const Scenario& sc, const std::string& path) {
  detail::require_file(path, "trajectory file");
  const double rate = is_step_file(path) ? 1.0 / sc.dt : (c.frame_rate > 0.0 ? c.frame_rate : sc.frame_rate);
  LoadReport rep;
  auto trs = load_trajectories(path, sc, c.columns, rate, &rep);
  log_debug(path + ": " + std::to_string(rep.pedestrians) + " pedestrians, " + std::to_string(rep.too_short) +
            " too short");
  return trs;
}

inline Scenario scenario_for(const RunConfig& c) {
  if (c.scenario.empty()) throw Error(ErrorKind::Config, "run config names no scenario");
  detail::require_file(c.scenario, "scenario file");
  return load_scenario(c.scenario);
}

struct TrainSummary {
  std::string model_path;
  std::string log_path;
  std::size_t samples = 0;
  double initial_val_loss = 0.0;
  double best_val_loss = 0.0;
  double final_train_loss = 0.0;
  std::size_t best_iteration = 0;
};

inline TrainSummary cmd_train(const RunConfig& c, const std::string& out_dir) {
  if (c.training_files.empty()) throw Error(ErrorKind::Config, "run config lists no training files");
  const Scenario sc = scenario_for(c);
  for (const auto& f : c.training_files) detail::require_file(f, "training file");
  SampleSet samples(c.arch.window, c.features.dim());
  for (const auto& f : c.training_files) {
    const auto trs = load_for(c, sc, f);
    samples.append(build_samples(trs, sc.geometry, c.features, c.arch.window));
  }
  log_info("feature dimension " + std::to_string(c.features.dim()) + ", " + std::to_string(samples.size()) +
           " window samples");
  if (samples.empty()) throw Error(ErrorKind::EmptyDataset, "training files produced no window samples");
  const auto parts = split(samples.size(), c.seed);
  const auto result = train(samples, parts, c.arch, c.features, c.training, [](const TrainLogRow& r) {
    log_debug("iteration " + std::to_string(r.iteration) + " train " + format_double(r.train_loss) + " val " +
              format_double(r.val_loss));
  });
  fs::create_directories(out_dir);
  TrainSummary s;
  s.model_path = (fs::path(out_dir) / "model.json").string();
  s.log_path = (fs::path(out_dir) / "train_log.csv").string();
  save_model(result.model, s.model_path);
  write_text_file(s.log_path, train_log_csv(result.log));
  s.samples = samples.size();
  s.initial_val_loss = result.initial_val_loss;
  s.best_val_loss = result.best_val_loss;
  s.best_iteration = result.best_iteration;
  s.final_train_loss = result.log.back().train_loss;
  return s;
}

inline bool same_features(const FeatureConfig& a, const FeatureConfig& b) {
  return a.radar.radius == b.radar.radius && a.radar.alpha_deg == b.radar.alpha_deg &&
         a.radar.static_velocity == b.radar.static_velocity && a.rgl.beta_deg == b.rgl.beta_deg &&
         a.rgl.exit_distance == b.rgl.exit_distance && a.heading_eps == b.heading_eps;
}

struct SimulateSummary {
  std::string trajectory_path;
  std::string report_path;
  RunReport report;
  std::vector<Trajectory> simulated;
};

inline SimulateSummary cmd_simulate(const RunConfig& c, const std::string& model_path, const std::string& seed_file,
                                    const std::string& out_dir) {
  detail::require_file(model_path, "model artifact");
  const Model model = load_model(model_path);
  if (model.features.dim() != c.features.dim())
    throw Error(ErrorKind::ModelShapeMismatch, "model expects " + std::to_string(model.features.dim()) +
                                                  " features per frame, run config yields " +
                                                  std::to_string(c.features.dim()));
  if (!same_features(model.features, c.features))
    throw Error(ErrorKind::ModelShapeMismatch, "model was trained with different radar/ray parameters");
  if (model.arch.window != c.arch.window)
    throw Error(ErrorKind::ModelShapeMismatch, "model window " + std::to_string(model.arch.window) +
                                                  " differs from run config window " + std::to_string(c.arch.window));
  const Scenario sc = scenario_for(c);
  const auto seeds = load_for(c, sc, seed_file);
  SimConfig cfg = c.simulation;
  cfg.dt = sc.dt;
  cfg.window = model.arch.window;
  cfg.features = model.features;
  const Predictor predictor(model);
  SimWorld world(sc.geometry, seeds, cfg);
  SimulateSummary s;
  s.report = world.run([&](std::span<const double> x) { return predictor(x); });
  s.simulated = world.trajectories();
  fs::create_directories(out_dir);
  const std::string stem = fs::path(seed_file).stem().string();
  s.trajectory_path = (fs::path(out_dir) / ("sim_" + stem + ".txt")).string();
  s.report_path = (fs::path(out_dir) / ("report_" + stem + ".json")).string();
  write_text_file(s.trajectory_path, trajectories_to_string(s.simulated));
  write_text_file(s.report_path, run_report_to_json(s.report).dump(2) + "\n");
  return s;
}

struct EvaluateSummary {
  TrajectoryMetrics metrics;
  std::string metrics_path;
};

inline EvaluateSummary cmd_evaluate(const RunConfig& c, const std::string& expt_file, const std::string& sim_file,
                                    const std::string& out_dir, DensityMethod method = DensityMethod::Voronoi) {
  const Scenario sc = scenario_for(c);
  const auto expt = load_for(c, sc, expt_file);
  const auto sim = load_for(c, sc, sim_file);
  EvaluateSummary s;
  s.metrics = trajectory_metrics(expt, sim, sc.dt);
  auto j = metrics_to_json(s.metrics);
  j["density_method"] = method == DensityMethod::Voronoi ? "voronoi" : "simple";
  fs::create_directories(out_dir);
  s.metrics_path = (fs::path(out_dir) / "metrics.json").string();
  write_text_file(s.metrics_path, j.dump(2) + "\n");
  if (sc.geometry.measurement.size() >= 3) {
    std::vector<std::pair<std::string, MeasurementSeries>> series{{"experiment", profiles(expt, sc.geometry, method)},
                                                                  {"simulation", profiles(sim, sc.geometry, method)}};
    write_text_file((fs::path(out_dir) / "profiles.csv").string(), profiles_csv(series, sc.dt));
    write_text_file((fs::path(out_dir) / "fd.csv").string(),
                    fd_csv(fundamental_diagram(series, sc.geometry.measurement_width)));
  }
  return s;
}

inline std::string features_csv(const std::vector<Trajectory>& trs, const ScenarioGeometry& geo,
                                const FeatureConfig& f) {
  const auto table = frame_table(trs, geo, f);
  std::string out = "id,step";
  for (const auto& n : feature_names(f)) out += "," + n;
  out += "\n";
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    out += std::to_string(table.rows[r].id) + "," + std::to_string(table.rows[r].step);
    for (std::size_t k = 0; k < table.dim; ++k) out += "," + format_double(table.values[r * table.dim + k]);
    out += "\n";
  }
  return out;
}

inline std::string cmd_features(const RunConfig& c, const std::string& file, const std::string& out_path) {
  const Scenario sc = scenario_for(c);
  const auto trs = load_for(c, sc, file);
  const auto csv = features_csv(trs, sc.geometry, c.features);
  if (!out_path.empty()) {
    if (fs::path(out_path).has_parent_path()) fs::create_directories(fs::path(out_path).parent_path());
    write_text_file(out_path, csv);
  }
  return csv;
}

inline std::string sweep_label(double exit_distance, double beta) {
  return format_double(exit_distance) + "-" + format_double(beta);
}

struct SweepRow {
  std::string label;
  double exit_distance = 0.0;
  double beta = 0.0;
  bool ok = false;
  std::string error;
  double ete = 0.0, pete = 0.0, tte = 0.0, ptte = 0.0, tde = 0.0, fde = 0.0;
};

// Train, simulate every testing file, evaluate; metrics are averaged over
// the testing files. A failing combination is recorded and skipped.
inline SweepRow run_combination(RunConfig c, double exit_distance, double beta, const std::string& out_dir) {
  SweepRow row;
  row.label = sweep_label(exit_distance, beta);
  row.exit_distance = exit_distance;
  row.beta = beta;
  try {
    FeatureConfig f = c.features;
    f.rgl.exit_distance = exit_distance;
    f.rgl.beta_deg = beta;
    set_features(c, f);
    if (c.testing_files.empty()) throw Error(ErrorKind::Config, "run config lists no testing files");
    const auto tr = cmd_train(c, out_dir);
    double n = 0.0;
    for (const auto& test : c.testing_files) {
      const auto sim = cmd_simulate(c, tr.model_path, test, out_dir);
      const std::string stem = fs::path(test).stem().string();
      const auto ev = cmd_evaluate(c, test, sim.trajectory_path, (fs::path(out_dir) / ("eval_" + stem)).string());
      const auto& m = ev.metrics;
      row.ete += m.egress.ete;
      row.pete += m.egress.pete;
      row.tte += m.tte.mean;
      row.ptte += m.ptte.mean;
      row.tde += m.tde.mean;
      row.fde += m.fde.mean;
      n += 1.0;
    }
    row.ete /= n;
    row.pete /= n;
    row.tte /= n;
    row.ptte /= n;
    row.tde /= n;
    row.fde /= n;
    row.ok = true;
  } catch (const std::exception& e) {
    row.error = e.what();
  }
  return row;
}

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "label,exit_distance,beta_deg,status,ete_s,pete,tte_s,ptte,tde_m,fde_m,error\n";
  for (const auto& r : rows) {
    out += r.label + "," + format_double(r.exit_distance) + "," + format_double(r.beta) + "," + (r.ok ? "ok" : "failed");
    if (r.ok)
      out += "," + format_double(r.ete) + "," + format_double(r.pete) + "," + format_double(r.tte) + "," +
             format_double(r.ptte) + "," + format_double(r.tde) + "," + format_double(r.fde) + ",";
    else {
      std::string msg = r.error;
      for (auto& ch : msg)
        if (ch == ',' || ch == '\n') ch = ';';
      out += ",,,,,,," + msg;
    }
    out += "\n";
  }
  return out;
}

inline std::vector<SweepRow> cmd_sweep(const RunConfig& c, const std::string& out_dir) {
  const auto des = c.sweep_exit_distance.empty() ? std::vector<double>{c.features.rgl.exit_distance} : c.sweep_exit_distance;
  const auto betas = c.sweep_beta.empty() ? std::vector<double>{c.features.rgl.beta_deg} : c.sweep_beta;
  for (double b : betas) {
    RglConfig r;
    r.beta_deg = b;
    r.validate();
  }
  std::vector<SweepRow> rows;
  for (double de : des)
    for (double b : betas) {
      const std::string label = sweep_label(de, b);
      log_info("sweep combination " + label);
      rows.push_back(run_combination(c, de, b, (fs::path(out_dir) / label).string()));
      if (!rows.back().ok) log_info("combination " + label + " failed: " + rows.back().error);
    }
  fs::create_directories(out_dir);
  write_text_file((fs::path(out_dir) / "sweep.csv").string(), sweep_csv(rows));
  return rows;
}

struct SynthSummary {
  std::string scenario_path;
  std::vector<std::string> files;
};

// Writes scenario.json plus `files` raw trajectory files with distinct seeds.
inline SynthSummary cmd_synth(SynthConfig cfg, const std::string& out_dir, std::size_t files = 1) {
  fs::create_directories(out_dir);
  SynthSummary s;
  const std::uint64_t base = cfg.seed;
  for (std::size_t i = 0; i < files; ++i) {
    cfg.seed = base + i;
    const auto data = generate_synthetic(cfg);
    if (i == 0) {
      s.scenario_path = (fs::path(out_dir) / "scenario.json").string();
      write_text_file(s.scenario_path, scenario_to_json(data.scenario).dump(2) + "\n");
    }
    std::ostringstream os;
    os << "# synthetic " << cfg.kind << " seed " << cfg.seed << " at " << format_double(cfg.frame_rate) << " Hz\n";
    std::vector<RawRow> rows;
    for (const auto& [id, rs] : data.raw.pedestrians) rows.insert(rows.end(), rs.begin(), rs.end());
    write_raw_rows(os, rows);
    const std::string path = (fs::path(out_dir) / (cfg.kind + "_" + std::to_string(i + 1) + ".txt")).string();
    write_text_file(path, os.str());
    s.files.push_back(path);
  }
  return s;
}

inline int exit_code_for(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::Config:
    case ErrorKind::Io:
    case ErrorKind::ParseError:
      return 2;
    default:
      return 1;
  }
}

}  // namespace vidsim
