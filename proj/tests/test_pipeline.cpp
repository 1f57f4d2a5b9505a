#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "vidsim/pipeline.hpp"

using namespace vidsim;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("vidsim_pipeline_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunConfig small_run(const fs::path& dir) {
  SynthConfig sc;
  sc.pedestrians = 10;
  sc.seed = 4;
  const auto s = cmd_synth(sc, dir.string(), 2);
  nlohmann::json j{{"scenario", "scenario.json"},
                   {"training_files", {fs::path(s.files[0]).filename().string()}},
                   {"testing_files", {fs::path(s.files[1]).filename().string()}},
                   {"features", {{"beta_deg", 18.0}}},
                   {"model", {{"kernel", 3}, {"channels", {4, 6, 8}}}},
                   {"training", {{"iterations", 10}, {"batch_size", 16}, {"eval_interval", 5}, {"threads", 1}}},
                   {"seed", 3},
                   {"output_dir", "out"}};
  write_text_file((dir / "run.json").string(), j.dump(2));
  return load_run_config((dir / "run.json").string());
}

}  // namespace

TEST(Config, ParsesAndResolvesPaths) {
  const auto dir = scratch("config");
  const auto c = small_run(dir);
  EXPECT_EQ(c.scenario, (dir / "scenario.json").lexically_normal().string());
  EXPECT_EQ(c.features.dim(), 104u);
  EXPECT_EQ(c.arch.features, 104u);
  EXPECT_EQ(c.arch.kernel, 3u);
  EXPECT_EQ(c.training.iterations, 10u);
  EXPECT_EQ(c.training.seed, 3u);
  EXPECT_EQ(c.output_dir, (dir / "out").lexically_normal().string());
}

TEST(Config, ErrorsAndExitCodes) {
  try {
    load_run_config("/nonexistent/run.json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Io);
    EXPECT_EQ(exit_code_for(e), 2);
  }
  try {
    run_config_from_json(nlohmann::json{{"features", {{"beta_deg", 7.0}}}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(exit_code_for(e), 2);
  }
  try {
    run_config_from_json(nlohmann::json{{"training", {{"iterations", "many"}}}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Config);
  }
  EXPECT_EQ(exit_code_for(Error(ErrorKind::StepCapExceeded, "x")), 1);
}

TEST(Sweep, Labels) {
  EXPECT_EQ(sweep_label(20, 5), "20-5");
  EXPECT_EQ(sweep_label(2.5, 18), "2.5-18");
}

TEST(StepFiles, SimulatorOutputIsDetected) {
  const auto dir = scratch("stepfile");
  Trajectory t;
  t.id = 1;
  t.enter_step = 2;
  t.positions = {{1, 1}, {1.5, 1}};
  const auto path = (dir / "sim.txt").string();
  write_text_file(path, trajectories_to_string({t}));
  EXPECT_TRUE(is_step_file(path));
  write_text_file((dir / "raw.txt").string(), "# synthetic corridor seed 1\n1 0 0 0\n");
  EXPECT_FALSE(is_step_file((dir / "raw.txt").string()));
}

TEST(EndToEnd, TrainSimulateEvaluateDeterministic) {
  const auto dir = scratch("e2e");
  const auto c = small_run(dir);
  const auto tr = cmd_train(c, (dir / "a").string());
  EXPECT_TRUE(fs::exists(tr.model_path));
  EXPECT_GT(tr.samples, 0u);
  const auto sim = cmd_simulate(c, tr.model_path, c.testing_files[0], (dir / "a").string());
  EXPECT_TRUE(fs::exists(sim.trajectory_path));
  EXPECT_TRUE(fs::exists(sim.report_path));
  const auto ev = cmd_evaluate(c, c.testing_files[0], sim.trajectory_path, (dir / "a").string());
  EXPECT_TRUE(fs::exists(ev.metrics_path));
  EXPECT_TRUE(fs::exists(dir / "a" / "profiles.csv"));
  EXPECT_TRUE(fs::exists(dir / "a" / "fd.csv"));
  EXPECT_GE(ev.metrics.tde.mean, 0.0);

  // Evaluating the experiment against itself is all zeros.
  const auto self = cmd_evaluate(c, c.testing_files[0], c.testing_files[0], (dir / "self").string());
  EXPECT_EQ(self.metrics.egress.ete, 0.0);
  EXPECT_EQ(self.metrics.tde.mean, 0.0);

  const auto tr2 = cmd_train(c, (dir / "b").string());
  const auto sim2 = cmd_simulate(c, tr2.model_path, c.testing_files[0], (dir / "b").string());
  EXPECT_EQ(slurp(tr.model_path), slurp(tr2.model_path));
  EXPECT_EQ(slurp(sim.trajectory_path), slurp(sim2.trajectory_path));
}

TEST(EndToEnd, ModelShapeMismatchBeforeSimulating) {
  const auto dir = scratch("mismatch");
  auto c = small_run(dir);
  const auto tr = cmd_train(c, (dir / "m").string());
  FeatureConfig f = c.features;
  f.rgl.beta_deg = 5;
  set_features(c, f);
  try {
    cmd_simulate(c, tr.model_path, c.testing_files[0], (dir / "m").string());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ModelShapeMismatch);
  }
  EXPECT_FALSE(fs::exists(dir / "m" / "sim_corridor_2.txt"));
}

TEST(EndToEnd, SweepWritesOneRowPerCombination) {
  const auto dir = scratch("sweep");
  auto c = small_run(dir);
  c.training.iterations = 2;
  c.sweep_exit_distance = {10, 20};
  c.sweep_beta = {18};
  const auto rows = cmd_sweep(c, (dir / "sweep").string());
  ASSERT_EQ(rows.size(), 2u);
  for (const auto& r : rows) EXPECT_TRUE(r.ok) << r.error;
  EXPECT_EQ(rows[0].label, "10-18");
  const auto csv = slurp((dir / "sweep" / "sweep.csv").string());
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
}

TEST(Features, CsvHasHeaderAndRows) {
  const auto dir = scratch("features");
  const auto c = small_run(dir);
  const auto csv = cmd_features(c, c.training_files[0], "");
  const auto header = csv.substr(0, csv.find('\n'));
  EXPECT_EQ(std::count(header.begin(), header.end(), ','), 2 + 104 - 1);
}
