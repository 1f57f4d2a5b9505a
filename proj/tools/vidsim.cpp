#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <string>

#include "vidsim/pipeline.hpp"

using namespace vidsim;

namespace {

RunConfig config_with_overrides(const std::string& config_path, const std::string& scenario, std::uint64_t seed,
                                bool seed_set, const std::string& out_dir) {
  RunConfig c = config_path.empty() ? run_config_from_json(nlohmann::json::object()) : load_run_config(config_path);
  if (!scenario.empty()) c.scenario = scenario;
  if (seed_set) {
    c.seed = seed;
    c.training.seed = seed;
  }
  if (!out_dir.empty()) c.output_dir = out_dir;
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Crowd simulation with social-visual features and a temporal convolutional network"};
  app.require_subcommand(1);

  std::string config, scenario, out_dir;
  std::uint64_t seed = 0;
  auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* opt = sub->add_option("-c,--config", config, "run config (JSON)");
    if (needs_config) opt->required();
    sub->add_option("-s,--scenario", scenario, "scenario config, overrides the run config");
    sub->add_option("--seed", seed, "random seed, overrides the run config");
    sub->add_option("-o,--out", out_dir, "output directory, overrides the run config");
  };

  auto* train = app.add_subcommand("train", "train a model from the run config's training files");
  add_common(train, true);
  std::size_t iterations = 0;
  train->add_option("--iterations", iterations, "training iterations");

  auto* simulate = app.add_subcommand("simulate", "run the rolling-forecast simulation");
  add_common(simulate, false);
  std::string model_path, seed_file;
  simulate->add_option("-m,--model", model_path, "model artifact")->required();
  simulate->add_option("--seed-data", seed_file, "trajectory file supplying entries and seed windows")->required();

  auto* evaluate = app.add_subcommand("evaluate", "compare simulated against experimental trajectories");
  add_common(evaluate, false);
  std::string expt_file, sim_file, density = "voronoi";
  evaluate->add_option("--experiment", expt_file, "experimental trajectory file")->required();
  evaluate->add_option("--simulation", sim_file, "simulated trajectory file")->required();
  evaluate->add_option("--density", density, "density method")->check(CLI::IsMember({"voronoi", "simple"}));

  auto* features = app.add_subcommand("features", "dump feature frames to CSV");
  add_common(features, false);
  std::string traj_file, csv_out;
  features->add_option("-i,--input", traj_file, "trajectory file")->required();
  features->add_option("--csv", csv_out, "output CSV (default: stdout)");
  double alpha = 0.0, beta = 0.0, radius = 0.0, exit_distance = 0.0;
  for (auto* sub : {features, train}) {
    sub->add_option("--alpha", alpha, "radar subarea angle, degrees");
    sub->add_option("--beta", beta, "ray interval, degrees");
    sub->add_option("--radius", radius, "interaction radius, m");
    sub->add_option("--exit-distance", exit_distance, "virtual exit distance, m");
  }

  auto* sweep = app.add_subcommand("sweep", "train, simulate and evaluate over exit distance x ray interval");
  add_common(sweep, true);

  auto* synth = app.add_subcommand("synth", "generate a synthetic scenario and raw trajectory files");
  SynthConfig sc;
  std::size_t files = 1;
  synth->add_option("--kind", sc.kind, "geometry")->check(CLI::IsMember({"corridor", "corner", "tjunction"}));
  synth->add_option("--pedestrians", sc.pedestrians, "pedestrians per file");
  synth->add_option("--files", files, "number of files");
  synth->add_option("--seed", sc.seed, "random seed");
  synth->add_option("--noise", sc.noise, "position noise std, m");
  synth->add_option("--interval", sc.interval_s, "mean entry interval, s");
  synth->add_option("-o,--out", out_dir, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    const bool seed_set = app.get_subcommands().front()->count("--seed") > 0;
    if (synth->parsed()) {
      const auto s = cmd_synth(sc, out_dir, files);
      std::cout << "scenario " << s.scenario_path << "\n";
      for (const auto& f : s.files) std::cout << "data " << f << "\n";
      return 0;
    }
    RunConfig c = config_with_overrides(config, scenario, seed, seed_set, out_dir);
    auto apply_feature_flags = [&] {
      FeatureConfig f = c.features;
      if (alpha > 0.0) f.radar.alpha_deg = alpha;
      if (beta > 0.0) f.rgl.beta_deg = beta;
      if (radius > 0.0) f.radar.radius = radius;
      if (exit_distance > 0.0) f.rgl.exit_distance = exit_distance;
      set_features(c, f);
    };
    if (train->parsed()) {
      apply_feature_flags();
      if (iterations > 0) c.training.iterations = iterations;
      const auto s = cmd_train(c, c.output_dir);
      std::cout << "model " << s.model_path << "\n"
                << "log " << s.log_path << "\n"
                << "samples " << s.samples << "\n"
                << "initial_val_loss " << format_double(s.initial_val_loss) << "\n"
                << "best_val_loss " << format_double(s.best_val_loss) << " (iteration " << s.best_iteration << ")\n"
                << "final_train_loss " << format_double(s.final_train_loss) << "\n";
    } else if (simulate->parsed()) {
      if (config.empty()) c.features = load_model(model_path).features;
      const auto s = cmd_simulate(c, model_path, seed_file, c.output_dir);
      std::cout << "trajectories " << s.trajectory_path << "\n"
                << "report " << s.report_path << "\n"
                << "steps " << (s.report.last_step - s.report.first_step) << "\n"
                << "boundary_corrections " << s.report.boundary_corrections << "\n";
      if (s.report.step_cap_exceeded) {
        std::cerr << "error: step cap of " << s.report.step_cap << " exceeded; partial results written\n";
        return 1;
      }
    } else if (evaluate->parsed()) {
      const auto s = cmd_evaluate(c, expt_file, sim_file, c.output_dir,
                                  density == "simple" ? DensityMethod::Simple : DensityMethod::Voronoi);
      const auto& m = s.metrics;
      std::cout << "metrics " << s.metrics_path << "\n"
                << "ete_s " << format_double(m.egress.ete) << "\n"
                << "pete " << format_double(m.egress.pete) << "\n"
                << "tte_s_mean " << format_double(m.tte.mean) << "\n"
                << "ptte_mean " << format_double(m.ptte.mean) << "\n"
                << "tde_m_mean " << format_double(m.tde.mean) << "\n"
                << "fde_m_mean " << format_double(m.fde.mean) << "\n";
    } else if (features->parsed()) {
      apply_feature_flags();
      const auto csv = cmd_features(c, traj_file, csv_out);
      if (csv_out.empty()) std::cout << csv;
    } else if (sweep->parsed()) {
      const auto rows = cmd_sweep(c, c.output_dir);
      std::cout << sweep_csv(rows);
      for (const auto& r : rows)
        if (!r.ok) return 1;
    }
    return 0;
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
