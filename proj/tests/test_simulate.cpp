#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "vidsim/simulate.hpp"
#include "vidsim/synth.hpp"

using namespace vidsim;

namespace {

SimConfig small_config() {
  SimConfig c;
  c.features.rgl.beta_deg = 18;
  return c;
}

Trajectory straight(PedId id, long enter, Vec2 start, Vec2 v, std::size_t positions, double dt = 0.5) {
  Trajectory t;
  t.id = id;
  t.enter_step = enter;
  for (std::size_t k = 0; k < positions; ++k) t.positions.push_back(start + v * (dt * static_cast<double>(k)));
  for (std::size_t k = 1; k < positions; ++k) t.velocities.push_back((t.positions[k] - t.positions[k - 1]) / dt);
  return t;
}

VelocityModel constant(Vec2 v) {
  return [v](std::span<const double>) { return v; };
}

VelocityModel never_called() {
  return [](std::span<const double>) -> Vec2 { throw std::logic_error("model called during seed window"); };
}

}  // namespace

TEST(World, EmptyWorldIsDone) {
  SimWorld world(synth_geometry("corridor"), {}, small_config());
  EXPECT_TRUE(world.done());
  const auto rep = world.run(never_called());
  EXPECT_EQ(rep.last_step, rep.first_step);
  EXPECT_TRUE(world.trajectories().empty());
  EXPECT_FALSE(rep.step_cap_exceeded);
}

TEST(World, MissingSeedDataRejected) {
  Trajectory t;
  t.id = 1;
  try {
    SimWorld(synth_geometry("corridor"), {t}, small_config());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::MissingSeedData);
  }
}

TEST(SeedWindow, ReplaysExperimentExactly) {
  // Records shorter than the seed window end inside it and are replayed as is.
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-0.2, 0.2);
  std::vector<Trajectory> seeds;
  for (PedId id = 1; id <= 6; ++id) {
    Trajectory t;
    t.id = id;
    t.enter_step = id;
    Vec2 p{1.5, 0.4 * static_cast<double>(id)};
    t.positions.push_back(p);
    for (int k = 0; k < 6; ++k) {
      const Vec2 v{1.0 + u(rng), u(rng)};
      t.velocities.push_back(v);
      p = p + v * 0.5;
      t.positions.push_back(p);
    }
    seeds.push_back(t);
  }
  SimWorld world(synth_geometry("corridor"), seeds, small_config());
  const auto rep = world.run(never_called());
  EXPECT_FALSE(rep.step_cap_exceeded);
  const auto out = world.trajectories();
  ASSERT_EQ(out.size(), seeds.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    EXPECT_EQ(out[i].enter_step, seeds[i].enter_step);
    EXPECT_EQ(out[i].positions, seeds[i].positions);
  }
  for (const auto& p : rep.pedestrians) {
    EXPECT_TRUE(p.exited);
    EXPECT_EQ(p.exit_step, p.enter_step + 7);
  }
}

TEST(Kinematics, ConstantVelocityOracle) {
  const SimConfig cfg = small_config();
  const Vec2 v_seed{1.2, 0.0}, v_model{0.8, 0.1};
  const auto seed = straight(7, 3, {1.2, 1.0}, v_seed, 20);
  SimWorld world(synth_geometry("corridor"), {seed}, cfg);
  const auto rep = world.run(constant(v_model));

  // Hand integration: seeded for w steps, then the model's velocity, until
  // the step whose path reaches x = 13.
  std::vector<Vec2> want{seed.positions[0]};
  long exit_step = -1;
  for (long k = 0;; ++k) {
    const Vec2 v = k < static_cast<long>(cfg.window) ? seed.velocities[static_cast<std::size_t>(k)] : v_model;
    const Vec2 next = want.back() + v * cfg.dt;
    if (next.x >= 13.0) {
      exit_step = seed.enter_step + k + 1;
      break;
    }
    want.push_back(next);
  }
  const auto out = world.trajectories();
  ASSERT_EQ(out.size(), 1u);
  ASSERT_EQ(out[0].positions.size(), want.size());
  for (std::size_t k = 0; k < want.size(); ++k) {
    EXPECT_NEAR(out[0].positions[k].x, want[k].x, 1e-12);
    EXPECT_NEAR(out[0].positions[k].y, want[k].y, 1e-12);
  }
  ASSERT_EQ(rep.pedestrians.size(), 1u);
  EXPECT_EQ(rep.pedestrians[0].exit_step, exit_step);
  EXPECT_EQ(rep.boundary_corrections, 0u);
}

TEST(Kinematics, ModelSeesLatestFrames) {
  SimConfig cfg = small_config();
  const auto seed = straight(1, 0, {1.5, 1.5}, {1.0, 0.0}, 20);
  std::vector<double> last_window;
  std::size_t calls = 0;
  VelocityModel model = [&](std::span<const double> w) {
    last_window.assign(w.begin(), w.end());
    ++calls;
    return Vec2{0.9, 0.0};
  };
  SimWorld world(synth_geometry("corridor"), {seed}, cfg);
  for (int i = 0; i < 10; ++i) world.step(model);
  const std::size_t dim = cfg.features.dim();
  ASSERT_EQ(calls, 2u);
  ASSERT_EQ(last_window.size(), cfg.window * dim);
  // The newest frame carries the newest velocity: v at position index 9.
  EXPECT_DOUBLE_EQ(last_window[(cfg.window - 1) * dim], 0.9);
  EXPECT_DOUBLE_EQ(last_window[(cfg.window - 2) * dim], 1.0);
}

TEST(Boundary, WallExample) {
  // Walkable box with its top edge on y = 1.5; the step leaves through it.
  const Polygon walkable{{-5, -1.5}, {5, -1.5}, {5, 1.5}, {-5, 1.5}};
  SimConfig cfg;
  const Vec2 from{0.0, 1.0}, step{0.2, 1.0};
  const Vec2 tentative = from + step;
  const std::vector<Vec2> recent{{1, 0}, {1, 0}, {0.4, 2.0}};
  const auto r = boundary_correction(from, tentative, normalized(step), recent, walkable, cfg);
  const double t = 0.5 / 1.0;
  const Vec2 crossing = from + step * t;
  EXPECT_NEAR(r.position.x, crossing.x, 1e-12);
  EXPECT_NEAR(r.position.y, 1.5 - 0.05, 1e-12);
  const Vec2 dir = normalized(Vec2{0.7, -0.3});
  const double speed = (1.0 + 1.0 + std::hypot(0.4, 2.0)) / 3.0;
  EXPECT_NEAR(r.velocity.x, dir.x * speed, 1e-12);
  EXPECT_NEAR(r.velocity.y, dir.y * speed, 1e-12);
  EXPECT_EQ(locate_point(r.position, walkable), Containment::Inside);

  // A heading pointing left flips the tangent.
  const auto l = boundary_correction(from, {-0.2, 2.0}, normalized(Vec2{-0.2, 1.0}), recent, walkable, cfg);
  EXPECT_LT(l.velocity.x, 0.0);
  EXPECT_LT(l.velocity.y, 0.0);
}

TEST(Boundary, CorrectionInWorldRewritesHistory) {
  SimConfig cfg = small_config();
  const auto seed = straight(1, 0, {2.0, 1.5}, {1.0, 0.0}, 20);
  SimWorld world(synth_geometry("corridor"), {seed}, cfg);
  // Straight into the top wall once predictions start.
  const auto model = constant({0.3, 4.0});
  for (std::size_t i = 0; i <= cfg.window; ++i) world.step(model);
  ASSERT_EQ(world.active().size(), 1u);
  const auto& p = world.active()[0];
  ASSERT_EQ(p.corrections, 1u);
  EXPECT_EQ(p.correction_steps[0], static_cast<long>(cfg.window) + 1);
  EXPECT_NEAR(p.positions.back().y, 3.0 - cfg.standoff, 1e-12);
  const Vec2 v = p.velocities.back();
  const double speed = (7.0 * 1.0 + std::hypot(0.3, 4.0)) / 8.0;
  EXPECT_NEAR(norm(v), speed, 1e-12);
  for (std::size_t j = p.velocities.size() - cfg.window; j < p.velocities.size(); ++j) EXPECT_EQ(p.velocities[j], v);
  // Each stored frame's own-velocity entry agrees with the rewritten history.
  for (std::size_t k = 1; k < p.positions.size() - 1; ++k) {
    EXPECT_EQ(p.frames[k - 1][0], p.velocities[k - 1].x) << k;
    EXPECT_EQ(p.frames[k - 1][1], p.velocities[k - 1].y) << k;
  }
}

TEST(Boundary, MovingAlongTheEdgeIsNotCorrected) {
  SimConfig cfg = small_config();
  const auto seed = straight(1, 0, {2.0, 3.0}, {1.0, 0.0}, 20);
  SimWorld world(synth_geometry("corridor"), {seed}, cfg);
  for (int i = 0; i < 12; ++i) world.step(constant({0.5, 0.0}));
  EXPECT_EQ(world.active()[0].corrections, 0u);
  EXPECT_EQ(world.active()[0].positions.back().y, 3.0);
}

TEST(Boundary, NoInwardDirection) {
  const Polygon sliver{{0, 0}, {1, 0}, {1, 1e-30}, {0, 1e-30}};
  const std::vector<Vec2> recent{{1, 0}};
  try {
    boundary_correction({0.5, 0.0}, {0.5, 1.0}, {0, 1}, recent, sliver, SimConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NoInwardDirection);
  }
}

TEST(World, PermutationInvariant) {
  auto geo = synth_geometry("corridor");
  std::vector<Trajectory> seeds;
  for (PedId id = 1; id <= 8; ++id)
    seeds.push_back(straight(id * 3, id / 2, {1.2, 0.3 * static_cast<double>(id)}, {1.0, 0.02 * static_cast<double>(id)}, 12));
  // A model that depends on the scene, so ordering mistakes would show.
  VelocityModel model = [](std::span<const double> w) {
    double s = 0.0;
    for (double x : w) s += x;
    return Vec2{0.8 + 1e-4 * s, 0.0};
  };
  SimWorld a(geo, seeds, small_config());
  a.run(model);
  auto shuffled = seeds;
  std::shuffle(shuffled.begin(), shuffled.end(), std::mt19937_64(9));
  SimWorld b(geo, shuffled, small_config());
  b.run(model);
  const auto ta = a.trajectories(), tb = b.trajectories();
  ASSERT_EQ(ta.size(), tb.size());
  for (std::size_t i = 0; i < ta.size(); ++i) {
    EXPECT_EQ(ta[i].id, tb[i].id);
    EXPECT_EQ(ta[i].positions, tb[i].positions);
  }
}

TEST(World, ConservationAndDeterminism) {
  SynthConfig sc;
  sc.pedestrians = 25;
  sc.seed = 8;
  const auto data = generate_synthetic(sc);
  const auto seeds = trajectories_from_raw(data.raw, data.scenario);
  VelocityModel model = [](std::span<const double> w) { return Vec2{1.0 + 0.01 * w[1], 0.05 * std::sin(w[0])}; };
  SimWorld a(data.scenario.geometry, seeds, small_config());
  std::size_t max_seen = 0;
  while (!a.done()) {
    a.step(model);
    EXPECT_EQ(a.active().size() + a.exited().size() + a.pending_count(), seeds.size());
    max_seen = std::max(max_seen, a.active().size());
    ASSERT_LT(a.clock(), 1000);
  }
  EXPECT_GT(max_seen, 1u);
  std::vector<PedId> ids;
  for (const auto& e : a.exited()) ids.push_back(e.ped.id);
  std::sort(ids.begin(), ids.end());
  EXPECT_EQ(std::adjacent_find(ids.begin(), ids.end()), ids.end());
  EXPECT_EQ(ids.size(), seeds.size());

  SimWorld b(data.scenario.geometry, seeds, small_config());
  b.run(model);
  const auto ta = a.trajectories(), tb = b.trajectories();
  ASSERT_EQ(ta.size(), tb.size());
  for (std::size_t i = 0; i < ta.size(); ++i) EXPECT_EQ(ta[i].positions, tb[i].positions);
}

TEST(World, StepCap) {
  const auto seed = straight(1, 0, {2.0, 1.5}, {1.0, 0.0}, 12);
  SimWorld world(synth_geometry("corridor"), {seed}, small_config());
  const auto rep = world.run(constant({0.0, 0.0}));
  EXPECT_TRUE(rep.step_cap_exceeded);
  EXPECT_EQ(rep.step_cap, 110);
  EXPECT_EQ(rep.last_step - rep.first_step, 110);
  EXPECT_FALSE(rep.pedestrians[0].exited);
  const auto j = run_report_to_json(rep);
  EXPECT_TRUE(j["step_cap_exceeded"].get<bool>());
}
