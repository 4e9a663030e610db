#include <gtest/gtest.h>

#include <cmath>

#include "esds/env.hpp"
#include "esds/sim.hpp"
#include "test_util.hpp"

using namespace esds;
using esds::testing::flat_map;

namespace {

bool same_state(const WalkerState& a, const WalkerState& b) {
  return a.base_pos == b.base_pos && a.base_rot.coeffs() == b.base_rot.coeffs() && a.base_lin_vel == b.base_lin_vel &&
         a.base_ang_vel == b.base_ang_vel && a.q == b.q && a.qd == b.qd;
}

}  // namespace

TEST(Reset, FlatNoJitterStandsAtNominalHeight) {
  const TerrainMap map = flat_map();
  const WalkerConfig cfg;
  const WalkerState s = reset_walker(cfg, map, 0, false);
  EXPECT_EQ(s.base_pos.z(), nominal_base_height(cfg));
  EXPECT_EQ(s.base_pos.x(), 0.0);
  EXPECT_EQ(s.q, cfg.nominal_pose());
  EXPECT_TRUE(s.base_lin_vel.isZero());
  EXPECT_TRUE(s.qd.isZero());
  for (const auto& f : s.foot_pos) EXPECT_NEAR(f.z(), 0.0, 1e-12);
}

TEST(Reset, SameSeedSameState) {
  const TerrainMap map = generate_terrain(TerrainKind::Simple, TerrainParams{}, 2);
  const WalkerConfig cfg;
  EXPECT_TRUE(same_state(reset_walker(cfg, map, 17), reset_walker(cfg, map, 17)));
  EXPECT_FALSE(same_state(reset_walker(cfg, map, 17), reset_walker(cfg, map, 18)));
}

TEST(Reset, HundredSeedsInsideSpawnZoneWithSmallJitter) {
  const TerrainMap map = generate_terrain(TerrainKind::Gaps, TerrainParams{}, 4);
  const WalkerConfig cfg;
  const Rect& z = map.params.spawn_zone;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const WalkerState s = reset_walker(cfg, map, seed);
    EXPECT_GE(s.base_pos.x(), z.x0);
    EXPECT_LE(s.base_pos.x(), z.x1);
    EXPECT_GE(s.base_pos.y(), z.y0);
    EXPECT_LE(s.base_pos.y(), z.y1);
    EXPECT_LE(std::abs(s.yaw()), 0.02 + 1e-12);
    EXPECT_LE((s.q - cfg.nominal_pose()).cwiseAbs().maxCoeff(), 0.02 + 1e-12);
    EXPECT_TRUE(s.base_lin_vel.isZero());
    // Lowest foot touches the terrain.
    double gap = 1e9;
    for (const auto& f : s.foot_pos) gap = std::min(gap, f.z() - height_at_clamped(map, f.x(), f.y()));
    EXPECT_NEAR(gap, 0.0, 1e-9);
  }
}

TEST(Step, ZeroTorqueSettlesWithinOneSecond) {
  const TerrainMap map = flat_map();
  const WalkerConfig cfg;
  WalkerState s = reset_walker(cfg, map, 0, false);
  const int steps = static_cast<int>(std::lround(1.0 / cfg.control_dt()));
  for (int i = 0; i < steps; ++i) {
    const ContactReport c = step_walker(cfg, s, JointVector::Zero(), map);
    ASSERT_FALSE(c.torso_contact);
  }
  EXPECT_LT(s.base_lin_vel.norm(), 0.05);
  // Standing on the contact springs: the feet carry the weight.
  const ContactReport c = step_walker(cfg, s, JointVector::Zero(), map);
  const double support = c.foot_forces[0].z() + c.foot_forces[1].z();
  EXPECT_NEAR(support, cfg.torso_mass * cfg.gravity, 0.05 * cfg.torso_mass * cfg.gravity);
}

TEST(Step, FreeFallMatchesGravity) {
  const TerrainMap map = flat_map();
  const WalkerConfig cfg;
  WalkerState s = reset_walker(cfg, map, 0, false);
  s.base_pos.z() += 1.5;
  const double vz0 = s.base_lin_vel.z();
  const int steps = static_cast<int>(std::lround(0.1 / cfg.control_dt()));
  for (int i = 0; i < steps; ++i) {
    const ContactReport c = step_walker(cfg, s, JointVector::Zero(), map);
    ASSERT_FALSE(c.foot_contact[0] || c.foot_contact[1]);
  }
  EXPECT_NEAR(s.base_lin_vel.z() - vz0, -0.981, 0.00981);
}

TEST(Step, TorsoBelowSurfaceIsContact) {
  const TerrainMap map = flat_map();
  const WalkerConfig cfg;
  WalkerState s = reset_walker(cfg, map, 0, false);
  s.base_pos.z() = -0.05;
  const ContactReport c = step_walker(cfg, s, JointVector::Zero(), map);
  EXPECT_TRUE(c.torso_contact);
  EXPECT_GT(c.torso_penetration, 0.0);
}

TEST(Step, StandingIsNotTorsoContact) {
  const TerrainMap map = flat_map();
  const WalkerConfig cfg;
  WalkerState s = reset_walker(cfg, map, 0, false);
  const ContactReport c = step_walker(cfg, s, JointVector::Zero(), map);
  EXPECT_FALSE(c.torso_contact);
  EXPECT_EQ(c.torso_penetration, 0.0);
}

TEST(Step, EnergyDriftWithoutContactOrTorque) {
  const TerrainMap map = flat_map();
  const WalkerConfig cfg;
  WalkerState s = reset_walker(cfg, map, 0, false);
  s.base_pos.z() = 10.0;
  s.base_lin_vel = {0.8, -0.3, 1.0};
  s.base_ang_vel = {0.0, 0.0, 0.7};  // spin about the vertical principal axis; the support stays idle
  const double e0 = torso_energy(cfg, s);
  const int steps = static_cast<int>(std::lround(1.0 / cfg.control_dt()));
  for (int i = 0; i < steps; ++i) {
    const ContactReport c = step_walker(cfg, s, JointVector::Zero(), map);
    ASSERT_FALSE(c.foot_contact[0] || c.foot_contact[1] || c.torso_penetration > 0.0);
  }
  EXPECT_LE(std::abs(torso_energy(cfg, s) - e0) / std::abs(e0), 0.01);
}

TEST(Step, ContactForceOnlyWithPenetration) {
  const TerrainMap map = flat_map();
  const WalkerConfig cfg;
  const Eigen::Matrix3d inv = cfg.torso_inertia.asDiagonal().inverse();
  const Eigen::Vector3d v(0.3, 0.0, -0.5);
  for (double pen : {-0.1, -1e-9, 0.0}) {
    const auto c = sim_detail::penalty_contact(cfg, map, {0, 0, -pen}, v, pen, {0, 0, -0.5}, cfg.torso_mass, inv, 1);
    EXPECT_FALSE(c.active);
    EXPECT_TRUE(c.force.isZero());
  }
  const auto c = sim_detail::penalty_contact(cfg, map, {0, 0, -0.01}, v, 0.01, {0, 0, -0.5}, cfg.torso_mass, inv, 1);
  EXPECT_TRUE(c.active);
  EXPECT_GT(c.force.z(), 0.0);
  EXPECT_LE(std::abs(c.force.x()), cfg.friction * c.force.z() + 1e-12);
}

TEST(Step, ContactComplementarityAlongRollout) {
  const TerrainMap map = generate_terrain(TerrainKind::Simple, TerrainParams{}, 1);
  const WalkerConfig cfg;
  WalkerState s = reset_walker(cfg, map, 3);
  Rng rng(8);
  for (int i = 0; i < 200; ++i) {
    JointVector a;
    for (int j = 0; j < kNumJoints; ++j) a[j] = rng.uniform(-80.0, 80.0);  // beyond the limit: clamped inside
    const ContactReport c = step_walker(cfg, s, a, map);
    for (int leg = 0; leg < kNumLegs; ++leg)
      if (c.foot_forces[static_cast<std::size_t>(leg)].z() > 0.0) EXPECT_TRUE(c.foot_contact[static_cast<std::size_t>(leg)]);
    if (c.torso_contact && !c.fell && !c.nan_detected) EXPECT_GT(c.torso_penetration, 0.0);
    ASSERT_TRUE(s.finite());
    if (c.torso_contact) break;
  }
}

TEST(Step, NonFiniteTorqueIsIgnored) {
  const TerrainMap map = flat_map();
  const WalkerConfig cfg;
  WalkerState a = reset_walker(cfg, map, 0, false);
  WalkerState b = a;
  JointVector bad = JointVector::Zero();
  bad[2] = std::nan("");
  step_walker(cfg, a, bad, map);
  step_walker(cfg, b, JointVector::Zero(), map);
  EXPECT_TRUE(same_state(a, b));
}

TEST(Step, DivergenceForcesTorsoContact) {
  const TerrainMap map = flat_map();
  const WalkerConfig cfg;
  WalkerState s = reset_walker(cfg, map, 0, false);
  s.base_lin_vel.x() = std::numeric_limits<double>::infinity();
  const ContactReport c = step_walker(cfg, s, JointVector::Zero(), map);
  EXPECT_TRUE(c.nan_detected);
  EXPECT_TRUE(c.torso_contact);
}

TEST(Step, GapFallDropsMoreThanHalfAMeter) {
  TerrainMap map = flat_map(10.0, 10.0);
  const double edge = 1.5;
  esds::testing::carve(map, [&](double x, double) { return x > edge && x < edge + 1.0; });
  const WalkerConfig cfg;
  WalkerState s = reset_walker(cfg, map, 0, false);
  s.base_pos.x() = edge - 0.1;
  const double z0 = s.base_pos.z();
  bool fell = false;
  for (int i = 0; i < 100 && !fell; ++i) {
    s.base_lin_vel.x() = 2.0;  // constant forward push
    const ContactReport c = step_walker(cfg, s, JointVector::Zero(), map);
    fell = c.fell;
    if (fell) EXPECT_TRUE(c.torso_contact);
  }
  EXPECT_TRUE(fell);
  EXPECT_GT(z0 - s.base_pos.z(), 0.5);
}

TEST(Episode, ZeroStepsIsEmpty) {
  const TerrainMap map = flat_map();
  const Trajectory t = run_episode(zero_policy(), parse_reward("term t weight 1 = vx;"), map, Command{}, 0, 1, EnvConfig{});
  EXPECT_TRUE(t.empty());
  EXPECT_EQ(t.size(), 0u);
  EXPECT_EQ(t.term_names, (std::vector<std::string>{"t"}));
}

TEST(Episode, ZeroPolicyOnFlatMapNeverTouchesTorso) {
  const TerrainMap map = flat_map();
  const Trajectory t =
      run_episode(zero_policy(), parse_reward("term t weight 1 = vx;"), map, Command{0.5, 0, 0}, 200, 1, EnvConfig{});
  ASSERT_EQ(t.size(), 200u);
  EXPECT_FALSE(t.terminated);
  for (const auto& s : t.steps) {
    EXPECT_FALSE(s.torso_contact);
    EXPECT_GT(s.base_height, 0.3);  // sags, does not collapse
  }
}

TEST(Episode, DeterministicBitForBit) {
  const TerrainMap map = generate_terrain(TerrainKind::Obstacles, TerrainParams{}, 6);
  const RewardProgram reward = parse_reward("term t weight 1 = vx - frac_below(height_scan, -0.5);");
  auto policy = [](std::span<const double> obs, std::span<double> a) {
    for (std::size_t j = 0; j < a.size(); ++j) a[j] = std::sin(3.0 * obs[j] + static_cast<double>(j));
  };
  const Trajectory a = run_episode(policy, reward, map, Command{0.7, 0, 0}, 150, 9, EnvConfig{});
  const Trajectory b = run_episode(policy, reward, map, Command{0.7, 0, 0}, 150, 9, EnvConfig{});
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a.steps[i].x, b.steps[i].x);
    EXPECT_EQ(a.steps[i].z, b.steps[i].z);
    EXPECT_EQ(a.steps[i].reward, b.steps[i].reward);
    EXPECT_EQ(a.steps[i].action, b.steps[i].action);
  }
}

TEST(Episode, RecordsRewardTermsAndCommand) {
  const TerrainMap map = flat_map();
  const RewardProgram reward = parse_reward("term a weight 2 = vx_cmd;\nterm b weight -1 = torso_contact;");
  const Trajectory t = run_episode(zero_policy(), reward, map, Command{0.4, 0, 0}, 10, 1, EnvConfig{});
  ASSERT_EQ(t.size(), 10u);
  for (const auto& s : t.steps) {
    ASSERT_EQ(s.per_term.size(), 2u);
    EXPECT_EQ(s.per_term[0], 0.4);
    EXPECT_EQ(s.reward, 0.8);
    EXPECT_EQ(s.command, (Command{0.4, 0, 0}));
  }
}
