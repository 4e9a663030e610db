#include <gtest/gtest.h>

#include <cmath>

#include "esds/sensors.hpp"
#include "test_util.hpp"

using namespace esds;
using esds::testing::flat_map;

TEST(HeightScan, FlatTerrainIsConstantOffset) {
  const TerrainMap m = flat_map();
  const auto scan = height_scan(m, {0.2, -0.1, 0.6, 0.7}, SensorConfig{});
  ASSERT_EQ(scan.size(), 99u);
  for (double h : scan) EXPECT_DOUBLE_EQ(h, -0.6);
}

TEST(HeightScan, GapEntriesReadDepthMinusBase) {
  TerrainMap m = flat_map();
  esds::testing::carve(m, [](double x, double) { return x > 0.0 && x < 1.5; });
  SensorConfig cfg;
  const BasePose pose{0.0, 0.0, 0.6, 0.0};
  const auto scan = height_scan(m, pose, cfg);
  int gap_entries = 0;
  for (int r = 0; r < cfg.scan_rows; ++r)
    for (int c = 0; c < cfg.scan_cols; ++c) {
      const auto p = scan_point(pose, cfg, r, c);
      const double expect = height_at(m, p[0], p[1]) - 0.6;  // oracle
      EXPECT_DOUBLE_EQ(scan[static_cast<std::size_t>(r * cfg.scan_cols + c)], expect);
      if (is_gap_at(m, p[0], p[1])) {
        ++gap_entries;
        EXPECT_DOUBLE_EQ(expect, -1.6);
      }
    }
  EXPECT_GT(gap_entries, 0);
}

TEST(HeightScan, YawPiReflectsLattice) {
  const TerrainMap m = generate_terrain(TerrainKind::Obstacles, TerrainParams{}, 3);
  SensorConfig cfg;
  const BasePose turned{1.0, 2.0, 0.7, M_PI};
  const auto scan = height_scan(m, turned, cfg);
  for (int r = 0; r < cfg.scan_rows; ++r)
    for (int c = 0; c < cfg.scan_cols; ++c) {
      const double fwd = cfg.scan_ahead + (r - 0.5 * (cfg.scan_rows - 1)) * cfg.scan_spacing;
      const double lat = (c - 0.5 * (cfg.scan_cols - 1)) * cfg.scan_spacing;
      const double h = height_at_clamped(m, 1.0 - fwd, 2.0 - lat) - 0.7;
      EXPECT_NEAR(scan[static_cast<std::size_t>(r * cfg.scan_cols + c)], h, 1e-12);
    }
}

TEST(HeightScan, RelativeHeightInvariance) {
  auto shape = [](double x, double y) { return 0.2 * std::sin(x) * std::cos(0.5 * y); };
  const TerrainMap a = flat_map(10, 10, 0.05, shape);
  const TerrainMap b = flat_map(10, 10, 0.05, [&](double x, double y) { return shape(x, y) + 0.3; });
  const auto sa = height_scan(a, {0.4, 0.1, 0.6, 0.3}, SensorConfig{});
  const auto sb = height_scan(b, {0.4, 0.1, 0.9, 0.3}, SensorConfig{});
  for (std::size_t i = 0; i < sa.size(); ++i) EXPECT_NEAR(sa[i], sb[i], 1e-12);
}

TEST(HeightScan, OffMapSamplesClamp) {
  const TerrainMap m = flat_map(4, 4);
  const auto scan = height_scan(m, {1.95, 1.95, 0.5, 0.0}, SensorConfig{});
  for (double h : scan) EXPECT_DOUBLE_EQ(h, -0.5);
}

TEST(Lidar, FlatGroundFortyFiveDegrees) {
  SensorConfig cfg;
  cfg.lidar_pitch = M_PI / 4;
  cfg.sensor_height = 0.1;
  const auto r = lidar_scan(flat_map(), {0.0, 0.0, 0.5, 0.3}, cfg);  // sensor origin at 0.6 m
  ASSERT_EQ(r.size(), 36u);
  for (double d : r) EXPECT_NEAR(d, 0.6 * std::sqrt(2.0), cfg.march_tolerance);
}

TEST(Lidar, HorizontalRaysMissFlatFloor) {
  SensorConfig cfg;
  cfg.lidar_pitch = 0.0;
  for (double d : lidar_scan(flat_map(), {0.0, 0.0, 0.5, 0.0}, cfg)) EXPECT_EQ(d, cfg.lidar_max_range);
}

namespace {

// 1 m wall whose face is at x = wall_x; fine grid so the interpolated face is sharp.
TerrainMap wall_map(double wall_x) {
  return flat_map(10, 4, 0.01, [=](double x, double) { return x >= wall_x ? 1.0 : 0.0; });
}

}  // namespace

TEST(Lidar, WallAtTwoMetres) {
  SensorConfig cfg;
  cfg.lidar_pitch = 0.0;
  cfg.lidar_rays = 36;
  const auto r = lidar_scan(wall_map(2.0), {0.0, 0.0, 0.5, 0.0}, cfg);
  // ray 0 points at the wall, ray 18 away from it; the interpolated face spans one cell
  EXPECT_NEAR(r[0], 2.0, 0.01 + cfg.march_tolerance);
  EXPECT_EQ(r[18], cfg.lidar_max_range);
  // oblique rays toward the wall hit at 2 / cos(azimuth)
  EXPECT_NEAR(r[2], 2.0 / std::cos(2 * 2 * M_PI / 36), 0.02);
}

TEST(Lidar, RangesNonIncreasingAsWallApproaches) {
  SensorConfig cfg;
  cfg.lidar_pitch = 0.0;
  double prev = INFINITY;
  for (double d = 3.8; d >= 0.6; d -= 0.2) {
    const double r = lidar_scan(wall_map(d), {0.0, 0.0, 0.5, 0.0}, cfg)[0];
    EXPECT_LE(r, prev + 1e-12) << d;
    EXPECT_GT(r, 0.0);
    EXPECT_LE(r, cfg.lidar_max_range);
    prev = r;
  }
}

TEST(Observation, DeskLayoutLength) {
  SensorConfig cfg;
  EXPECT_EQ(cfg.exteroceptive_size(), 99 + 36);
  EXPECT_EQ(observation_size(cfg, 6), proprio_size(6) + 135);
  EXPECT_EQ(proprio_size(6), 12 + 18);
}

TEST(Observation, FullScaleExteroceptiveBlock) {
  const SensorConfig cfg = SensorConfig::full_scale();
  EXPECT_EQ(cfg.exteroceptive_size(), 711);
  EXPECT_EQ(observation_size(cfg, 12), proprio_size(12) + 711);
}

TEST(Observation, PerceptiveConcatenatesBlindZeroes) {
  SensorFrame f;
  f.proprio = {1, 2, 3};
  f.height_scan = {-0.5, -0.6};
  f.lidar = {2.0, 3.0, 4.0};
  const auto p = assemble_observation(f, ObservationMode::Perceptive);
  EXPECT_EQ(p, (std::vector<double>{1, 2, 3, -0.5, -0.6, 2.0, 3.0, 4.0}));
  const auto b = assemble_observation(f, ObservationMode::Blind);
  EXPECT_EQ(b.size(), p.size());
  EXPECT_EQ(b, (std::vector<double>{1, 2, 3, 0, 0, 0, 0, 0}));
  EXPECT_EQ(assemble_observation(f, ObservationMode::Perceptive), p);  // bit-identical reassembly
}

TEST(SensorConfig, ValidationAndJson) {
  SensorConfig c;
  c.scan_rows = 0;
  EXPECT_THROW(c.validate(), Error);
  c = SensorConfig::full_scale();
  EXPECT_EQ(sensor_config_from_json(to_json(c)), c);
}
