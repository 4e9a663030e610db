#pragma once

// Environment analysis agent: a standing robot fleet surveys the terrain with
// its own sensors and the frames are reduced to scalar terrain statistics.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "esds/common.hpp"
#include "esds/sensors.hpp"
#include "esds/terrain.hpp"

namespace esds {

struct StatThresholds {
  double gap_threshold = -0.5;
  double obstacle_threshold = 0.10;
  double roughness_band = 0.5;

  bool operator==(const StatThresholds&) const = default;
};

struct TerrainStats {
  double gap_ratio = 0.0;
  double obstacle_density = 0.0;
  double roughness = 0.0;
  double mean_abs_slope = 0.0;
  double max_drop = 0.0;
  std::uint64_t sample_count = 0;
  TerrainKind terrain_kind = TerrainKind::Simple;

  bool operator==(const TerrainStats&) const = default;
};

/// Scanner used by the survey fleet: the full 27x21 lattice spread wide, so a
/// frame's samples reach well past the terrain next to the robot.
inline SensorConfig survey_sensor_config() {
  SensorConfig c = SensorConfig::full_scale();
  c.scan_spacing = 0.25;
  c.lidar_rays = 36;
  return c;
}

inline double survey_reach(const SensorConfig& s) {
  const double fwd = std::abs(s.scan_ahead) + 0.5 * (s.scan_rows - 1) * s.scan_spacing;
  const double lat = 0.5 * (s.scan_cols - 1) * s.scan_spacing;
  return std::sqrt(fwd * fwd + lat * lat);
}

struct FleetOptions {
  int num_robots = 100;  // 1000 on the full-size setup
  double duration_s = 10.0;
  double tick_hz = 10.0;
  double stand_height = 0.6225;
  int num_joints = 6;
  bool interior = true;  // keep every lattice point inside the arena
  SensorConfig sensors = survey_sensor_config();
};

inline std::size_t fleet_frame_count(const FleetOptions& options) {
  return static_cast<std::size_t>(options.num_robots) *
         static_cast<std::size_t>(std::llround(options.duration_s * options.tick_hz));
}

/// Standing robots at seeded uniform poses (re-drawn when they land in a gap),
/// one frame per sensor tick.
inline std::vector<SensorFrame> collect_fleet_data(const TerrainMap& map, const FleetOptions& options,
                                                   std::uint64_t seed) {
  if (options.num_robots < 1) throw Error(ErrorCode::InvalidParams, "num_robots must be >= 1");
  if (!(options.duration_s > 0.0) || !(options.tick_hz > 0.0))
    throw Error(ErrorCode::InvalidParams, "duration and tick rate must be positive");
  options.sensors.validate();
  const auto ticks = static_cast<std::size_t>(std::llround(options.duration_s * options.tick_hz));
  if (ticks == 0) throw Error(ErrorCode::InvalidParams, "duration shorter than one sensor tick");

  Rng rng(mix_seed(seed, 0xf1ee7));
  std::vector<SensorFrame> frames;
  frames.reserve(static_cast<std::size_t>(options.num_robots) * ticks);
  constexpr int kMaxDraws = 1000;
  const double margin = options.interior ? survey_reach(options.sensors) : 0.0;
  if (2 * margin >= map.width() || 2 * margin >= map.length())
    throw Error(ErrorCode::InvalidParams, "survey lattice wider than the terrain");
  for (int robot = 0; robot < options.num_robots; ++robot) {
    BasePose pose;
    bool placed = false;
    for (int draw = 0; draw < kMaxDraws; ++draw) {
      pose.x = rng.uniform(map.origin_x + margin, map.origin_x + map.width() - margin);
      pose.y = rng.uniform(map.origin_y + margin, map.origin_y + map.length() - margin);
      pose.yaw = rng.uniform(-M_PI, M_PI);
      if (!is_gap_at(map, pose.x, pose.y)) {
        placed = true;
        break;
      }
    }
    if (!placed) throw Error(ErrorCode::NoValidSpawn, "no gap-free spawn point found");
    pose.z = height_at_clamped(map, pose.x, pose.y) + options.stand_height;

    SensorFrame frame;
    frame.height_scan = height_scan(map, pose, options.sensors);
    frame.lidar = lidar_scan(map, pose, options.sensors);
    frame.proprio.assign(static_cast<std::size_t>(proprio_size(options.num_joints)), 0.0);
    frame.proprio[8] = -1.0;  // gravity along -z of an upright base
    for (std::size_t t = 0; t < ticks; ++t) frames.push_back(frame);
  }
  return frames;
}

namespace detail {

// Fixed-point accumulator: integer sums are associative, so the reduction is
// bit-identical under any frame order or worker split.
struct ExactSum {
  static constexpr double kQuantum = 1e-9;
  __int128 sum = 0;
  __int128 sum_sq = 0;
  std::uint64_t count = 0;

  void add(double v) {
    const auto q = static_cast<__int128>(std::llround(v / kQuantum));
    sum += q;
    sum_sq += q * q;
    ++count;
  }
  double mean() const { return count ? static_cast<double>(sum) * kQuantum / static_cast<double>(count) : 0.0; }
  double stddev() const {
    if (count == 0) return 0.0;
    const long double n = static_cast<long double>(count);
    const long double m = static_cast<long double>(sum) / n;
    const long double var = static_cast<long double>(sum_sq) / n - m * m;
    return var > 0 ? static_cast<double>(std::sqrt(var)) * kQuantum : 0.0;
  }
};

inline double median_of(std::span<const double> values, std::vector<double>& scratch) {
  scratch.assign(values.begin(), values.end());
  const std::size_t mid = scratch.size() / 2;
  std::nth_element(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(mid), scratch.end());
  double m = scratch[mid];
  if (scratch.size() % 2 == 0) {
    const double lower = *std::max_element(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(mid));
    m = 0.5 * (m + lower);
  }
  return m;
}

}  // namespace detail

/// Reduces frames to terrain statistics. Deviations are taken from each
/// frame's median relative height.
inline TerrainStats compute_statistics(std::span<const SensorFrame> frames, const StatThresholds& thresholds,
                                       const SensorConfig& sensors, TerrainKind kind = TerrainKind::Simple) {
  if (frames.empty()) throw Error(ErrorCode::EmptyInput, "no sensor frames");
  std::uint64_t total = 0;
  std::uint64_t gaps = 0;
  std::uint64_t obstacles = 0;
  detail::ExactSum rough;
  detail::ExactSum slope;
  double deepest = 0.0;
  std::vector<double> scratch;
  const int rows = sensors.scan_rows;
  const int cols = sensors.scan_cols;

  for (const auto& frame : frames) {
    if (frame.height_scan.empty()) continue;
    const double ref = detail::median_of(frame.height_scan, scratch);
    for (double h : frame.height_scan) {
      const double dev = h - ref;
      ++total;
      if (dev < thresholds.gap_threshold) ++gaps;
      else if (dev > thresholds.obstacle_threshold) ++obstacles;
      if (std::abs(dev) <= thresholds.roughness_band) rough.add(dev);
      deepest = std::min(deepest, dev);
    }
    if (static_cast<int>(frame.height_scan.size()) == rows * cols) {
      auto at = [&](int r, int c) { return frame.height_scan[static_cast<std::size_t>(r * cols + c)]; };
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
          if (r + 1 < rows) slope.add(std::abs(at(r + 1, c) - at(r, c)) / sensors.scan_spacing);
          if (c + 1 < cols) slope.add(std::abs(at(r, c + 1) - at(r, c)) / sensors.scan_spacing);
        }
    }
  }
  if (total == 0) throw Error(ErrorCode::EmptyInput, "frames carry no height samples");

  TerrainStats stats;
  stats.gap_ratio = static_cast<double>(gaps) / static_cast<double>(total);
  stats.obstacle_density = static_cast<double>(obstacles) / static_cast<double>(total);
  stats.roughness = rough.stddev();
  stats.mean_abs_slope = slope.mean();
  stats.max_drop = -deepest;
  stats.sample_count = total;
  stats.terrain_kind = kind;
  return stats;
}

inline TerrainStats analyze_environment(const TerrainMap& map, const FleetOptions& options,
                                        const StatThresholds& thresholds, std::uint64_t seed) {
  const auto frames = collect_fleet_data(map, options, seed);
  return compute_statistics(frames, thresholds, options.sensors, map.kind);
}

/// Statistics with every exteroceptive quantity zeroed (what a sensorless
/// agent would report).
inline TerrainStats zeroed_exteroception(TerrainStats stats) {
  stats.gap_ratio = 0.0;
  stats.obstacle_density = 0.0;
  stats.roughness = 0.0;
  stats.mean_abs_slope = 0.0;
  stats.max_drop = 0.0;
  return stats;
}

/// key: value lines, fixed order, three decimals; embedded verbatim in prompts.
inline std::string stats_summary_text(const TerrainStats& stats) {
  std::string out;
  out += "terrain_kind: " + to_string(stats.terrain_kind) + "\n";
  out += "gap_ratio: " + format_fixed(stats.gap_ratio, 3) + "\n";
  out += "obstacle_density: " + format_fixed(stats.obstacle_density, 3) + "\n";
  out += "roughness: " + format_fixed(stats.roughness, 3) + "\n";
  out += "mean_abs_slope: " + format_fixed(stats.mean_abs_slope, 3) + "\n";
  out += "max_drop: " + format_fixed(stats.max_drop, 3) + "\n";
  out += "sample_count: " + std::to_string(stats.sample_count) + "\n";
  return out;
}

inline nlohmann::json to_json(const StatThresholds& t) {
  return {{"gap_threshold", t.gap_threshold},
          {"obstacle_threshold", t.obstacle_threshold},
          {"roughness_band", t.roughness_band}};
}

inline StatThresholds stat_thresholds_from_json(const nlohmann::json& j) {
  return {j.at("gap_threshold").get<double>(), j.at("obstacle_threshold").get<double>(),
          j.at("roughness_band").get<double>()};
}

inline nlohmann::json to_json(const TerrainStats& s) {
  return {{"gap_ratio", s.gap_ratio},
          {"obstacle_density", s.obstacle_density},
          {"roughness", s.roughness},
          {"mean_abs_slope", s.mean_abs_slope},
          {"max_drop", s.max_drop},
          {"sample_count", s.sample_count},
          {"terrain_kind", to_string(s.terrain_kind)}};
}

inline TerrainStats terrain_stats_from_json(const nlohmann::json& j) {
  TerrainStats s;
  s.gap_ratio = j.at("gap_ratio").get<double>();
  s.obstacle_density = j.at("obstacle_density").get<double>();
  s.roughness = j.at("roughness").get<double>();
  s.mean_abs_slope = j.at("mean_abs_slope").get<double>();
  s.max_drop = j.at("max_drop").get<double>();
  s.sample_count = j.at("sample_count").get<std::uint64_t>();
  s.terrain_kind = terrain_kind_from_string(j.at("terrain_kind").get<std::string>());
  return s;
}

}  // namespace esds
