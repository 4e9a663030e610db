#pragma once

// Simulated exteroception: a yaw-aligned height-scan lattice ahead of the base
// and a single downward-pitched LiDAR sweep, plus observation assembly.

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "json.hpp"

#include "esds/common.hpp"
#include "esds/terrain.hpp"

namespace esds {

struct SensorConfig {
  int scan_rows = 11;   // along the heading
  int scan_cols = 9;    // across the heading
  double scan_spacing = 0.1;
  double scan_ahead = 0.3;  // lattice center offset along the heading
  int lidar_rays = 36;
  double lidar_pitch = M_PI / 6.0;
  double lidar_max_range = 4.0;
  double sensor_height = 0.1;
  double march_step = 0.05;
  double march_tolerance = 1e-3;

  /// Height-scanner and LiDAR resolution used on the full-size robot.
  static SensorConfig full_scale() {
    SensorConfig c;
    c.scan_rows = 27;
    c.scan_cols = 21;
    c.lidar_rays = 144;
    return c;
  }

  int scan_size() const { return scan_rows * scan_cols; }
  int exteroceptive_size() const { return scan_size() + lidar_rays; }

  void validate() const {
    if (scan_rows < 1 || scan_cols < 1 || lidar_rays < 1)
      throw Error(ErrorCode::InvalidParams, "sensor counts must be >= 1");
    if (!(scan_spacing > 0.0)) throw Error(ErrorCode::InvalidParams, "scan_spacing must be positive");
    if (!(lidar_max_range > 0.0)) throw Error(ErrorCode::InvalidParams, "lidar_max_range must be positive");
    if (!(march_step > 0.0) || !(march_tolerance > 0.0))
      throw Error(ErrorCode::InvalidParams, "ray march step and tolerance must be positive");
  }

  bool operator==(const SensorConfig&) const = default;
};

/// Planar pose plus height of the base origin.
struct BasePose {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double yaw = 0.0;
};

enum class ObservationMode { Perceptive, Blind };

inline std::string to_string(ObservationMode mode) {
  return mode == ObservationMode::Perceptive ? "perceptive" : "blind";
}

inline ObservationMode observation_mode_from_string(const std::string& s) {
  if (s == "perceptive") return ObservationMode::Perceptive;
  if (s == "blind") return ObservationMode::Blind;
  throw Error(ErrorCode::InvalidParams, "unknown observation mode '" + s + "'");
}

/// Proprioceptive block: base linear velocity (3), base angular velocity (3),
/// gravity direction in the base frame (3), velocity command (3), then joint
/// positions, joint velocities and previous action (J each).
inline constexpr int kProprioBase = 12;

inline int proprio_size(int num_joints) { return kProprioBase + 3 * num_joints; }

inline int observation_size(const SensorConfig& config, int num_joints) {
  return proprio_size(num_joints) + config.exteroceptive_size();
}

struct SensorFrame {
  std::vector<double> height_scan;  // row-major scan_rows x scan_cols, terrain z minus base z
  std::vector<double> lidar;
  std::vector<double> proprio;
};

/// World-frame (x, y) of lattice point (row, col).
inline std::array<double, 2> scan_point(const BasePose& pose, const SensorConfig& config, int row, int col) {
  const double forward = config.scan_ahead + (row - 0.5 * (config.scan_rows - 1)) * config.scan_spacing;
  const double lateral = (col - 0.5 * (config.scan_cols - 1)) * config.scan_spacing;
  const double c = std::cos(pose.yaw);
  const double s = std::sin(pose.yaw);
  return {pose.x + c * forward - s * lateral, pose.y + s * forward + c * lateral};
}

inline void height_scan_into(const TerrainMap& map, const BasePose& pose, const SensorConfig& config,
                             std::span<double> out) {
  std::size_t k = 0;
  for (int r = 0; r < config.scan_rows; ++r)
    for (int c = 0; c < config.scan_cols; ++c) {
      const auto p = scan_point(pose, config, r, c);
      out[k++] = height_at_clamped(map, p[0], p[1]) - pose.z;
    }
}

inline std::vector<double> height_scan(const TerrainMap& map, const BasePose& pose, const SensorConfig& config) {
  std::vector<double> out(static_cast<std::size_t>(config.scan_size()));
  height_scan_into(map, pose, config, out);
  return out;
}

/// Distance along one ray to the first heightfield crossing: fixed-step march,
/// then bisection of the bracketing interval down to the march tolerance.
inline double cast_ray(const TerrainMap& map, const std::array<double, 3>& origin, const std::array<double, 3>& dir,
                       const SensorConfig& config) {
  auto below = [&](double t) {
    const double x = origin[0] + t * dir[0];
    const double y = origin[1] + t * dir[1];
    const double z = origin[2] + t * dir[2];
    return z <= height_at_clamped(map, x, y);
  };
  if (below(0.0)) return config.march_tolerance;
  const double step = config.march_step;
  const double max_range = config.lidar_max_range;
  double prev = 0.0;
  for (int k = 1;; ++k) {
    const double t = std::min(k * step, max_range);
    if (below(t)) {
      double lo = prev;
      double hi = t;
      while (hi - lo > config.march_tolerance) {
        const double mid = 0.5 * (lo + hi);
        if (below(mid)) hi = mid;
        else lo = mid;
      }
      return std::clamp(0.5 * (lo + hi), config.march_tolerance, max_range);
    }
    if (t >= max_range) return max_range;
    prev = t;
  }
}

inline void lidar_scan_into(const TerrainMap& map, const BasePose& pose, const SensorConfig& config,
                            std::span<double> out) {
  const std::array<double, 3> origin{pose.x, pose.y, pose.z + config.sensor_height};
  const double cp = std::cos(config.lidar_pitch);
  const double sp = std::sin(config.lidar_pitch);
  for (int i = 0; i < config.lidar_rays; ++i) {
    const double azimuth = pose.yaw + 2.0 * M_PI * i / config.lidar_rays;
    const std::array<double, 3> dir{cp * std::cos(azimuth), cp * std::sin(azimuth), -sp};
    out[static_cast<std::size_t>(i)] = cast_ray(map, origin, dir, config);
  }
}

inline std::vector<double> lidar_scan(const TerrainMap& map, const BasePose& pose, const SensorConfig& config) {
  std::vector<double> out(static_cast<std::size_t>(config.lidar_rays));
  lidar_scan_into(map, pose, config, out);
  return out;
}

/// [proprio | height scan | lidar]; Blind keeps the width but zeroes the
/// exteroceptive block.
inline void assemble_observation_into(const SensorFrame& frame, ObservationMode mode, std::span<double> out) {
  std::size_t k = 0;
  for (double v : frame.proprio) out[k++] = v;
  const bool see = mode == ObservationMode::Perceptive;
  for (double v : frame.height_scan) out[k++] = see ? v : 0.0;
  for (double v : frame.lidar) out[k++] = see ? v : 0.0;
}

inline std::vector<double> assemble_observation(const SensorFrame& frame, ObservationMode mode) {
  std::vector<double> out(frame.proprio.size() + frame.height_scan.size() + frame.lidar.size());
  assemble_observation_into(frame, mode, out);
  return out;
}

inline nlohmann::json to_json(const SensorConfig& c) {
  return {{"scan_rows", c.scan_rows},       {"scan_cols", c.scan_cols},
          {"scan_spacing", c.scan_spacing}, {"scan_ahead", c.scan_ahead},
          {"lidar_rays", c.lidar_rays},     {"lidar_pitch", c.lidar_pitch},
          {"lidar_max_range", c.lidar_max_range}, {"sensor_height", c.sensor_height},
          {"march_step", c.march_step},     {"march_tolerance", c.march_tolerance}};
}

inline SensorConfig sensor_config_from_json(const nlohmann::json& j) {
  SensorConfig c;
  c.scan_rows = j.at("scan_rows").get<int>();
  c.scan_cols = j.at("scan_cols").get<int>();
  c.scan_spacing = j.at("scan_spacing").get<double>();
  c.scan_ahead = j.at("scan_ahead").get<double>();
  c.lidar_rays = j.at("lidar_rays").get<int>();
  c.lidar_pitch = j.at("lidar_pitch").get<double>();
  c.lidar_max_range = j.at("lidar_max_range").get<double>();
  c.sensor_height = j.at("sensor_height").get<double>();
  c.march_step = j.at("march_step").get<double>();
  c.march_tolerance = j.at("march_tolerance").get<double>();
  c.validate();
  return c;
}

}  // namespace esds
