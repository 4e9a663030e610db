#pragma once

// Episode metrics: velocity tracking error, exploration score, torso contact
// rate, a gait-smoothness quality proxy and the stationary fraction.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "esds/common.hpp"
#include "esds/env.hpp"

namespace esds {

struct MetricsConfig {
  double cell_size = 0.5;
  int window_steps = 100;  // 2 s at 50 Hz
  double stationary_speed = 0.05;
  double quality_action = 0.1;  // alpha
  double quality_height = 10.0;  // beta
  double quality_tilt = 2.0;  // delta
};

inline double velocity_tracking_error(double vx, double vy, double wz, const Command& cmd) {
  const double ex = vx - cmd.vx;
  const double ey = vy - cmd.vy;
  const double ew = wz - cmd.wz;
  return std::sqrt(ex * ex + ey * ey + ew * ew);
}

inline double exploration_score(double n_cells, double r_max, double delta_d) {
  return 0.5 * n_cells + 2.0 * r_max + std::min(10.0 * delta_d, 5.0);
}

class ExplorationTracker {
 public:
  explicit ExplorationTracker(double cell_size = 0.5, int window_steps = 100)
      : cell_size_(cell_size), window_(static_cast<std::size_t>(std::max(1, window_steps))) {}

  void update(double x, double y) {
    if (!started_) {
      ox_ = x;
      oy_ = y;
      started_ = true;
    }
    visited_.emplace(static_cast<std::int64_t>(std::floor(x / cell_size_)),
                     static_cast<std::int64_t>(std::floor(y / cell_size_)));
    r_max_ = std::max(r_max_, std::hypot(x - ox_, y - oy_));
    recent_.emplace_back(x, y);
    if (recent_.size() > window_ + 1) recent_.pop_front();
  }

  std::size_t n_cells() const { return visited_.size(); }
  double r_max() const { return r_max_; }

  /// Displacement between the oldest and newest positions in the window.
  double delta_d() const {
    if (recent_.size() < 2) return 0.0;
    return std::hypot(recent_.back().first - recent_.front().first, recent_.back().second - recent_.front().second);
  }

  double score() const { return exploration_score(static_cast<double>(n_cells()), r_max_, delta_d()); }

 private:
  double cell_size_;
  std::size_t window_;
  bool started_ = false;
  double ox_ = 0.0, oy_ = 0.0;
  double r_max_ = 0.0;
  std::set<std::pair<std::int64_t, std::int64_t>> visited_;
  std::deque<std::pair<double, double>> recent_;
};

inline double exploration_score(const ExplorationTracker& tracker) { return tracker.score(); }

inline double torso_contact_rate(const Trajectory& traj) {
  if (traj.empty()) throw Error(ErrorCode::EmptyInput, "empty trajectory");
  const auto hits = std::count_if(traj.steps.begin(), traj.steps.end(), [](const auto& s) { return s.torso_contact; });
  return 1000.0 * static_cast<double>(hits) / static_cast<double>(traj.size());
}

inline double locomotion_quality(const Trajectory& traj, const MetricsConfig& cfg = {}) {
  if (traj.empty()) throw Error(ErrorCode::EmptyInput, "empty trajectory");
  const std::size_t n = traj.size();
  double action = 0.0;
  for (std::size_t t = 1; t < n; ++t) action += (traj.steps[t].action - traj.steps[t - 1].action).squaredNorm();
  if (n > 1) action /= static_cast<double>(n - 1);
  double mean_z = 0.0;
  for (const auto& s : traj.steps) mean_z += s.z;
  mean_z /= static_cast<double>(n);
  double var_z = 0.0;
  double tilt = 0.0;
  for (const auto& s : traj.steps) {
    var_z += (s.z - mean_z) * (s.z - mean_z);
    tilt += s.roll * s.roll + s.pitch * s.pitch;
  }
  var_z /= static_cast<double>(n);
  tilt /= static_cast<double>(n);
  const double penalty = cfg.quality_action * action + cfg.quality_height * var_z + cfg.quality_tilt * tilt;
  return std::clamp(std::exp(-penalty), 0.0, 1.0);
}

inline double stationary_fraction(const Trajectory& traj, double v_thresh = 0.05) {
  if (traj.empty()) throw Error(ErrorCode::EmptyInput, "empty trajectory");
  const auto still = std::count_if(traj.steps.begin(), traj.steps.end(),
                                   [&](const auto& s) { return std::hypot(s.vx, s.vy) < v_thresh; });
  return static_cast<double>(still) / static_cast<double>(traj.size());
}

struct EpisodeMetrics {
  double velocity_tracking_error = 0.0;
  double exploration_score = 0.0;
  double torso_contact_rate = 0.0;
  double locomotion_quality = 0.0;
  double stationary_fraction = 0.0;
  double episode_length = 0.0;

  bool finite() const {
    return std::isfinite(velocity_tracking_error) && std::isfinite(exploration_score) &&
           std::isfinite(torso_contact_rate) && std::isfinite(locomotion_quality) &&
           std::isfinite(stationary_fraction) && std::isfinite(episode_length);
  }

  bool operator==(const EpisodeMetrics&) const = default;
};

inline EpisodeMetrics episode_metrics(const Trajectory& traj, const MetricsConfig& cfg = {}) {
  if (traj.empty()) throw Error(ErrorCode::EmptyInput, "empty trajectory");
  EpisodeMetrics m;
  ExplorationTracker tracker(cfg.cell_size, cfg.window_steps);
  double vte = 0.0;
  for (const auto& s : traj.steps) {
    vte += velocity_tracking_error(s.vx, s.vy, s.wz, s.command);
    tracker.update(s.x, s.y);
  }
  m.velocity_tracking_error = vte / static_cast<double>(traj.size());
  m.exploration_score = tracker.score();
  m.torso_contact_rate = torso_contact_rate(traj);
  m.locomotion_quality = locomotion_quality(traj, cfg);
  m.stationary_fraction = stationary_fraction(traj, cfg.stationary_speed);
  m.episode_length = static_cast<double>(traj.size());
  return m;
}

/// Field-wise mean.
inline EpisodeMetrics aggregate_metrics(const std::vector<EpisodeMetrics>& rows) {
  if (rows.empty()) throw Error(ErrorCode::EmptyInput, "no episodes to aggregate");
  EpisodeMetrics a;
  for (const auto& r : rows) {
    a.velocity_tracking_error += r.velocity_tracking_error;
    a.exploration_score += r.exploration_score;
    a.torso_contact_rate += r.torso_contact_rate;
    a.locomotion_quality += r.locomotion_quality;
    a.stationary_fraction += r.stationary_fraction;
    a.episode_length += r.episode_length;
  }
  const double n = static_cast<double>(rows.size());
  a.velocity_tracking_error /= n;
  a.exploration_score /= n;
  a.torso_contact_rate /= n;
  a.locomotion_quality /= n;
  a.stationary_fraction /= n;
  a.episode_length /= n;
  return a;
}

inline const char* kMetricsCsvHeader =
    "velocity_tracking_error,exploration_score,torso_contact_rate,locomotion_quality,stationary_fraction,"
    "episode_length";

inline std::string metrics_csv_row(const EpisodeMetrics& m) {
  return format_roundtrip(m.velocity_tracking_error) + "," + format_roundtrip(m.exploration_score) + "," +
         format_roundtrip(m.torso_contact_rate) + "," + format_roundtrip(m.locomotion_quality) + "," +
         format_roundtrip(m.stationary_fraction) + "," + format_roundtrip(m.episode_length);
}

/// One row per episode, then the aggregate row.
inline std::string metrics_csv(const std::vector<EpisodeMetrics>& rows) {
  std::string out = std::string(kMetricsCsvHeader) + "\n";
  for (const auto& r : rows) out += metrics_csv_row(r) + "\n";
  out += metrics_csv_row(aggregate_metrics(rows)) + "\n";
  return out;
}

inline nlohmann::json to_json(const EpisodeMetrics& m) {
  return {{"velocity_tracking_error", m.velocity_tracking_error},
          {"exploration_score", m.exploration_score},
          {"torso_contact_rate", m.torso_contact_rate},
          {"locomotion_quality", m.locomotion_quality},
          {"stationary_fraction", m.stationary_fraction},
          {"episode_length", m.episode_length}};
}

inline EpisodeMetrics episode_metrics_from_json(const nlohmann::json& j) {
  EpisodeMetrics m;
  m.velocity_tracking_error = j.at("velocity_tracking_error").get<double>();
  m.exploration_score = j.at("exploration_score").get<double>();
  m.torso_contact_rate = j.at("torso_contact_rate").get<double>();
  m.locomotion_quality = j.at("locomotion_quality").get<double>();
  m.stationary_fraction = j.at("stationary_fraction").get<double>();
  m.episode_length = j.at("episode_length").get<double>();
  return m;
}

}  // namespace esds
