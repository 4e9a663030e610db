#pragma once

// Closed-loop walker environment: sensing, observation scaling, reward
// features and the episode loop shared by training and evaluation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "esds/common.hpp"
#include "esds/envstats.hpp"
#include "esds/reward_dsl.hpp"
#include "esds/sensors.hpp"
#include "esds/sim.hpp"
#include "esds/terrain.hpp"

namespace esds {

struct Command {
  double vx = 0.0;
  double vy = 0.0;
  double wz = 0.0;

  bool operator==(const Command&) const = default;
};

struct CommandRanges {
  Range vx{0.3, 1.0};
  Range vy{0.0, 0.0};
  Range wz{0.0, 0.0};
  double speed_limit = 1.0;
  double yaw_rate_limit = 1.0;

  void validate() const {
    auto ok = [](const Range& r, double lim) {
      return std::isfinite(r.lo) && std::isfinite(r.hi) && r.lo <= r.hi && std::abs(r.lo) <= lim &&
             std::abs(r.hi) <= lim;
    };
    if (!ok(vx, speed_limit) || !ok(vy, speed_limit) || !ok(wz, yaw_rate_limit))
      throw Error(ErrorCode::InvalidParams, "command ranges must be ordered and within the limits");
  }

  Command sample(Rng& rng) const {
    Command c{rng.uniform(vx.lo, vx.hi), rng.uniform(vy.lo, vy.hi), rng.uniform(wz.lo, wz.hi)};
    const double planar = std::hypot(c.vx, c.vy);
    if (planar > speed_limit) {
      c.vx *= speed_limit / planar;
      c.vy *= speed_limit / planar;
    }
    return c;
  }
};

/// Fixed per-block scaling applied to raw observations before the policy.
struct ObservationScales {
  double lin_vel = 1.0;
  double ang_vel = 0.25;
  double gravity = 1.0;
  double command = 1.0;
  double joint_pos = 1.0;  // applied to q - q_nominal
  double joint_vel = 0.05;
  double action = 1.0;
  double height_scan = 1.0;  // applied to (h + stand height), then clipped
  double height_clip = 1.5;
  double lidar = 0.25;  // applied to the range
};

struct EnvConfig {
  WalkerConfig walker;
  SensorConfig sensors;
  ObservationMode mode = ObservationMode::Perceptive;
  ObservationScales scales;
  CommandRanges commands;
  TerrainStats stats;           // exposed to rewards as constants
  int max_episode_steps = 500;  // 10 s at 50 Hz
  bool reset_jitter = true;

  int observation_size() const { return esds::observation_size(sensors, kNumJoints); }
};

/// Feature names every reward may reference, plus the exteroceptive vectors
/// in Perceptive mode.
inline FeatureSchema feature_schema(ObservationMode mode, const SensorConfig& sensors) {
  FeatureSchema s;
  for (const char* name : {"vx", "vy", "vz", "wz", "vx_cmd", "vy_cmd", "wz_cmd", "base_height", "roll", "pitch",
                           "joint_vel_norm", "action_rate", "torque_sq", "foot_contact_l", "foot_contact_r",
                           "torso_contact", "gap_ratio", "obstacle_density", "roughness", "mean_abs_slope",
                           "max_drop"})
    s.add({name, ValueKind::Scalar, 1});
  s.add({"action", ValueKind::Vector, kNumJoints});
  s.add({"prev_action", ValueKind::Vector, kNumJoints});
  if (mode == ObservationMode::Perceptive) {
    s.add({"height_scan", ValueKind::Vector, sensors.scan_size()});
    s.add({"lidar", ValueKind::Vector, sensors.lidar_rays});
  }
  return s;
}

/// One human-readable line per feature, for prompts.
inline std::string feature_schema_text(const FeatureSchema& schema) {
  std::string out;
  for (const auto& d : schema.defs()) {
    out += d.name;
    out += d.kind == ValueKind::Vector ? " : vector[" + std::to_string(d.length) + "]" : std::string(" : scalar");
    out += "\n";
  }
  return out;
}

struct StepRecord {
  double x = 0.0, y = 0.0, z = 0.0;
  double base_height = 0.0;
  double roll = 0.0, pitch = 0.0, yaw = 0.0;
  double vx = 0.0, vy = 0.0, vz = 0.0, wz = 0.0;  // heading frame
  Command command;
  JointVector action = JointVector::Zero();  // normalized, clipped to [-1, 1]
  double reward = 0.0;
  std::vector<double> per_term;
  std::array<bool, kNumLegs> foot_contact{false, false};
  bool torso_contact = false;
  bool fell = false;
};

struct Trajectory {
  std::vector<StepRecord> steps;
  std::vector<std::string> term_names;
  bool terminated = false;  // ended before max_steps
  bool nan_detected = false;

  std::size_t size() const { return steps.size(); }
  bool empty() const { return steps.empty(); }
};

struct StepOutcome {
  double reward = 0.0;
  const std::vector<double>* per_term = nullptr;
  ContactReport contact;
  bool terminated = false;  // torso contact, fall or divergence
  bool truncated = false;   // time limit
};

class WalkerEnv {
 public:
  /// `reward` may be null (no reward evaluation). The map, schema and reward
  /// must outlive the environment.
  WalkerEnv(const TerrainMap& map, const EnvConfig& config, const FeatureSchema& schema, const BoundReward* reward)
      : map_(&map), cfg_(&config), reward_(reward), features_(schema) {
    config.sensors.validate();
    obs_.assign(static_cast<std::size_t>(config.observation_size()), 0.0);
    frame_.height_scan.assign(static_cast<std::size_t>(config.sensors.scan_size()), 0.0);
    frame_.lidar.assign(static_cast<std::size_t>(config.sensors.lidar_rays), 0.0);
    stand_height_ = nominal_base_height(config.walker);
    slot_ = [&] {
      Slots s;
      auto get = [&](const char* n) { return schema.slot(n).value_or(-1); };
      s.vx = get("vx"), s.vy = get("vy"), s.vz = get("vz"), s.wz = get("wz");
      s.vx_cmd = get("vx_cmd"), s.vy_cmd = get("vy_cmd"), s.wz_cmd = get("wz_cmd");
      s.base_height = get("base_height"), s.roll = get("roll"), s.pitch = get("pitch");
      s.joint_vel_norm = get("joint_vel_norm"), s.action_rate = get("action_rate"), s.torque_sq = get("torque_sq");
      s.foot_l = get("foot_contact_l"), s.foot_r = get("foot_contact_r"), s.torso = get("torso_contact");
      s.action = get("action"), s.prev_action = get("prev_action");
      s.height_scan = get("height_scan"), s.lidar = get("lidar");
      return s;
    }();
    const TerrainStats& st = config.stats;
    set_if("gap_ratio", st.gap_ratio);
    set_if("obstacle_density", st.obstacle_density);
    set_if("roughness", st.roughness);
    set_if("mean_abs_slope", st.mean_abs_slope);
    set_if("max_drop", st.max_drop);
  }

  void reset(std::uint64_t seed, const Command& command) {
    state_ = reset_walker(cfg_->walker, *map_, seed, cfg_->reset_jitter);
    command_ = command;
    steps_ = 0;
    sense();
  }

  /// Advances one control step with a normalized action (clipped to [-1, 1]
  /// and scaled to the torque limit).
  StepOutcome step(std::span<const double> action) {
    JointVector a;
    for (int j = 0; j < kNumJoints; ++j) {
      const double v = action[static_cast<std::size_t>(j)];
      a[j] = std::isfinite(v) ? std::clamp(v, -1.0, 1.0) : 0.0;
    }
    const JointVector prev = state_.prev_action;
    StepOutcome out;
    out.contact = step_walker(cfg_->walker, state_, a * cfg_->walker.torque_limit, *map_);
    state_.prev_action = a;
    ++steps_;
    last_action_ = a;
    if (!out.contact.nan_detected) sense();
    fill_features(a, prev, out.contact);
    if (reward_) {
      last_reward_ = evaluate(*reward_, features_);
      out.reward = last_reward_.total;
      out.per_term = &last_reward_.per_term;
    }
    out.terminated = out.contact.torso_contact || out.contact.fell || out.contact.nan_detected;
    out.truncated = !out.terminated && steps_ >= cfg_->max_episode_steps;
    return out;
  }

  std::span<const double> observation() const { return obs_; }
  const WalkerState& state() const { return state_; }
  const Command& command() const { return command_; }
  const FeatureEnv& features() const { return features_; }
  const SensorFrame& frame() const { return frame_; }
  int steps() const { return steps_; }

  StepRecord record(const StepOutcome& out) const {
    StepRecord r;
    r.x = state_.base_pos.x();
    r.y = state_.base_pos.y();
    r.z = state_.base_pos.z();
    r.base_height = base_height();
    r.roll = state_.roll();
    r.pitch = state_.pitch();
    r.yaw = state_.yaw();
    const Eigen::Vector3d v = state_.heading_velocity();
    r.vx = v.x();
    r.vy = v.y();
    r.vz = v.z();
    r.wz = state_.yaw_rate();
    r.command = command_;
    r.action = last_action_;
    r.reward = out.reward;
    if (out.per_term) r.per_term = *out.per_term;
    r.foot_contact = out.contact.foot_contact;
    r.torso_contact = out.contact.torso_contact;
    r.fell = out.contact.fell;
    return r;
  }

 private:
  struct Slots {
    int vx, vy, vz, wz, vx_cmd, vy_cmd, wz_cmd, base_height, roll, pitch, joint_vel_norm, action_rate, torque_sq,
        foot_l, foot_r, torso, action, prev_action, height_scan, lidar;
  };

  void set_if(const char* name, double v) {
    if (auto s = features_.schema().slot(name)) features_.set(*s, v);
  }
  void put(int slot, double v) {
    if (slot >= 0) features_.set(slot, v);
  }

  double base_height() const {
    return state_.base_pos.z() - height_at_clamped(*map_, state_.base_pos.x(), state_.base_pos.y());
  }

  void sense() {
    const WalkerState& s = state_;
    const BasePose pose{s.base_pos.x(), s.base_pos.y(), s.base_pos.z(), s.yaw()};
    const bool see = cfg_->mode == ObservationMode::Perceptive;
    if (see) {
      height_scan_into(*map_, pose, cfg_->sensors, frame_.height_scan);
      lidar_scan_into(*map_, pose, cfg_->sensors, frame_.lidar);
    }

    const Eigen::Matrix3d rt = s.rotation().transpose();
    const Eigen::Vector3d lin = rt * s.base_lin_vel;
    const Eigen::Vector3d ang = rt * s.base_ang_vel;
    const Eigen::Vector3d g = s.projected_gravity();
    const ObservationScales& k = cfg_->scales;
    const JointVector q_nom = cfg_->walker.nominal_pose();
    std::size_t i = 0;
    for (int a = 0; a < 3; ++a) obs_[i++] = k.lin_vel * lin[a];
    for (int a = 0; a < 3; ++a) obs_[i++] = k.ang_vel * ang[a];
    for (int a = 0; a < 3; ++a) obs_[i++] = k.gravity * g[a];
    obs_[i++] = k.command * command_.vx;
    obs_[i++] = k.command * command_.vy;
    obs_[i++] = k.command * command_.wz;
    for (int j = 0; j < kNumJoints; ++j) obs_[i++] = k.joint_pos * (s.q[j] - q_nom[j]);
    for (int j = 0; j < kNumJoints; ++j) obs_[i++] = k.joint_vel * s.qd[j];
    for (int j = 0; j < kNumJoints; ++j) obs_[i++] = k.action * s.prev_action[j];
    for (double h : frame_.height_scan)
      obs_[i++] = see ? std::clamp(k.height_scan * (h + stand_height_), -k.height_clip, k.height_clip) : 0.0;
    for (double r : frame_.lidar) obs_[i++] = see ? k.lidar * r : 0.0;
  }

  void fill_features(const JointVector& a, const JointVector& prev, const ContactReport& c) {
    const WalkerState& s = state_;
    const Eigen::Vector3d v = s.heading_velocity();
    put(slot_.vx, v.x());
    put(slot_.vy, v.y());
    put(slot_.vz, v.z());
    put(slot_.wz, s.yaw_rate());
    put(slot_.vx_cmd, command_.vx);
    put(slot_.vy_cmd, command_.vy);
    put(slot_.wz_cmd, command_.wz);
    put(slot_.base_height, base_height());
    put(slot_.roll, s.roll());
    put(slot_.pitch, s.pitch());
    put(slot_.joint_vel_norm, s.qd.norm());
    put(slot_.action_rate, (a - prev).squaredNorm());
    put(slot_.torque_sq, a.squaredNorm());
    put(slot_.foot_l, c.foot_contact[0] ? 1.0 : 0.0);
    put(slot_.foot_r, c.foot_contact[1] ? 1.0 : 0.0);
    put(slot_.torso, c.torso_contact ? 1.0 : 0.0);
    if (slot_.action >= 0) std::copy(a.data(), a.data() + kNumJoints, features_.vec(slot_.action).begin());
    if (slot_.prev_action >= 0)
      std::copy(prev.data(), prev.data() + kNumJoints, features_.vec(slot_.prev_action).begin());
    if (slot_.height_scan >= 0) {
      // Centered on the scan median, matching the terrain statistics.
      const double ref = detail::median_of(frame_.height_scan, scratch_);
      auto dst = features_.vec(slot_.height_scan);
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = frame_.height_scan[i] - ref;
    }
    if (slot_.lidar >= 0) std::copy(frame_.lidar.begin(), frame_.lidar.end(), features_.vec(slot_.lidar).begin());
  }

  const TerrainMap* map_;
  const EnvConfig* cfg_;
  const BoundReward* reward_;
  FeatureEnv features_;
  Slots slot_{};
  WalkerState state_;
  Command command_;
  SensorFrame frame_;
  std::vector<double> obs_;
  std::vector<double> scratch_;
  JointVector last_action_ = JointVector::Zero();
  RewardValue last_reward_;
  double stand_height_ = 0.0;
  int steps_ = 0;
};

/// Maps a scaled observation to a normalized action.
using Policy = std::function<void(std::span<const double> obs, std::span<double> action)>;

inline Policy zero_policy() {
  return [](std::span<const double>, std::span<double> action) { std::fill(action.begin(), action.end(), 0.0); };
}

/// Rollout loop: sense, act, step, score. Stops at max_steps, on torso
/// contact, on a fall, or on divergence (recorded in nan_detected).
inline Trajectory run_episode(const Policy& policy, const RewardProgram& reward, const TerrainMap& map,
                              const Command& command, int max_steps, std::uint64_t seed, const EnvConfig& config) {
  Trajectory traj;
  for (const auto& t : reward.terms) traj.term_names.push_back(t.name);
  if (max_steps <= 0) return traj;
  const FeatureSchema schema = feature_schema(config.mode, config.sensors);
  const BoundReward bound(reward, schema);
  EnvConfig cfg = config;
  cfg.max_episode_steps = max_steps;
  WalkerEnv env(map, cfg, schema, &bound);
  env.reset(seed, command);
  std::vector<double> action(kNumJoints, 0.0);
  traj.steps.reserve(static_cast<std::size_t>(max_steps));
  for (int t = 0; t < max_steps; ++t) {
    policy(env.observation(), action);
    const StepOutcome out = env.step(action);
    traj.steps.push_back(env.record(out));
    if (out.contact.nan_detected) traj.nan_detected = true;
    if (out.terminated) {
      traj.terminated = true;
      break;
    }
  }
  return traj;
}

inline nlohmann::json to_json(const ObservationScales& k) {
  return {{"lin_vel", k.lin_vel},         {"ang_vel", k.ang_vel},     {"gravity", k.gravity},
          {"command", k.command},         {"joint_pos", k.joint_pos}, {"joint_vel", k.joint_vel},
          {"action", k.action},           {"height_scan", k.height_scan}, {"height_clip", k.height_clip},
          {"lidar", k.lidar}};
}

inline ObservationScales observation_scales_from_json(const nlohmann::json& j) {
  ObservationScales k;
  k.lin_vel = j.at("lin_vel").get<double>();
  k.ang_vel = j.at("ang_vel").get<double>();
  k.gravity = j.at("gravity").get<double>();
  k.command = j.at("command").get<double>();
  k.joint_pos = j.at("joint_pos").get<double>();
  k.joint_vel = j.at("joint_vel").get<double>();
  k.action = j.at("action").get<double>();
  k.height_scan = j.at("height_scan").get<double>();
  k.height_clip = j.at("height_clip").get<double>();
  k.lidar = j.at("lidar").get<double>();
  return k;
}

inline nlohmann::json to_json(const CommandRanges& c) {
  return {{"vx", range_to_json(c.vx)},
          {"vy", range_to_json(c.vy)},
          {"wz", range_to_json(c.wz)},
          {"speed_limit", c.speed_limit},
          {"yaw_rate_limit", c.yaw_rate_limit}};
}

inline CommandRanges command_ranges_from_json(const nlohmann::json& j) {
  CommandRanges c;
  auto range = [](const nlohmann::json& r) { return Range{r.at(0).get<double>(), r.at(1).get<double>()}; };
  c.vx = range(j.at("vx"));
  c.vy = range(j.at("vy"));
  c.wz = range(j.at("wz"));
  c.speed_limit = j.at("speed_limit").get<double>();
  c.yaw_rate_limit = j.at("yaw_rate_limit").get<double>();
  c.validate();
  return c;
}

inline nlohmann::json to_json(const Command& c) { return {{"vx", c.vx}, {"vy", c.vy}, {"wz", c.wz}}; }

}  // namespace esds
