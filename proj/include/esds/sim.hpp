#pragma once

// Torque-driven biped on a heightfield. A single rigid torso carries two
// three-joint legs (hip pitch, hip roll, knee) ending in point feet. Joint
// motors act through a reflected joint inertia with a passive spring toward the
// nominal pose; the leg chains themselves are massless and not backdrivable,
// so foot contact loads go straight into the torso. Contacts are penalty
// springs with Coulomb friction. A saturating support torque on roll and pitch
// stands in for the boom that keeps planar bipeds upright on a test rig.

#include <algorithm>
#include <cassert>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>

#include <Eigen/Dense>

#include "esds/common.hpp"
#include "esds/terrain.hpp"

namespace esds {

inline constexpr int kNumLegs = 2;
inline constexpr int kJointsPerLeg = 3;
inline constexpr int kNumJoints = kNumLegs * kJointsPerLeg;

using JointVector = Eigen::Matrix<double, kNumJoints, 1>;

struct WalkerConfig {
  double torso_mass = 15.0;
  Eigen::Vector3d torso_inertia{0.6, 0.8, 0.5};
  double torso_radius = 0.15;
  double hip_half_width = 0.1;
  double hip_drop = 0.05;
  double thigh = 0.3;
  double shank = 0.3;

  // per leg: hip pitch, hip roll, knee
  std::array<double, kJointsPerLeg> nominal{0.3, 0.0, -0.6};
  std::array<double, kJointsPerLeg> joint_lower{-1.2, -0.5, -2.2};
  std::array<double, kJointsPerLeg> joint_upper{1.2, 0.5, 0.0};
  double joint_inertia = 0.2;
  double joint_damping = 3.0;
  double joint_stiffness = 30.0;
  double torque_limit = 60.0;

  double contact_stiffness = 8000.0;
  double contact_damping = 200.0;
  double friction = 0.8;
  double friction_damping = 2000.0;
  double max_contact_force = 4000.0;

  double support_stiffness = 120.0;
  double support_damping = 15.0;
  double support_torque_limit = 60.0;

  double gravity = 9.81;
  double physics_dt = 0.005;  // 200 Hz
  int substeps = 4;           // 50 Hz control
  double reset_jitter = 0.02;
  double spawn_margin = 0.3;

  double control_dt() const { return physics_dt * substeps; }

  JointVector nominal_pose() const {
    JointVector q;
    for (int leg = 0; leg < kNumLegs; ++leg)
      for (int j = 0; j < kJointsPerLeg; ++j) q[leg * kJointsPerLeg + j] = nominal[static_cast<std::size_t>(j)];
    return q;
  }
};

struct WalkerState {
  Eigen::Vector3d base_pos = Eigen::Vector3d::Zero();
  Eigen::Quaterniond base_rot = Eigen::Quaterniond::Identity();
  Eigen::Vector3d base_lin_vel = Eigen::Vector3d::Zero();  // world frame
  Eigen::Vector3d base_ang_vel = Eigen::Vector3d::Zero();  // world frame
  JointVector q = JointVector::Zero();
  JointVector qd = JointVector::Zero();
  JointVector prev_action = JointVector::Zero();  // normalized to [-1, 1]
  std::array<Eigen::Vector3d, kNumLegs> foot_pos{Eigen::Vector3d::Zero(), Eigen::Vector3d::Zero()};
  double support_height = 0.0;  // terrain height under the base at the last gap-free step

  Eigen::Matrix3d rotation() const { return base_rot.toRotationMatrix(); }

  /// ZYX Euler angles.
  double yaw() const {
    const Eigen::Matrix3d r = rotation();
    return std::atan2(r(1, 0), r(0, 0));
  }
  double pitch() const {
    const Eigen::Matrix3d r = rotation();
    return std::asin(std::clamp(-r(2, 0), -1.0, 1.0));
  }
  double roll() const {
    const Eigen::Matrix3d r = rotation();
    return std::atan2(r(2, 1), r(2, 2));
  }
  double yaw_rate() const { return base_ang_vel.z(); }

  /// Linear velocity in the heading frame (x forward, y left, z up).
  Eigen::Vector3d heading_velocity() const {
    const double c = std::cos(yaw());
    const double s = std::sin(yaw());
    return {c * base_lin_vel.x() + s * base_lin_vel.y(), -s * base_lin_vel.x() + c * base_lin_vel.y(),
            base_lin_vel.z()};
  }

  /// Gravity direction expressed in the base frame.
  Eigen::Vector3d projected_gravity() const { return rotation().transpose() * Eigen::Vector3d(0, 0, -1); }

  bool finite() const {
    return base_pos.allFinite() && base_rot.coeffs().allFinite() && base_lin_vel.allFinite() &&
           base_ang_vel.allFinite() && q.allFinite() && qd.allFinite();
  }
};

struct ContactReport {
  std::array<bool, kNumLegs> foot_contact{false, false};
  bool torso_contact = false;
  bool fell = false;          // dropped into a gap or left the terrain envelope
  bool nan_detected = false;
  std::array<Eigen::Vector3d, kNumLegs> foot_forces{Eigen::Vector3d::Zero(), Eigen::Vector3d::Zero()};
  Eigen::Vector3d torso_force = Eigen::Vector3d::Zero();
  double torso_penetration = 0.0;
};

namespace sim_detail {

inline Eigen::Vector3d hip_offset(const WalkerConfig& cfg, int leg) {
  return {0.0, leg == 0 ? cfg.hip_half_width : -cfg.hip_half_width, -cfg.hip_drop};
}

/// Foot position in the base frame and its Jacobian w.r.t. (hip pitch, hip roll, knee).
inline void leg_kinematics(const WalkerConfig& cfg, int leg, double pitch, double roll, double knee,
                           Eigen::Vector3d& foot, Eigen::Matrix3d& jac) {
  const double sp = std::sin(pitch);
  const double cp = std::cos(pitch);
  const double spk = std::sin(pitch + knee);
  const double cpk = std::cos(pitch + knee);
  const Eigen::Vector3d v(-cfg.thigh * sp - cfg.shank * spk, 0.0, -cfg.thigh * cp - cfg.shank * cpk);
  const Eigen::Vector3d dv_dpitch(-cfg.thigh * cp - cfg.shank * cpk, 0.0, cfg.thigh * sp + cfg.shank * spk);
  const Eigen::Vector3d dv_dknee(-cfg.shank * cpk, 0.0, cfg.shank * spk);
  const double sr = std::sin(roll);
  const double cr = std::cos(roll);
  Eigen::Matrix3d rx;
  rx << 1, 0, 0, 0, cr, -sr, 0, sr, cr;
  Eigen::Matrix3d drx;
  drx << 0, 0, 0, 0, -sr, -cr, 0, cr, -sr;
  foot = hip_offset(cfg, leg) + rx * v;
  jac.col(0) = rx * dv_dpitch;
  jac.col(1) = drx * v;
  jac.col(2) = rx * dv_dknee;
}

inline Eigen::Vector3d foot_in_base(const WalkerConfig& cfg, const JointVector& q, int leg) {
  Eigen::Vector3d foot;
  Eigen::Matrix3d jac;
  const int o = leg * kJointsPerLeg;
  leg_kinematics(cfg, leg, q[o], q[o + 1], q[o + 2], foot, jac);
  return foot;
}

inline void update_feet(const WalkerConfig& cfg, WalkerState& s) {
  const Eigen::Matrix3d r = s.rotation();
  for (int leg = 0; leg < kNumLegs; ++leg) s.foot_pos[static_cast<std::size_t>(leg)] = s.base_pos + r * foot_in_base(cfg, s.q, leg);
}

// Damping coefficient softened so an explicit update along `dir` at contact
// arm `arm` cannot overshoot (implicit-damping approximation).
inline double stable_damping(double c, double dt, double mass, const Eigen::Matrix3d& inv_inertia,
                             const Eigen::Vector3d& arm, const Eigen::Vector3d& dir, int contacts) {
  const Eigen::Vector3d rxn = arm.cross(dir);
  const double w = 1.0 / mass + rxn.dot(inv_inertia * rxn);
  return c / (1.0 + dt * c * w * std::max(1, contacts));
}

struct PointContact {
  Eigen::Vector3d force = Eigen::Vector3d::Zero();
  bool active = false;
  double penetration = 0.0;
};

inline PointContact penalty_contact(const WalkerConfig& cfg, const TerrainMap& map, const Eigen::Vector3d& point,
                                    const Eigen::Vector3d& vel, double penetration, const Eigen::Vector3d& arm,
                                    double mass, const Eigen::Matrix3d& inv_inertia, int contacts) {
  PointContact out;
  if (!(penetration > 0.0)) return out;
  const auto n_arr = surface_normal_clamped(map, point.x(), point.y());
  const Eigen::Vector3d n(n_arr[0], n_arr[1], n_arr[2]);
  const double dt = cfg.physics_dt;
  const double vn = vel.dot(n);
  const double cn = stable_damping(cfg.contact_damping, dt, mass, inv_inertia, arm, n, contacts);
  double fn = cfg.contact_stiffness * penetration * n.z() - cn * vn;
  fn = std::clamp(fn, 0.0, cfg.max_contact_force);
  Eigen::Vector3d force = fn * n;
  if (fn > 0.0) {
    const Eigen::Vector3d vt = vel - vn * n;
    const double speed = vt.norm();
    if (speed > 1e-12) {
      const Eigen::Vector3d tdir = vt / speed;
      const double ct = stable_damping(cfg.friction_damping, dt, mass, inv_inertia, arm, tdir, contacts);
      const double ft = std::min(ct * speed, cfg.friction * fn);
      force -= ft * tdir;
    }
  }
  out.force = force;
  out.active = true;
  out.penetration = penetration;
  return out;
}

// Deepest penetration of the terrain into the torso sphere, probed at the
// center and on two rings under the sphere.
inline double torso_penetration(const WalkerConfig& cfg, const TerrainMap& map, const Eigen::Vector3d& center,
                                Eigen::Vector3d& deepest_point) {
  const double r = cfg.torso_radius;
  double best = -std::numeric_limits<double>::infinity();
  auto probe = [&](double dx, double dy) {
    const double d2 = dx * dx + dy * dy;
    const double lower = center.z() - std::sqrt(std::max(0.0, r * r - d2));
    const double pen = height_at_clamped(map, center.x() + dx, center.y() + dy) - lower;
    if (pen > best) {
      best = pen;
      deepest_point = {center.x() + dx, center.y() + dy, lower};
    }
  };
  probe(0.0, 0.0);
  for (double ring : {0.5 * r, 0.9 * r})
    for (int k = 0; k < 8; ++k) {
      const double a = k * M_PI / 4.0;
      probe(ring * std::cos(a), ring * std::sin(a));
    }
  return best;
}

}  // namespace sim_detail

inline Eigen::Vector3d foot_in_base(const WalkerConfig& cfg, const JointVector& q, int leg) {
  return sim_detail::foot_in_base(cfg, q, leg);
}

/// Base height above flat ground with level torso and nominal joints.
inline double nominal_base_height(const WalkerConfig& cfg) {
  return -foot_in_base(cfg, cfg.nominal_pose(), 0).z();
}

/// Standing start inside the spawn zone (uniform position, small seeded
/// jitter); the base is lowered until the lower foot touches the terrain.
inline WalkerState reset_walker(const WalkerConfig& cfg, const TerrainMap& map, std::uint64_t seed,
                                bool jitter = true) {
  Rng rng(mix_seed(seed, 0x7e5e7));
  const Rect& zone = map.params.spawn_zone;
  WalkerState s;
  const double mx = std::min(cfg.spawn_margin, 0.5 * (zone.x1 - zone.x0));
  const double my = std::min(cfg.spawn_margin, 0.5 * (zone.y1 - zone.y0));
  double x = 0.5 * (zone.x0 + zone.x1);
  double y = 0.5 * (zone.y0 + zone.y1);
  double yaw = 0.0;
  s.q = cfg.nominal_pose();
  if (jitter) {
    x = rng.uniform(zone.x0 + mx, zone.x1 - mx);
    y = rng.uniform(zone.y0 + my, zone.y1 - my);
    yaw = rng.uniform(-cfg.reset_jitter, cfg.reset_jitter);
    for (int j = 0; j < kNumJoints; ++j) s.q[j] += rng.uniform(-cfg.reset_jitter, cfg.reset_jitter);
  }
  s.base_rot = Eigen::Quaterniond(Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()));
  s.base_pos = {x, y, 0.0};
  const Eigen::Matrix3d r = s.rotation();
  double z = -std::numeric_limits<double>::infinity();
  for (int leg = 0; leg < kNumLegs; ++leg) {
    const Eigen::Vector3d f = r * foot_in_base(cfg, s.q, leg);
    z = std::max(z, height_at_clamped(map, x + f.x(), y + f.y()) - f.z());
  }
  s.base_pos.z() = z;
  s.support_height = height_at_clamped(map, x, y);
  sim_detail::update_feet(cfg, s);
  return s;
}

/// One control step: `action` holds joint torques (N*m), held over the
/// configured number of physics substeps.
inline ContactReport step_walker(const WalkerConfig& cfg, WalkerState& s, const JointVector& action,
                                 const TerrainMap& map) {
  using sim_detail::PointContact;
  JointVector torque = action;
  for (int j = 0; j < kNumJoints; ++j) {
    if (!std::isfinite(torque[j])) torque[j] = 0.0;
    torque[j] = std::clamp(torque[j], -cfg.torque_limit, cfg.torque_limit);
  }
  assert((torque.array().abs() <= cfg.torque_limit).all());

  const double dt = cfg.physics_dt;
  const JointVector q_nom = cfg.nominal_pose();
  const Eigen::Matrix3d inertia_body = cfg.torso_inertia.asDiagonal();
  ContactReport report;

  for (int sub = 0; sub < cfg.substeps; ++sub) {
    const Eigen::Matrix3d r = s.rotation();
    const Eigen::Matrix3d inertia = r * inertia_body * r.transpose();
    const Eigen::Matrix3d inv_inertia = inertia.inverse();

    // leg kinematics at the current joint state
    std::array<Eigen::Vector3d, kNumLegs> arm;
    std::array<Eigen::Vector3d, kNumLegs> foot_vel;
    int touching = 0;
    for (int leg = 0; leg < kNumLegs; ++leg) {
      const int o = leg * kJointsPerLeg;
      Eigen::Vector3d foot;
      Eigen::Matrix3d jac;
      sim_detail::leg_kinematics(cfg, leg, s.q[o], s.q[o + 1], s.q[o + 2], foot, jac);
      const auto li = static_cast<std::size_t>(leg);
      arm[li] = r * foot;
      foot_vel[li] = s.base_lin_vel + s.base_ang_vel.cross(arm[li]) + r * (jac * s.qd.segment<kJointsPerLeg>(o));
      const Eigen::Vector3d p = s.base_pos + arm[li];
      if (height_at_clamped(map, p.x(), p.y()) > p.z()) ++touching;
    }

    Eigen::Vector3d force(0.0, 0.0, -cfg.torso_mass * cfg.gravity);
    Eigen::Vector3d moment = Eigen::Vector3d::Zero();

    for (int leg = 0; leg < kNumLegs; ++leg) {
      const auto li = static_cast<std::size_t>(leg);
      const Eigen::Vector3d p = s.base_pos + arm[li];
      const double pen = height_at_clamped(map, p.x(), p.y()) - p.z();
      const PointContact c = sim_detail::penalty_contact(cfg, map, p, foot_vel[li], pen, arm[li], cfg.torso_mass,
                                                         inv_inertia, touching);
      force += c.force;
      moment += arm[li].cross(c.force);
      report.foot_contact[li] = c.active;
      report.foot_forces[li] = c.force;
    }

    Eigen::Vector3d deepest;
    const double torso_pen = sim_detail::torso_penetration(cfg, map, s.base_pos, deepest);
    report.torso_penetration = std::max(report.torso_penetration, torso_pen);
    if (torso_pen > 0.0) {
      const Eigen::Vector3d torso_arm = deepest - s.base_pos;
      const Eigen::Vector3d v = s.base_lin_vel + s.base_ang_vel.cross(torso_arm);
      const PointContact c = sim_detail::penalty_contact(cfg, map, deepest, v, torso_pen, torso_arm, cfg.torso_mass,
                                                         inv_inertia, touching + 1);
      force += c.force;
      moment += torso_arm.cross(c.force);
      report.torso_contact = true;
      report.torso_force = c.force;
    }

    // roll/pitch support
    const Eigen::Vector3d up_body = r.col(2);
    Eigen::Vector3d support = cfg.support_stiffness * up_body.cross(Eigen::Vector3d::UnitZ());
    support -= cfg.support_damping * Eigen::Vector3d(s.base_ang_vel.x(), s.base_ang_vel.y(), 0.0);
    const double support_norm = support.norm();
    if (support_norm > cfg.support_torque_limit) support *= cfg.support_torque_limit / support_norm;
    moment += support;

    // semi-implicit Euler: velocities first, positions with the new velocities
    s.base_lin_vel += dt * force / cfg.torso_mass;
    const Eigen::Vector3d gyro = s.base_ang_vel.cross(inertia * s.base_ang_vel);
    s.base_ang_vel += dt * (inv_inertia * (moment - gyro));
    s.base_pos += dt * s.base_lin_vel;
    const double angle = s.base_ang_vel.norm() * dt;
    if (angle > 0.0) {
      const Eigen::Quaterniond dq(Eigen::AngleAxisd(angle, s.base_ang_vel.normalized()));
      s.base_rot = (dq * s.base_rot).normalized();
    }

    for (int j = 0; j < kNumJoints; ++j) {
      const int kind = j % kJointsPerLeg;
      const double passive = cfg.joint_stiffness * (q_nom[j] - s.q[j]) - cfg.joint_damping * s.qd[j];
      s.qd[j] += dt * (torque[j] + passive) / cfg.joint_inertia;
      s.q[j] += dt * s.qd[j];
      const double lo = cfg.joint_lower[static_cast<std::size_t>(kind)];
      const double hi = cfg.joint_upper[static_cast<std::size_t>(kind)];
      if (s.q[j] < lo) {
        s.q[j] = lo;
        s.qd[j] = std::max(0.0, s.qd[j]);
      } else if (s.q[j] > hi) {
        s.q[j] = hi;
        s.qd[j] = std::min(0.0, s.qd[j]);
      }
    }

    if (!s.finite()) {
      report.nan_detected = true;
      report.torso_contact = true;
      return report;
    }
  }

  sim_detail::update_feet(cfg, s);
  const double ground = height_at_clamped(map, s.base_pos.x(), s.base_pos.y());
  const bool over_gap = is_gap_at(map, s.base_pos.x(), s.base_pos.y());
  if (!over_gap) s.support_height = ground;
  const double stand = nominal_base_height(cfg);
  constexpr double kFallDrop = 0.5;
  constexpr double kEnvelope = 2.0;
  if ((over_gap && s.base_pos.z() - s.support_height < stand - kFallDrop) ||
      std::abs(s.base_pos.z() - ground) > kEnvelope) {
    report.fell = true;
    report.torso_contact = true;  // a fall counts as a torso strike
  }
  return report;
}

/// Total mechanical energy of the torso (kinetic + gravitational), used by
/// integrator checks.
inline double torso_energy(const WalkerConfig& cfg, const WalkerState& s) {
  const Eigen::Matrix3d r = s.rotation();
  const Eigen::Matrix3d inertia = r * cfg.torso_inertia.asDiagonal() * r.transpose();
  return 0.5 * cfg.torso_mass * s.base_lin_vel.squaredNorm() + 0.5 * s.base_ang_vel.dot(inertia * s.base_ang_vel) +
         cfg.torso_mass * cfg.gravity * s.base_pos.z();
}

}  // namespace esds
