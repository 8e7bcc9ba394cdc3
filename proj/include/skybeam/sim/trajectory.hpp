#pragma once

// Waypoint-following drone kinematics with trapezoidal speed ramps and a
// speed/acceleration driven tilt model.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "skybeam/error.hpp"
#include "skybeam/units.hpp"

namespace skybeam::sim {

struct DroneState {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();  // ENU, base station at the origin
  Eigen::Vector3d velocity = Eigen::Vector3d::Zero();
  double yaw = 0.0;    // heading, counter-clockwise from East
  double pitch = 0.0;  // positive nose-up
  double roll = 0.0;
  long timestamp_index = 0;

  double height() const { return position.z(); }
  double distance() const { return position.norm(); }
  double speed() const { return velocity.norm(); }
  double horizontal_speed() const { return velocity.head<2>().norm(); }
};

/// Flight footprint in ENU meters. Defaults to a 205 m x 152 m field in front of the base station.
struct Arena {
  double east_min = -102.5;
  double east_max = 102.5;
  double north_min = 0.0;
  double north_max = 152.0;
  double max_height = 150.0;

  bool contains(const Eigen::Vector3d& p) const {
    return p.x() >= east_min && p.x() <= east_max && p.y() >= north_min && p.y() <= north_max && p.z() >= 0.0 &&
           p.z() <= max_height;
  }
};

struct KinematicLimits {
  double max_speed = units::mph2mps(25.0);
  // Along-track acceleration used for speed ramps; <= 0 switches speed instantly.
  double max_accel = 2.0;
};

/// Body tilt: nose-down pitch grows with horizontal speed (saturating) and forward acceleration.
struct TiltModel {
  bool enabled = true;
  double max_pitch = units::deg2rad(30.0);
  double saturation_speed = 8.0;               // m/s
  double accel_gain = units::deg2rad(2.0);     // rad per m/s^2
  double attitude_jitter = units::deg2rad(0.5);  // std of pitch/roll noise

  double pitch_for(double horizontal_speed, double forward_accel) const {
    if (!enabled) return 0.0;
    const double nose_down = max_pitch * std::tanh(horizontal_speed / saturation_speed) + accel_gain * forward_accel;
    return -std::clamp(nose_down, -units::kPi / 3, units::kPi / 3);
  }
};

struct Waypoint {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  double speed = 0.0;       // cruise speed on the leg that ends here (m/s)
  double hover_time = 0.0;  // seconds spent hovering after arrival
};

/// The first waypoint is the take-off point; its speed is ignored.
struct FlightPlan {
  std::vector<Waypoint> waypoints;
};

namespace motion {

struct Leg {
  double t0 = 0.0;
  double duration = 0.0;
  Eigen::Vector3d start = Eigen::Vector3d::Zero();
  Eigen::Vector3d dir = Eigen::Vector3d::Zero();
  double length = 0.0;
  double cruise = 0.0;  // peak speed actually reached
  double accel = 0.0;   // <= 0: constant speed
  bool hover = false;
};

struct Kinematics {
  Eigen::Vector3d position;
  Eigen::Vector3d velocity;
  double forward_accel = 0.0;
};

inline Leg make_move_leg(double t0, const Eigen::Vector3d& from, const Eigen::Vector3d& to, double speed,
                         double accel) {
  Leg leg;
  leg.t0 = t0;
  leg.start = from;
  leg.length = (to - from).norm();
  leg.dir = leg.length > 0.0 ? Eigen::Vector3d((to - from) / leg.length) : Eigen::Vector3d::Zero();
  leg.accel = accel;
  if (leg.length == 0.0) return leg;
  if (accel <= 0.0) {
    leg.cruise = speed;
    leg.duration = leg.length / speed;
  } else if (speed * speed / accel >= leg.length) {
    // Triangular profile: never reaches cruise speed.
    leg.cruise = std::sqrt(accel * leg.length);
    leg.duration = 2.0 * leg.cruise / accel;
  } else {
    leg.cruise = speed;
    leg.duration = leg.length / speed + speed / accel;
  }
  return leg;
}

inline Kinematics evaluate_leg(const Leg& leg, double t) {
  const double tau = std::clamp(t - leg.t0, 0.0, leg.duration);
  if (leg.hover || leg.length == 0.0) return {leg.start, Eigen::Vector3d::Zero(), 0.0};
  if (leg.accel <= 0.0) return {leg.start + leg.dir * (leg.cruise * tau), leg.dir * leg.cruise, 0.0};

  const double t_ramp = leg.cruise / leg.accel;
  double s = 0.0, v = 0.0, a = 0.0;
  if (tau < t_ramp) {
    s = 0.5 * leg.accel * tau * tau;
    v = leg.accel * tau;
    a = leg.accel;
  } else if (tau <= leg.duration - t_ramp) {
    s = 0.5 * leg.cruise * t_ramp + leg.cruise * (tau - t_ramp);
    v = leg.cruise;
  } else {
    const double rem = leg.duration - tau;
    s = leg.length - 0.5 * leg.accel * rem * rem;
    v = leg.accel * rem;
    a = -leg.accel;
  }
  return {leg.start + leg.dir * s, leg.dir * v, a};
}

}  // namespace motion

inline void validate_plan(const FlightPlan& plan, const Arena& arena, const KinematicLimits& limits) {
  if (plan.waypoints.empty()) throw InvalidInput("flight plan has no waypoints");
  for (std::size_t i = 0; i < plan.waypoints.size(); ++i) {
    const auto& wp = plan.waypoints[i];
    if (!arena.contains(wp.position)) throw InvalidInput("waypoint " + std::to_string(i) + " is outside the arena");
    if (!(wp.hover_time >= 0.0)) throw InvalidInput("waypoint " + std::to_string(i) + " has negative hover time");
    if (i == 0) continue;
    if (!(wp.speed >= 0.0) || wp.speed > limits.max_speed + 1e-12)
      throw InvalidInput("waypoint " + std::to_string(i) + " speed exceeds the configured maximum");
    if (wp.speed == 0.0 && (wp.position - plan.waypoints[i - 1].position).norm() > 0.0)
      throw InvalidInput("waypoint " + std::to_string(i) + " requires motion at zero speed");
  }
}

/// Samples the flight at multiples of step_period. `max_steps` (if > 0) truncates the output.
/// The seed drives only the attitude jitter.
inline std::vector<DroneState> simulate_trajectory(const FlightPlan& plan, double step_period, std::uint64_t rng_seed,
                                                   const Arena& arena = {}, const KinematicLimits& limits = {},
                                                   const TiltModel& tilt = {}, long max_steps = 0) {
  if (!(step_period > 0.0)) throw InvalidInput("step_period must be > 0");
  validate_plan(plan, arena, limits);

  std::vector<motion::Leg> legs;
  double t = 0.0;
  const auto add_hover = [&](const Eigen::Vector3d& at, double duration) {
    if (duration <= 0.0) return;
    motion::Leg h;
    h.t0 = t;
    h.duration = duration;
    h.start = at;
    h.hover = true;
    legs.push_back(h);
    t += duration;
  };
  add_hover(plan.waypoints.front().position, plan.waypoints.front().hover_time);
  for (std::size_t i = 1; i < plan.waypoints.size(); ++i) {
    const auto& from = plan.waypoints[i - 1].position;
    const auto& wp = plan.waypoints[i];
    auto leg = motion::make_move_leg(t, from, wp.position, wp.speed, limits.max_accel);
    if (leg.duration > 0.0) {
      legs.push_back(leg);
      t += leg.duration;
    }
    add_hover(wp.position, wp.hover_time);
  }
  const double total = t;

  long n = static_cast<long>(std::floor(total / step_period + 1e-9)) + 1;
  if (max_steps > 0) n = std::min(n, max_steps);

  std::mt19937_64 rng(rng_seed);
  std::normal_distribution<double> jitter(0.0, 1.0);

  std::vector<DroneState> out;
  out.reserve(n);
  double yaw = 0.0;
  for (const auto& leg : legs) {
    if (!leg.hover && leg.length > 0.0) {
      yaw = std::atan2(leg.dir.y(), leg.dir.x());
      break;
    }
  }
  std::size_t li = 0;
  for (long i = 0; i < n; ++i) {
    const double ti = i * step_period;
    while (li + 1 < legs.size() && ti > legs[li].t0 + legs[li].duration) ++li;
    motion::Kinematics k{plan.waypoints.front().position, Eigen::Vector3d::Zero(), 0.0};
    if (!legs.empty()) k = motion::evaluate_leg(legs[li], ti);

    DroneState s;
    s.position = k.position;
    s.velocity = k.velocity;
    s.timestamp_index = i;
    const double vh = k.velocity.head<2>().norm();
    if (vh > 1e-9) yaw = std::atan2(k.velocity.y(), k.velocity.x());
    s.yaw = yaw;
    const double jp = jitter(rng) * tilt.attitude_jitter;
    const double jr = jitter(rng) * tilt.attitude_jitter;
    s.pitch = tilt.pitch_for(vh, k.forward_accel) + (tilt.enabled ? jp : 0.0);
    s.roll = tilt.enabled ? jr : 0.0;
    out.push_back(s);
  }
  return out;
}

}  // namespace skybeam::sim
