#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>

#include "skybeam/data/sample.hpp"
#include "skybeam/error.hpp"
#include "skybeam/sim/trajectory.hpp"
#include "skybeam/units.hpp"

namespace skybeam::sim {

struct GpsModel {
  double noise_std = 0.5;  // m, per horizontal axis
  Eigen::Vector2d bias = Eigen::Vector2d::Zero();
  std::uint64_t seed = 1;

  void validate() const { skybeam::detail::require(noise_std >= 0.0, "GpsModel: noise_std must be >= 0"); }
};

/// Horizontal truth + bias + N(0, noise_std^2) per axis, in local ENU meters.
template <typename Rng>
Eigen::Vector2d observe_gps(const DroneState& state, const GpsModel& model, Rng& rng) {
  model.validate();
  Eigen::Vector2d out = state.position.head<2>() + model.bias;
  if (model.noise_std > 0.0) {
    std::normal_distribution<double> n(0.0, model.noise_std);
    out.x() += n(rng);
    out.y() += n(rng);
  }
  return out;
}

/// Pinhole camera at the base station. Boresight azimuth is measured clockwise from North,
/// elevation upward from the horizon ("skyward" mounting).
struct CameraModel {
  double horizontal_fov = units::deg2rad(110.0);
  double image_aspect = 16.0 / 9.0;  // width / height
  double boresight_azimuth = 0.0;
  double boresight_elevation = units::deg2rad(45.0);
  double max_range = 250.0;     // m, detector range limit
  double reference_size = 1.0;  // apparent size at 1 m

  double vertical_fov() const { return 2.0 * std::atan(std::tan(horizontal_fov / 2.0) / image_aspect); }

  void validate() const {
    skybeam::detail::require(horizontal_fov > 0.0 && horizontal_fov < units::kPi, "CameraModel: FoV must be in (0, pi)");
    skybeam::detail::require(image_aspect > 0.0, "CameraModel: image_aspect must be > 0");
    skybeam::detail::require(max_range > 0.0, "CameraModel: max_range must be > 0");
    skybeam::detail::require(reference_size > 0.0, "CameraModel: reference_size must be > 0");
  }

  Eigen::Vector3d forward() const {
    return {std::cos(boresight_elevation) * std::sin(boresight_azimuth),
            std::cos(boresight_elevation) * std::cos(boresight_azimuth), std::sin(boresight_elevation)};
  }
  Eigen::Vector3d right() const { return {std::cos(boresight_azimuth), -std::sin(boresight_azimuth), 0.0}; }
  /// Image rows grow along this axis.
  Eigen::Vector3d down() const { return -right().cross(forward()); }
};

inline VisualFeature project_camera(const DroneState& state, const CameraModel& camera) {
  camera.validate();
  VisualFeature f;
  const Eigen::Vector3d& p = state.position;
  const double range = p.norm();
  const double z = p.dot(camera.forward());
  if (range <= 0.0 || z <= 0.0) return f;
  const double x = p.dot(camera.right()) / z;
  const double y = p.dot(camera.down()) / z;
  const double tx = std::tan(camera.horizontal_fov / 2.0);
  const double ty = std::tan(camera.vertical_fov() / 2.0);
  f.center_u = 0.5 + 0.5 * x / tx;
  f.center_v = 0.5 + 0.5 * y / ty;
  f.apparent_size = std::min(1.0, camera.reference_size / range);
  f.visible = f.center_u >= 0.0 && f.center_u <= 1.0 && f.center_v >= 0.0 && f.center_v <= 1.0 &&
              range <= camera.max_range;
  return f;
}

inline bool in_view(const Eigen::Vector3d& position, const CameraModel& camera) {
  DroneState s;
  s.position = position;
  return project_camera(s, camera).visible;
}

}  // namespace skybeam::sim
