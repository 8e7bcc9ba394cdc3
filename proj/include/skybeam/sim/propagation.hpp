#pragma once

// Geometry-to-channel mapping for the base-station/drone link: LOS path with
// free-space loss, drone antenna orientation gain and an optional ground bounce.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <vector>

#include "skybeam/phy/channel.hpp"
#include "skybeam/sim/trajectory.hpp"
#include "skybeam/units.hpp"

namespace skybeam::sim {

/// Quasi-omni drone antenna: cos^n lobe around the body-down axis, with a floor for the back hemisphere.
struct DroneAntenna {
  bool orientation_effect = true;
  double lobe_exponent = 1.0;
  double floor_gain = 0.02;

  /// Power gain toward `direction` (unit vector, world frame) for the given attitude.
  double gain(const DroneState& s, const Eigen::Vector3d& direction) const {
    if (!orientation_effect) return 1.0;
    const double c = body_down(s).dot(direction);
    return std::max(floor_gain, std::pow(std::max(c, 0.0), lobe_exponent));
  }

  /// Body-down axis in ENU. Body frame is forward-left-up; nose-up pitch is a negative rotation about "left".
  static Eigen::Vector3d body_down(const DroneState& s) {
    const Eigen::Matrix3d r = (Eigen::AngleAxisd(s.yaw, Eigen::Vector3d::UnitZ()) *
                               Eigen::AngleAxisd(-s.pitch, Eigen::Vector3d::UnitY()) *
                               Eigen::AngleAxisd(s.roll, Eigen::Vector3d::UnitX()))
                                  .toRotationMatrix();
    return r * Eigen::Vector3d(0.0, 0.0, -1.0);
  }
};

struct GroundReflection {
  bool enabled = false;
  double bs_height = 4.0;    // base-station array height above ground (m)
  double coefficient = 0.9;  // |reflection| at grazing incidence
};

struct ChannelModel {
  phy::OfdmConfig ofdm;
  int num_antennas = 16;
  int num_beams = 64;
  double element_spacing = 0.5;
  double carrier_hz = 60e9;
  DroneAntenna antenna;
  GroundReflection ground;

  double wavelength() const { return units::kSpeedOfLight / carrier_hz; }
};

namespace geometry {

inline phy::PathComponent path_from(const Eigen::Vector3d& arrival, double length, double excess_delay,
                                    double amplitude, double wavelength) {
  phy::PathComponent p;
  p.azimuth = std::atan2(arrival.y(), arrival.x());
  p.elevation = std::asin(std::clamp(arrival.z() / arrival.norm(), -1.0, 1.0));
  p.delay = excess_delay;
  p.gain = std::polar(amplitude, -2.0 * units::kPi * std::fmod(length / wavelength, 1.0));
  return p;
}

}  // namespace geometry

/// Paths seen by the base station for a drone at `s`. Amplitudes use a 1 m reference distance,
/// so received power scales as gain / distance^2.
inline std::vector<phy::PathComponent> drone_paths(const DroneState& s, const ChannelModel& model) {
  std::vector<phy::PathComponent> paths;
  const Eigen::Vector3d& p = s.position;
  const double r = p.norm();
  if (r <= 0.0) return paths;
  const double lambda = model.wavelength();

  const double g_los = model.antenna.gain(s, -p / r);
  paths.push_back(geometry::path_from(p, r, 0.0, std::sqrt(g_los) / r, lambda));

  if (model.ground.enabled) {
    const double hb = model.ground.bs_height;
    // Mirror the drone below the ground plane, which sits hb under the array.
    const Eigen::Vector3d image(p.x(), p.y(), -p.z() - 2.0 * hb);
    const double r2 = image.norm();
    const double rho = p.head<2>().norm();
    const double grazing = std::atan2(p.z() + 2.0 * hb, rho);
    const double gamma = model.ground.coefficient * std::pow(std::cos(grazing), 2);
    // The bounce leaves the drone toward the mirror image of the array.
    const Eigen::Vector3d toward = (Eigen::Vector3d(0.0, 0.0, -2.0 * hb) - p).normalized();
    const double g_ref = model.antenna.gain(s, toward);
    auto bounce = geometry::path_from(image, r2, (r2 - r) / units::kSpeedOfLight, gamma * std::sqrt(g_ref) / r2, lambda);
    bounce.gain = -bounce.gain;  // phase inversion at the ground
    paths.push_back(bounce);
  }
  return paths;
}

struct BeamTrainingResult {
  phy::PowerVector power64;
  phy::PowerVector power32;
  int label = 0;
};

/// Full sweep over the oversampled codebook, then 64 -> 32 downsampling and labeling.
inline BeamTrainingResult train_beam(const DroneState& s, const ChannelModel& model, const phy::BeamCodebook& codebook) {
  BeamTrainingResult out;
  const auto ch = phy::build_channel(drone_paths(s, model), model.ofdm, model.num_antennas, model.element_spacing);
  out.power64 = phy::beam_sweep(ch, codebook, model.ofdm);
  out.power32 = phy::downsample_power(out.power64);
  out.label = phy::optimal_beam(out.power32);
  return out;
}

}  // namespace skybeam::sim
