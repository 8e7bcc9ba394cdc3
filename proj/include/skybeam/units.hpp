#pragma once

#include <numbers>

namespace skybeam::units {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kSpeedOfLight = 299'792'458.0;  // m/s
inline constexpr double kMetersPerSecondPerMph = 0.44704;

constexpr double deg2rad(double deg) { return deg * kPi / 180.0; }
constexpr double rad2deg(double rad) { return rad * 180.0 / kPi; }
constexpr double mph2mps(double mph) { return mph * kMetersPerSecondPerMph; }
constexpr double mps2mph(double mps) { return mps / kMetersPerSecondPerMph; }

}  // namespace skybeam::units
