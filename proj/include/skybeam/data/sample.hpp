#pragma once

#include <array>
#include <vector>

namespace skybeam {

inline constexpr int kNumBeams = 32;  // classes after downsampling the 64-beam sweep

/// Detected drone in the base-station camera, in normalized image coordinates.
struct VisualFeature {
  double center_u = 0.0;
  double center_v = 0.0;
  double apparent_size = 0.0;
  bool visible = false;

  bool operator==(const VisualFeature&) const = default;
};

/// One labeled observation: what the base station senses at a time step plus the beam-training result.
struct SensingSample {
  int flight_id = 0;
  int t = 0;
  double gps_e = 0.0;  // m, local ENU
  double gps_n = 0.0;
  double height = 0.0;
  double distance = 0.0;
  double speed = 0.0;  // m/s
  double pitch = 0.0;  // rad
  double roll = 0.0;
  VisualFeature visual;
  std::array<double, kNumBeams> power32{};
  int label = 0;

  bool operator==(const SensingSample&) const = default;
};

using SampleTable = std::vector<SensingSample>;

}  // namespace skybeam
