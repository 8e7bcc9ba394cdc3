#pragma once

// End-to-end synthetic flight campaign: random (or explicit) flight plans,
// sensor observations, beam training and FoV filtering.

#include <Eigen/Dense>

#include <cstdint>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "skybeam/config_json.hpp"
#include "skybeam/data/sample.hpp"
#include "skybeam/error.hpp"
#include "skybeam/phy/channel.hpp"
#include "skybeam/rng.hpp"
#include "skybeam/sim/propagation.hpp"
#include "skybeam/sim/sensors.hpp"
#include "skybeam/sim/trajectory.hpp"
#include "skybeam/units.hpp"

namespace skybeam::sim {

/// Parameters of the random waypoint generator.
struct FlightGenerator {
  double min_height = 10.0;
  double max_height = 120.0;
  double min_range = 20.0;
  double min_speed = 1.0;
  double hover_probability = 0.2;
  double hover_min = 1.0;  // s
  double hover_max = 6.0;
};

struct ScenarioConfig {
  std::uint64_t seed = 7;
  int num_flights = 35;
  int steps_per_flight = 343;
  double step_period = 0.2;  // s
  Arena arena;
  KinematicLimits limits;
  TiltModel tilt;
  CameraModel camera;
  double detection_noise = 0.0;  // std of the detected center, normalized image units
  GpsModel gps;
  ChannelModel channel;
  FlightGenerator generator;
  std::vector<FlightPlan> flights;  // explicit plans override the generator
  bool keep_invisible = false;

  void validate() const;
  static ScenarioConfig from_json(const cfg::json& j, const std::string& path = "scenario");
  /// Every field, in the same units and keys from_json reads.
  cfg::json to_json() const;
};

inline void ScenarioConfig::validate() const {
  if (flights.empty()) cfg::check(num_flights >= 1, "scenario.num_flights", "must be >= 1");
  for (std::size_t i = 0; i < flights.size(); ++i)
    cfg::check(!flights[i].waypoints.empty(), "scenario.flights[" + std::to_string(i) + "]", "empty flight plan");
  cfg::check(steps_per_flight >= 1, "scenario.steps_per_flight", "must be >= 1");
  cfg::check(step_period > 0.0, "scenario.step_period", "must be > 0");
  cfg::check(arena.east_max > arena.east_min && arena.north_max > arena.north_min && arena.max_height > 0.0,
             "scenario.arena", "empty arena");
  cfg::check(limits.max_speed > 0.0, "scenario.limits.max_speed", "must be > 0");
  cfg::check(camera.horizontal_fov > 0.0 && camera.horizontal_fov < units::kPi, "scenario.camera.horizontal_fov_deg",
             "must be in (0, 180)");
  cfg::check(camera.max_range > 0.0, "scenario.camera.max_range", "must be > 0");
  cfg::check(detection_noise >= 0.0, "scenario.camera.detection_noise", "must be >= 0");
  cfg::check(gps.noise_std >= 0.0, "scenario.gps.noise_std", "must be >= 0");
  cfg::check(channel.num_beams == 64, "scenario.channel.num_beams", "the labeling pipeline expects 64 beams");
  cfg::check(channel.num_antennas >= 1 && channel.num_antennas <= channel.num_beams, "scenario.channel.num_antennas",
             "must be in [1, num_beams]");
  cfg::check(generator.min_height < generator.max_height, "scenario.flight_generator", "min_height >= max_height");
  cfg::check(generator.min_speed > 0.0 && generator.min_speed <= limits.max_speed,
             "scenario.flight_generator.min_speed", "must be in (0, max_speed]");
  cfg::check(generator.hover_probability >= 0.0 && generator.hover_probability <= 1.0,
             "scenario.flight_generator.hover_probability", "must be in [0, 1]");
  try {
    channel.ofdm.validate();
  } catch (const InvalidInput& e) {
    throw ConfigError("scenario.channel", e.what());
  }
}

inline ScenarioConfig ScenarioConfig::from_json(const cfg::json& j, const std::string& path) {
  using namespace cfg;
  using units::deg2rad;
  if (!j.is_object()) throw ConfigError(path, "expected an object");
  allow_keys(j,
             {"seed", "num_flights", "steps_per_flight", "step_period", "keep_invisible", "arena", "limits", "tilt",
              "camera", "gps", "channel", "flight_generator", "flights"},
             path);
  ScenarioConfig c;
  c.seed = cfg::seed(j, "seed", c.seed, path);
  c.num_flights = static_cast<int>(integer(j, "num_flights", c.num_flights, path));
  c.steps_per_flight = static_cast<int>(integer(j, "steps_per_flight", c.steps_per_flight, path));
  c.step_period = number(j, "step_period", c.step_period, path);
  c.keep_invisible = boolean(j, "keep_invisible", c.keep_invisible, path);

  const std::string pa = join(path, "arena");
  const json& a = object_at(j, "arena", path);
  c.arena.east_min = number(a, "east_min", c.arena.east_min, pa);
  c.arena.east_max = number(a, "east_max", c.arena.east_max, pa);
  c.arena.north_min = number(a, "north_min", c.arena.north_min, pa);
  c.arena.north_max = number(a, "north_max", c.arena.north_max, pa);
  c.arena.max_height = number(a, "max_height", c.arena.max_height, pa);

  const std::string pl = join(path, "limits");
  const json& l = object_at(j, "limits", path);
  c.limits.max_speed = number(l, "max_speed", c.limits.max_speed, pl);
  c.limits.max_accel = number(l, "max_accel", c.limits.max_accel, pl);

  const std::string pt = join(path, "tilt");
  const json& t = object_at(j, "tilt", path);
  c.tilt.enabled = boolean(t, "enabled", c.tilt.enabled, pt);
  c.tilt.max_pitch = deg2rad(number(t, "max_pitch_deg", units::rad2deg(c.tilt.max_pitch), pt));
  c.tilt.saturation_speed = number(t, "saturation_speed", c.tilt.saturation_speed, pt);
  c.tilt.accel_gain = deg2rad(number(t, "accel_gain_deg", units::rad2deg(c.tilt.accel_gain), pt));
  c.tilt.attitude_jitter = deg2rad(number(t, "attitude_jitter_deg", units::rad2deg(c.tilt.attitude_jitter), pt));

  const std::string pc = join(path, "camera");
  const json& cam = object_at(j, "camera", path);
  c.camera.horizontal_fov = deg2rad(number(cam, "horizontal_fov_deg", units::rad2deg(c.camera.horizontal_fov), pc));
  c.camera.image_aspect = number(cam, "image_aspect", c.camera.image_aspect, pc);
  c.camera.boresight_azimuth =
      deg2rad(number(cam, "boresight_azimuth_deg", units::rad2deg(c.camera.boresight_azimuth), pc));
  c.camera.boresight_elevation =
      deg2rad(number(cam, "boresight_elevation_deg", units::rad2deg(c.camera.boresight_elevation), pc));
  c.camera.max_range = number(cam, "max_range", c.camera.max_range, pc);
  c.camera.reference_size = number(cam, "reference_size", c.camera.reference_size, pc);
  c.detection_noise = number(cam, "detection_noise", c.detection_noise, pc);

  const std::string pg = join(path, "gps");
  const json& g = object_at(j, "gps", path);
  c.gps.noise_std = number(g, "noise_std", c.gps.noise_std, pg);
  c.gps.seed = cfg::seed(g, "seed", c.gps.seed, pg);
  const auto bias = numbers(g, "bias", {0.0, 0.0}, pg);
  check(bias.size() == 2, join(pg, "bias"), "expected [east, north]");
  c.gps.bias = {bias[0], bias[1]};

  const std::string pch = join(path, "channel");
  const json& ch = object_at(j, "channel", path);
  c.channel.num_antennas = static_cast<int>(integer(ch, "num_antennas", c.channel.num_antennas, pch));
  c.channel.num_beams = static_cast<int>(integer(ch, "num_beams", c.channel.num_beams, pch));
  c.channel.element_spacing = number(ch, "element_spacing", c.channel.element_spacing, pch);
  c.channel.carrier_hz = number(ch, "carrier_ghz", c.channel.carrier_hz / 1e9, pch) * 1e9;
  c.channel.ofdm.num_subcarriers = static_cast<int>(integer(ch, "num_subcarriers", c.channel.ofdm.num_subcarriers, pch));
  c.channel.ofdm.cyclic_prefix_len =
      static_cast<int>(integer(ch, "cyclic_prefix_len", c.channel.ofdm.cyclic_prefix_len, pch));
  c.channel.ofdm.sample_time = number(ch, "sample_time", c.channel.ofdm.sample_time, pch);
  c.channel.ofdm.snr_scale = number(ch, "snr_scale", c.channel.ofdm.snr_scale, pch);
  c.channel.ofdm.noise_variance = number(ch, "noise_variance", c.channel.ofdm.noise_variance, pch);
  c.channel.ofdm.symbol_power = number(ch, "symbol_power", c.channel.ofdm.symbol_power, pch);
  const std::string pan = join(pch, "antenna");
  const json& an = object_at(ch, "antenna", pch);
  c.channel.antenna.orientation_effect = boolean(an, "orientation_effect", c.channel.antenna.orientation_effect, pan);
  c.channel.antenna.lobe_exponent = number(an, "lobe_exponent", c.channel.antenna.lobe_exponent, pan);
  c.channel.antenna.floor_gain = number(an, "floor_gain", c.channel.antenna.floor_gain, pan);
  const std::string pgr = join(pch, "ground_reflection");
  const json& gr = object_at(ch, "ground_reflection", pch);
  c.channel.ground.enabled = boolean(gr, "enabled", c.channel.ground.enabled, pgr);
  c.channel.ground.bs_height = number(gr, "bs_height", c.channel.ground.bs_height, pgr);
  c.channel.ground.coefficient = number(gr, "coefficient", c.channel.ground.coefficient, pgr);

  const std::string pfg = join(path, "flight_generator");
  const json& fg = object_at(j, "flight_generator", path);
  c.generator.min_height = number(fg, "min_height", c.generator.min_height, pfg);
  c.generator.max_height = number(fg, "max_height", c.generator.max_height, pfg);
  c.generator.min_range = number(fg, "min_range", c.generator.min_range, pfg);
  c.generator.min_speed = number(fg, "min_speed", c.generator.min_speed, pfg);
  c.generator.hover_probability = number(fg, "hover_probability", c.generator.hover_probability, pfg);
  c.generator.hover_min = number(fg, "hover_min", c.generator.hover_min, pfg);
  c.generator.hover_max = number(fg, "hover_max", c.generator.hover_max, pfg);

  if (j.contains("flights")) {
    const json& fl = j.at("flights");
    check(fl.is_array(), join(path, "flights"), "expected an array of flight plans");
    for (std::size_t i = 0; i < fl.size(); ++i) {
      const std::string pf = join(path, "flights[" + std::to_string(i) + "]");
      check(fl[i].is_object() && fl[i].contains("waypoints") && fl[i]["waypoints"].is_array(), pf,
            "expected {\"waypoints\": [...]}");
      FlightPlan plan;
      for (std::size_t w = 0; w < fl[i]["waypoints"].size(); ++w) {
        const json& wj = fl[i]["waypoints"][w];
        const std::string pw = pf + ".waypoints[" + std::to_string(w) + "]";
        check(wj.is_object(), pw, "expected an object");
        const auto pos = numbers(wj, "position", {}, pw);
        check(pos.size() == 3, join(pw, "position"), "expected [east, north, up]");
        Waypoint wp;
        wp.position = {pos[0], pos[1], pos[2]};
        wp.speed = number(wj, "speed", 0.0, pw);
        wp.hover_time = number(wj, "hover", 0.0, pw);
        plan.waypoints.push_back(wp);
      }
      c.flights.push_back(std::move(plan));
    }
  }
  c.validate();
  return c;
}

inline cfg::json ScenarioConfig::to_json() const {
  using units::rad2deg;
  cfg::json j;
  j["seed"] = seed;
  j["num_flights"] = num_flights;
  j["steps_per_flight"] = steps_per_flight;
  j["step_period"] = step_period;
  j["keep_invisible"] = keep_invisible;
  j["arena"] = {{"east_min", arena.east_min},
                {"east_max", arena.east_max},
                {"north_min", arena.north_min},
                {"north_max", arena.north_max},
                {"max_height", arena.max_height}};
  j["limits"] = {{"max_speed", limits.max_speed}, {"max_accel", limits.max_accel}};
  j["tilt"] = {{"enabled", tilt.enabled},
               {"max_pitch_deg", rad2deg(tilt.max_pitch)},
               {"saturation_speed", tilt.saturation_speed},
               {"accel_gain_deg", rad2deg(tilt.accel_gain)},
               {"attitude_jitter_deg", rad2deg(tilt.attitude_jitter)}};
  j["camera"] = {{"horizontal_fov_deg", rad2deg(camera.horizontal_fov)},
                 {"image_aspect", camera.image_aspect},
                 {"boresight_azimuth_deg", rad2deg(camera.boresight_azimuth)},
                 {"boresight_elevation_deg", rad2deg(camera.boresight_elevation)},
                 {"max_range", camera.max_range},
                 {"reference_size", camera.reference_size},
                 {"detection_noise", detection_noise}};
  j["gps"] = {{"noise_std", gps.noise_std}, {"bias", {gps.bias.x(), gps.bias.y()}}, {"seed", gps.seed}};
  j["channel"] = {{"num_antennas", channel.num_antennas},
                  {"num_beams", channel.num_beams},
                  {"element_spacing", channel.element_spacing},
                  {"carrier_ghz", channel.carrier_hz / 1e9},
                  {"num_subcarriers", channel.ofdm.num_subcarriers},
                  {"cyclic_prefix_len", channel.ofdm.cyclic_prefix_len},
                  {"sample_time", channel.ofdm.sample_time},
                  {"snr_scale", channel.ofdm.snr_scale},
                  {"noise_variance", channel.ofdm.noise_variance},
                  {"symbol_power", channel.ofdm.symbol_power},
                  {"antenna",
                   {{"orientation_effect", channel.antenna.orientation_effect},
                    {"lobe_exponent", channel.antenna.lobe_exponent},
                    {"floor_gain", channel.antenna.floor_gain}}},
                  {"ground_reflection",
                   {{"enabled", channel.ground.enabled},
                    {"bs_height", channel.ground.bs_height},
                    {"coefficient", channel.ground.coefficient}}}};
  j["flight_generator"] = {{"min_height", generator.min_height},
                           {"max_height", generator.max_height},
                           {"min_range", generator.min_range},
                           {"min_speed", generator.min_speed},
                           {"hover_probability", generator.hover_probability},
                           {"hover_min", generator.hover_min},
                           {"hover_max", generator.hover_max}};
  if (!flights.empty()) {
    cfg::json fl = cfg::json::array();
    for (const auto& plan : flights) {
      cfg::json wps = cfg::json::array();
      for (const auto& w : plan.waypoints)
        wps.push_back({{"position", {w.position.x(), w.position.y(), w.position.z()}},
                       {"speed", w.speed},
                       {"hover", w.hover_time}});
      fl.push_back({{"waypoints", wps}});
    }
    j["flights"] = fl;
  }
  return j;
}

/// Raw simulator output: ground truth alongside the observed sample.
struct RawSample {
  DroneState truth;
  SensingSample sample;
  phy::PowerVector power64;
};

struct RawDataset {
  std::vector<RawSample> samples;
  long generated = 0;  // before FoV filtering
  long dropped_invisible = 0;

  SampleTable sample_table() const {
    SampleTable out;
    out.reserve(samples.size());
    for (const auto& r : samples) out.push_back(r.sample);
    return out;
  }
};

/// Whether a point is a valid random waypoint: in the arena, above min height, in view and in range.
inline bool admissible_waypoint(const Eigen::Vector3d& p, const ScenarioConfig& c) {
  return c.arena.contains(p) && p.z() >= c.generator.min_height && p.z() <= c.generator.max_height &&
         p.norm() >= c.generator.min_range && in_view(p, c.camera);
}

/// Random waypoint plan long enough to cover `steps` samples. Waypoints are admissible, and since
/// the admissible region is convex, every straight leg between them stays in view.
template <typename Rng>
FlightPlan random_flight_plan(const ScenarioConfig& c, long steps, Rng& rng) {
  std::uniform_real_distribution<double> ue(c.arena.east_min, c.arena.east_max);
  std::uniform_real_distribution<double> un(c.arena.north_min, c.arena.north_max);
  std::uniform_real_distribution<double> uh(c.generator.min_height, std::min(c.generator.max_height, c.arena.max_height));
  std::uniform_real_distribution<double> us(c.generator.min_speed, c.limits.max_speed);
  std::uniform_real_distribution<double> uhov(c.generator.hover_min, c.generator.hover_max);
  std::bernoulli_distribution hover(c.generator.hover_probability);

  const auto draw_point = [&]() {
    for (int attempt = 0; attempt < 100000; ++attempt) {
      const Eigen::Vector3d p(ue(rng), un(rng), uh(rng));
      if (admissible_waypoint(p, c)) return p;
    }
    throw ConfigError("scenario", "camera view and arena leave no admissible waypoint region");
  };

  FlightPlan plan;
  plan.waypoints.push_back({draw_point(), 0.0, 0.0});
  const double needed = steps * c.step_period;
  double duration = 0.0;
  while (duration <= needed) {
    Waypoint wp;
    wp.position = draw_point();
    wp.speed = us(rng);
    wp.hover_time = hover(rng) ? uhov(rng) : 0.0;
    duration += motion::make_move_leg(0.0, plan.waypoints.back().position, wp.position, wp.speed,
                                           c.limits.max_accel)
                    .duration +
                wp.hover_time;
    plan.waypoints.push_back(wp);
  }
  return plan;
}

/// Turns one flight's states into labeled samples (including invisible ones).
template <typename Rng>
std::vector<RawSample> observe_flight(const std::vector<DroneState>& states, int flight_id, const ScenarioConfig& c,
                                      const phy::BeamCodebook& codebook, Rng& sensor_rng) {
  std::vector<RawSample> out;
  out.reserve(states.size());
  std::normal_distribution<double> det(0.0, 1.0);
  for (const auto& s : states) {
    RawSample r;
    r.truth = s;
    auto& smp = r.sample;
    smp.flight_id = flight_id;
    smp.t = static_cast<int>(s.timestamp_index);
    const Eigen::Vector2d gps = observe_gps(s, c.gps, sensor_rng);
    smp.gps_e = gps.x();
    smp.gps_n = gps.y();
    smp.height = s.height();
    smp.distance = s.distance();
    smp.speed = s.speed();
    smp.pitch = s.pitch;
    smp.roll = s.roll;
    smp.visual = project_camera(s, c.camera);
    const double du = det(sensor_rng), dv = det(sensor_rng);
    if (smp.visual.visible && c.detection_noise > 0.0) {
      smp.visual.center_u = std::clamp(smp.visual.center_u + c.detection_noise * du, 0.0, 1.0);
      smp.visual.center_v = std::clamp(smp.visual.center_v + c.detection_noise * dv, 0.0, 1.0);
    }
    const auto bt = train_beam(s, c.channel, codebook);
    r.power64 = bt.power64;
    std::copy(bt.power32.powers.begin(), bt.power32.powers.end(), smp.power32.begin());
    smp.label = bt.label;
    out.push_back(std::move(r));
  }
  return out;
}

/// Generates every flight, labels each step by exhaustive beam training and drops samples
/// where the drone is outside the camera's field of view.
inline RawDataset synthesize_dataset(const ScenarioConfig& config, std::uint64_t rng_seed) {
  config.validate();
  const auto codebook =
      phy::make_codebook(config.channel.num_antennas, config.channel.num_beams, config.channel.element_spacing);
  RawDataset out;
  const int n_flights = config.flights.empty() ? config.num_flights : static_cast<int>(config.flights.size());
  for (int f = 0; f < n_flights; ++f) {
    std::mt19937_64 plan_rng(mix_seed(rng_seed, 4 * static_cast<std::uint64_t>(f)));
    std::mt19937_64 sensor_rng(mix_seed(rng_seed ^ config.gps.seed, 4 * static_cast<std::uint64_t>(f) + 1));
    const std::uint64_t attitude_seed = mix_seed(rng_seed, 4 * static_cast<std::uint64_t>(f) + 2);

    std::vector<DroneState> states;
    if (config.flights.empty()) {
      const FlightPlan plan = random_flight_plan(config, config.steps_per_flight, plan_rng);
      states = simulate_trajectory(plan, config.step_period, attitude_seed, config.arena, config.limits, config.tilt,
                                   config.steps_per_flight);
    } else {
      try {
        states = simulate_trajectory(config.flights[f], config.step_period, attitude_seed, config.arena,
                                     config.limits, config.tilt);
      } catch (const InvalidInput& e) {
        throw ConfigError("scenario.flights[" + std::to_string(f) + "]", e.what());
      }
    }
    for (auto& r : observe_flight(states, f, config, codebook, sensor_rng)) {
      ++out.generated;
      if (!r.sample.visual.visible && !config.keep_invisible) {
        ++out.dropped_invisible;
        continue;
      }
      out.samples.push_back(std::move(r));
    }
  }
  return out;
}

/// Ground-truth dump for inspection (not read back by the pipeline).
inline void write_truth_csv(const RawDataset& data, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open " + path + " for writing");
  os.precision(17);
  os << "flight_id,t,east,north,up,ve,vn,vu,yaw,pitch,roll,label\n";
  for (const auto& r : data.samples) {
    const auto& s = r.truth;
    os << r.sample.flight_id << ',' << r.sample.t << ',' << s.position.x() << ',' << s.position.y() << ','
       << s.position.z() << ',' << s.velocity.x() << ',' << s.velocity.y() << ',' << s.velocity.z() << ',' << s.yaw
       << ',' << s.pitch << ',' << s.roll << ',' << r.sample.label << '\n';
  }
}

}  // namespace skybeam::sim
