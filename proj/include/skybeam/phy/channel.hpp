#pragma once

// Geometric wideband mmWave channel, ULA steering, oversampled DFT codebook and
// exhaustive beam sweep.

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <span>
#include <string>
#include <vector>

#include "skybeam/error.hpp"
#include "skybeam/units.hpp"

namespace skybeam::phy {

using cplx = std::complex<double>;

/// One propagation path: complex gain (path loss included), excess delay and angles of arrival.
struct PathComponent {
  cplx gain{0.0, 0.0};
  double delay = 0.0;      // seconds
  double azimuth = 0.0;    // radians, from the array axis
  double elevation = 0.0;  // radians
};

struct OfdmConfig {
  int num_subcarriers = 64;
  int cyclic_prefix_len = 16;
  double sample_time = 2.5e-9;  // 400 MHz
  double noise_variance = 1.0;
  double symbol_power = 1.0;
  // Constant multiplier applied to every swept power. It never changes the argmax.
  double snr_scale = 1.0;

  void validate() const {
    detail::require(num_subcarriers >= 1, "OfdmConfig: num_subcarriers must be >= 1");
    detail::require(cyclic_prefix_len >= 1, "OfdmConfig: cyclic_prefix_len must be >= 1");
    detail::require(sample_time > 0.0, "OfdmConfig: sample_time must be > 0");
    detail::require(noise_variance >= 0.0, "OfdmConfig: noise_variance must be >= 0");
    detail::require(symbol_power > 0.0, "OfdmConfig: symbol_power must be > 0");
    detail::require(snr_scale > 0.0 && std::isfinite(snr_scale), "OfdmConfig: snr_scale must be positive");
  }

  double max_delay() const { return cyclic_prefix_len * sample_time; }
};

/// Per-subcarrier channel vectors; column k holds h_k.
struct ChannelState {
  Eigen::MatrixXcd per_subcarrier;
  long timestamp_index = 0;

  int num_antennas() const { return static_cast<int>(per_subcarrier.rows()); }
  int num_subcarriers() const { return static_cast<int>(per_subcarrier.cols()); }
  Eigen::VectorXcd subcarrier(int k) const { return per_subcarrier.col(k); }
};

/// Q unit-norm beamforming vectors stored column-wise (M x Q), ordered by grid point.
struct BeamCodebook {
  Eigen::MatrixXcd beams;

  int num_antennas() const { return static_cast<int>(beams.rows()); }
  int size() const { return static_cast<int>(beams.cols()); }
};

struct PowerVector {
  std::vector<double> powers;
  int best_index = 0;

  int size() const { return static_cast<int>(powers.size()); }
};

/// Index of the maximum entry, lowest index on exact ties.
inline int optimal_beam(std::span<const double> powers) {
  detail::require(!powers.empty(), "optimal_beam: empty power vector");
  int best = 0;
  for (int i = 1; i < static_cast<int>(powers.size()); ++i) {
    if (powers[i] > powers[best]) best = i;
  }
  return best;
}

inline int optimal_beam(const PowerVector& p) { return optimal_beam(std::span<const double>(p.powers)); }

inline PowerVector make_power_vector(std::vector<double> powers) {
  PowerVector out;
  out.best_index = optimal_beam(std::span<const double>(powers));
  out.powers = std::move(powers);
  return out;
}

/// ULA steering vector, entry m = exp(j 2 pi spacing m cos(az) cos(el)).
inline Eigen::VectorXcd array_response(double azimuth, double elevation, int num_antennas,
                                       double element_spacing = 0.5) {
  detail::require(std::isfinite(azimuth) && std::isfinite(elevation), "array_response: non-finite angle");
  detail::require(num_antennas >= 1, "array_response: num_antennas must be >= 1");
  detail::require(element_spacing > 0.0 && std::isfinite(element_spacing), "array_response: spacing must be > 0");
  const double phase_step = 2.0 * units::kPi * element_spacing * std::cos(azimuth) * std::cos(elevation);
  Eigen::VectorXcd a(num_antennas);
  for (int m = 0; m < num_antennas; ++m) a[m] = std::polar(1.0, phase_step * m);
  return a;
}

/// Steering vector addressed directly by the direction cosine along the array axis.
inline Eigen::VectorXcd array_response_cosine(double direction_cosine, int num_antennas,
                                              double element_spacing = 0.5) {
  detail::require(std::isfinite(direction_cosine), "array_response: non-finite direction cosine");
  detail::require(num_antennas >= 1, "array_response: num_antennas must be >= 1");
  const double phase_step = 2.0 * units::kPi * element_spacing * direction_cosine;
  Eigen::VectorXcd a(num_antennas);
  for (int m = 0; m < num_antennas; ++m) a[m] = std::polar(1.0, phase_step * m);
  return a;
}

/// Normalized sinc pulse sampled at x seconds: sin(pi x/Ts) / (pi x/Ts).
inline double sinc_pulse(double x, double sample_time) {
  const double arg = x / sample_time;
  if (arg == 0.0) return 1.0;
  // Integer offsets are exact zeros of the pulse.
  if (arg == std::round(arg)) return 0.0;
  return std::sin(units::kPi * arg) / (units::kPi * arg);
}

/// Grid point (direction cosine) of beam q in a Q-beam codebook: -1 + 2q/Q.
inline double codebook_grid_cosine(int q, int num_beams) { return -1.0 + 2.0 * q / num_beams; }

inline BeamCodebook make_codebook(int num_antennas, int num_beams, double element_spacing = 0.5) {
  detail::require(num_antennas >= 1, "make_codebook: num_antennas must be >= 1");
  detail::require(num_beams >= num_antennas, "make_codebook: num_beams must be >= num_antennas");
  BeamCodebook cb;
  cb.beams.resize(num_antennas, num_beams);
  const double norm = 1.0 / std::sqrt(static_cast<double>(num_antennas));
  for (int q = 0; q < num_beams; ++q) {
    cb.beams.col(q) = array_response_cosine(codebook_grid_cosine(q, num_beams), num_antennas, element_spacing)
                          .conjugate() * norm;
  }
  return cb;
}

inline void validate_path(const PathComponent& p, const OfdmConfig& cfg) {
  detail::require(std::isfinite(p.gain.real()) && std::isfinite(p.gain.imag()), "path gain must be finite");
  detail::require(std::isfinite(p.delay) && p.delay >= 0.0, "path delay must be >= 0");
  if (p.delay >= cfg.max_delay()) {
    throw CyclicPrefixViolation("path delay " + std::to_string(p.delay) + " s exceeds cyclic prefix " +
                                std::to_string(cfg.max_delay()) + " s");
  }
}

/// h_k = sum_d sum_l gain_l e^{-j 2 pi k d / K} p(d Ts - tau_l) a(az_l, el_l), k = 0..K-1.
inline ChannelState build_channel(std::span<const PathComponent> paths, const OfdmConfig& cfg, int num_antennas,
                                  double element_spacing = 0.5) {
  cfg.validate();
  detail::require(num_antennas >= 1, "build_channel: num_antennas must be >= 1");
  const int K = cfg.num_subcarriers;
  const int D = cfg.cyclic_prefix_len;

  // Tap-domain channel: tap_d = sum_l gain_l p(d Ts - tau_l) a_l.
  Eigen::MatrixXcd taps = Eigen::MatrixXcd::Zero(num_antennas, D);
  for (const auto& path : paths) {
    validate_path(path, cfg);
    const Eigen::VectorXcd a = array_response(path.azimuth, path.elevation, num_antennas, element_spacing);
    for (int d = 0; d < D; ++d) {
      const double pulse = sinc_pulse(d * cfg.sample_time - path.delay, cfg.sample_time);
      if (pulse != 0.0) taps.col(d) += path.gain * pulse * a;
    }
  }

  Eigen::MatrixXcd dft(D, K);
  for (int d = 0; d < D; ++d) {
    for (int k = 0; k < K; ++k) {
      // Reduce k*d mod K first so the phase stays exact for large products.
      const long kd = (static_cast<long>(k) * d) % K;
      dft(d, k) = std::polar(1.0, -2.0 * units::kPi * static_cast<double>(kd) / K);
    }
  }
  ChannelState ch;
  ch.per_subcarrier = taps * dft;
  return ch;
}

inline ChannelState build_channel(const std::vector<PathComponent>& paths, const OfdmConfig& cfg, int num_antennas,
                                  double element_spacing = 0.5) {
  return build_channel(std::span<const PathComponent>(paths), cfg, num_antennas, element_spacing);
}

/// powers[q] = (1/K) sum_k snr_scale |h_k^T f_q|^2.
inline PowerVector beam_sweep(const ChannelState& channel, const BeamCodebook& codebook, const OfdmConfig& cfg) {
  detail::require(channel.num_antennas() == codebook.num_antennas(),
                  "beam_sweep: channel has " + std::to_string(channel.num_antennas()) +
                      " antennas, codebook expects " + std::to_string(codebook.num_antennas()));
  detail::require(channel.num_subcarriers() >= 1, "beam_sweep: channel has no subcarriers");
  const Eigen::MatrixXcd combined = channel.per_subcarrier.transpose() * codebook.beams;  // K x Q
  const double scale = cfg.snr_scale / channel.num_subcarriers();
  std::vector<double> powers(codebook.size());
  for (int q = 0; q < codebook.size(); ++q) powers[q] = scale * combined.col(q).squaredNorm();
  return make_power_vector(std::move(powers));
}

/// Keep every other beam of a 64-beam sweep (indices 0, 2, ..., 62).
inline PowerVector downsample_power(const PowerVector& p64) {
  detail::require(p64.size() == 64, "downsample_power: expected 64 powers, got " + std::to_string(p64.size()));
  std::vector<double> out(32);
  for (int i = 0; i < 32; ++i) out[i] = p64.powers[2 * i];
  return make_power_vector(std::move(out));
}

inline double to_db(double linear) { return 10.0 * std::log10(linear); }

}  // namespace skybeam::phy
