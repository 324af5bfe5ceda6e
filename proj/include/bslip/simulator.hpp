#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "bslip/data.hpp"

namespace bslip::sim {

struct SimNoise {
  double sensor_sigma = 0.2;
  double band_lo_hz = 15.0;
  double band_hi_hz = 45.0;
  /// Vibration RMS per m/s of surface speed.
  double vibration_gain = 40.0;
  /// Single-sample readout glitches, per channel.
  double glitch_rate_hz = 0.1;
  double glitch_amplitude = 20.0;
};

struct SimConfig {
  Curvature curvature = Curvature::Planar;
  Motion motion = Motion::Static;
  double speed_mps = 0.0;      // translation only
  double direction_deg = 0.0;  // translation only
  double angular_rate = 0.0;   // rotation only, rad/s
  double duration_s = 12.0;
  std::uint64_t seed = 1;
  std::uint64_t trace_id = 0;
  std::string source_id;
  SimNoise noise;

  double amplitude = 20.0;   // footprint peak pressure
  double offset = 100.0;     // ambient reading
  double pitch_m = 0.006;    // taxel spacing
  double wrap_m = 0.030;     // period of the footprint path in x and y
  /// Moving traces alternate static and slip phases of this length,
  /// starting static.
  double phase_s = 2.0;
  double rotation_radius_m = 0.004;
  double r_eff = 0.02;       // surface speed per rad/s, as in labeling
};

/// Throws ConfigError when the motion fields disagree with the motion type.
void validate(const SimConfig& config);

/// Taxel position (x along columns, y along rows), centred on the grid.
std::array<double, 2> taxel_position(std::size_t channel, double pitch_m);

/// Footprint height at displacement (dx, dy) from the contact centre.
double footprint(Curvature curvature, double dx, double dy, double pitch_m);

/// True while the trace is moving.
bool slip_active(const SimConfig& config, double t);

/// Unwrapped contact centre relative to its start position.
std::array<double, 2> footprint_offset(const SimConfig& config, double t);

/// Velocity of the contact centre plus angular rate at time t.
VelocitySample velocity_at(const SimConfig& config, double t);

/// Windowed-sinc band-pass taps with unit sum of squares, so white noise of
/// unit variance comes out with unit variance.
std::vector<double> bandpass_fir(double lo_hz, double hi_hz, double fs_hz,
                                 std::size_t taps = 31);

/// Pressure frames at 100 Hz, velocity samples at 125 Hz covering the same
/// span, and the annotation. Deterministic per (seed, trace_id).
Recording simulate(const SimConfig& config);

/// The condition matrix: every (curvature, speed, direction) translation
/// cell, then one rotation and one static trace per curvature.
std::vector<SimConfig> condition_matrix(std::uint64_t seed, double duration_s,
                                        const SimNoise& noise = {});

inline const std::array<double, 3> kSpeeds{0.05, 0.075, 0.1};
inline constexpr double kRotationRate = 1.0;

std::vector<Recording> generate_matrix(std::uint64_t seed, double duration_s,
                                       const SimNoise& noise = {});

}  // namespace bslip::sim
