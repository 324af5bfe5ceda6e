#include "bslip/simulator.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

#include "bslip/error.hpp"

namespace bslip::sim {

namespace {

enum Stream : std::uint64_t { kStart = 1, kSensor = 2, kVibration = 3, kGlitch = 4 };

double wrap(double d, double period) {
  return d - period * std::floor(d / period + 0.5);
}

/// Seconds spent slipping in [0, t).
double slip_time(const SimConfig& c, double t) {
  if (c.motion == Motion::Static || t <= 0.0) return 0.0;
  const double cycle = 2.0 * c.phase_s;
  const double full = std::floor(t / cycle);
  const double rest = t - full * cycle;
  return full * c.phase_s + std::max(0.0, rest - c.phase_s);
}

double surface_speed_at(const SimConfig& c, double t) {
  if (!slip_active(c, t)) return 0.0;
  if (c.motion == Motion::Translation) return c.speed_mps;
  return c.rotation_radius_m * std::abs(c.angular_rate) +
         c.r_eff * std::abs(c.angular_rate);
}

}  // namespace

void validate(const SimConfig& c) {
  if (c.duration_s <= 0.0) throw ConfigError("simulation duration must be positive");
  if (c.phase_s <= 0.0) throw ConfigError("phase length must be positive");
  const bool moving_speed = c.speed_mps > 0.0;
  if (moving_speed != (c.motion == Motion::Translation)) {
    throw ConfigError("speed must be positive exactly for translation traces");
  }
  if (c.motion == Motion::Rotation && c.angular_rate == 0.0) {
    throw ConfigError("rotation traces need a nonzero angular rate");
  }
  if (c.noise.band_lo_hz <= 0.0 || c.noise.band_hi_hz <= c.noise.band_lo_hz ||
      c.noise.band_hi_hz >= kSampleRateHz / 2.0) {
    throw ConfigError("vibration band must satisfy 0 < lo < hi < 50 Hz");
  }
}

std::array<double, 2> taxel_position(std::size_t channel, double pitch_m) {
  const double row = static_cast<double>(channel / kGridCols);
  const double col = static_cast<double>(channel % kGridCols);
  return {(col - 1.0) * pitch_m, (row - 0.5) * pitch_m};
}

double footprint(Curvature curvature, double dx, double dy, double pitch_m) {
  const double sigma = 0.6 * pitch_m;
  switch (curvature) {
    case Curvature::Planar: {
      const double r = std::hypot(dx, dy) / (5.0 * pitch_m);
      return 1.0 / (1.0 + std::pow(r, 8));
    }
    case Curvature::Spherical:
      return std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
    case Curvature::CylX:  // ridge along x
      return std::exp(-(dy * dy) / (2.0 * sigma * sigma));
    case Curvature::CylY:
      return std::exp(-(dx * dx) / (2.0 * sigma * sigma));
  }
  return 0.0;
}

bool slip_active(const SimConfig& c, double t) {
  if (c.motion == Motion::Static || t < 0.0) return false;
  const double cycle = 2.0 * c.phase_s;
  return t - cycle * std::floor(t / cycle) >= c.phase_s;
}

std::array<double, 2> footprint_offset(const SimConfig& c, double t) {
  const double moving = slip_time(c, t);
  if (c.motion == Motion::Translation) {
    const double a = c.direction_deg * std::numbers::pi / 180.0;
    return {c.speed_mps * moving * std::cos(a), c.speed_mps * moving * std::sin(a)};
  }
  if (c.motion == Motion::Rotation) {
    const double phi = c.angular_rate * moving;
    return {c.rotation_radius_m * (std::cos(phi) - 1.0),
            c.rotation_radius_m * std::sin(phi)};
  }
  return {0.0, 0.0};
}

VelocitySample velocity_at(const SimConfig& c, double t) {
  VelocitySample v;
  v.t_ns = static_cast<std::int64_t>(std::llround(t * 1e9));
  v.omega = 0.0;
  if (!slip_active(c, t)) return v;
  if (c.motion == Motion::Translation) {
    const double a = c.direction_deg * std::numbers::pi / 180.0;
    v.vx = c.speed_mps * std::cos(a);
    v.vy = c.speed_mps * std::sin(a);
  } else {
    const double phi = c.angular_rate * slip_time(c, t);
    v.vx = -c.rotation_radius_m * c.angular_rate * std::sin(phi);
    v.vy = c.rotation_radius_m * c.angular_rate * std::cos(phi);
    v.omega = c.angular_rate;
  }
  return v;
}

std::vector<double> bandpass_fir(double lo_hz, double hi_hz, double fs_hz,
                                 std::size_t taps) {
  if (taps % 2 == 0) ++taps;
  const double m = static_cast<double>(taps - 1) / 2.0;
  const double fl = lo_hz / fs_hz, fh = hi_hz / fs_hz;
  auto sinc_lp = [](double fc, double n) {
    return n == 0.0 ? 2.0 * fc
                    : std::sin(2.0 * std::numbers::pi * fc * n) / (std::numbers::pi * n);
  };
  std::vector<double> h(taps);
  double energy = 0.0;
  for (std::size_t i = 0; i < taps; ++i) {
    const double n = static_cast<double>(i) - m;
    const double hann =
        0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                             static_cast<double>(taps - 1));
    h[i] = (sinc_lp(fh, n) - sinc_lp(fl, n)) * hann;
    energy += h[i] * h[i];
  }
  for (auto& x : h) x /= std::sqrt(energy);
  return h;
}

Recording simulate(const SimConfig& c) {
  validate(c);
  const auto frames = static_cast<std::size_t>(std::llround(c.duration_s * kSampleRateHz));
  const Rng root = Rng(c.seed).derive({c.trace_id});

  Rng start_rng = root.derive({kStart});
  const std::array<double, 2> start{(start_rng.uniform() - 0.5) * c.pitch_m,
                                    (start_rng.uniform() - 0.5) * c.pitch_m};

  const auto fir = bandpass_fir(c.noise.band_lo_hz, c.noise.band_hi_hz, kSampleRateHz);
  const double glitch_p = c.noise.glitch_rate_hz / kSampleRateHz;

  Recording rec;
  rec.meta.source_id = c.source_id;
  rec.meta.curvature = c.curvature;
  rec.meta.motion = c.motion;
  rec.meta.speed_mps = c.speed_mps;
  rec.meta.direction_deg = c.motion == Motion::Translation ? c.direction_deg : 0.0;
  rec.meta.angular_rate = c.motion == Motion::Rotation ? c.angular_rate : 0.0;
  rec.frames.resize(frames);

  for (std::size_t ch = 0; ch < kTaxels; ++ch) {
    Rng sensor = root.derive({kSensor, ch});
    Rng vib_rng = root.derive({kVibration, ch});
    Rng glitch = root.derive({kGlitch, ch});
    std::vector<double> white(frames + fir.size());
    for (auto& w : white) w = vib_rng.normal();
    const auto g = taxel_position(ch, c.pitch_m);

    for (std::size_t i = 0; i < frames; ++i) {
      const double t = static_cast<double>(i) / kSampleRateHz;
      const auto off = footprint_offset(c, t);
      const double dx = wrap(g[0] - (start[0] + off[0]), c.wrap_m);
      const double dy = wrap(g[1] - (start[1] + off[1]), c.wrap_m);
      double p = c.offset + c.amplitude * footprint(c.curvature, dx, dy, c.pitch_m);

      const double speed = surface_speed_at(c, t);
      if (speed > 0.0) {
        double vib = 0.0;
        for (std::size_t j = 0; j < fir.size(); ++j) vib += fir[j] * white[i + fir.size() - 1 - j];
        p += c.noise.vibration_gain * speed * vib;
      }
      p += c.noise.sensor_sigma * sensor.normal();
      if (glitch_p > 0.0 && glitch.bernoulli(glitch_p)) {
        const double sign = glitch.bernoulli(0.5) ? 1.0 : -1.0;
        p += sign * c.noise.glitch_amplitude * (0.5 + glitch.uniform());
      }
      rec.frames[i].t_ns = static_cast<std::int64_t>(i) * kNominalPeriodNs;
      rec.frames[i].p[ch] = p;
    }
  }

  // Ground-truth velocity at 125 Hz, covering every pressure frame.
  constexpr std::int64_t kVelocityPeriodNs = 8'000'000;
  const std::int64_t last = rec.frames.empty() ? 0 : rec.frames.back().t_ns;
  for (std::int64_t t = 0;; t += kVelocityPeriodNs) {
    rec.velocity.push_back(velocity_at(c, static_cast<double>(t) * 1e-9));
    if (t >= last) break;
  }
  return rec;
}

std::vector<SimConfig> condition_matrix(std::uint64_t seed, double duration_s,
                                        const SimNoise& noise) {
  if (duration_s < 2.0) throw ConfigError("per-condition duration must be at least 2 s");
  static constexpr std::array<Curvature, 4> kCurvatures{
      Curvature::Planar, Curvature::Spherical, Curvature::CylX, Curvature::CylY};
  std::vector<SimConfig> out;
  auto base = [&](Curvature cv, Motion m) {
    SimConfig c;
    c.curvature = cv;
    c.motion = m;
    c.duration_s = duration_s;
    c.seed = seed;
    c.noise = noise;
    c.trace_id = out.size();
    return c;
  };
  char id[64];
  for (auto cv : kCurvatures) {
    for (double speed : kSpeeds) {
      for (int dir = 0; dir < 360; dir += 45) {
        SimConfig c = base(cv, Motion::Translation);
        c.speed_mps = speed;
        c.direction_deg = dir;
        std::snprintf(id, sizeof id, "%s_t%03d_d%03d", std::string(to_string(cv)).c_str(),
                      static_cast<int>(std::lround(speed * 1000)), dir);
        c.source_id = id;
        out.push_back(c);
      }
    }
  }
  for (auto cv : kCurvatures) {
    SimConfig c = base(cv, Motion::Rotation);
    c.angular_rate = kRotationRate;
    c.source_id = std::string(to_string(cv)) + "_rot";
    out.push_back(c);
  }
  for (auto cv : kCurvatures) {
    SimConfig c = base(cv, Motion::Static);
    c.source_id = std::string(to_string(cv)) + "_static";
    out.push_back(c);
  }
  return out;
}

std::vector<Recording> generate_matrix(std::uint64_t seed, double duration_s,
                                       const SimNoise& noise) {
  std::vector<Recording> out;
  for (const auto& c : condition_matrix(seed, duration_s, noise)) out.push_back(simulate(c));
  return out;
}

}  // namespace bslip::sim
